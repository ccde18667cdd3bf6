#include "dgerc/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace dgerc::log {

namespace {
std::atomic<Level> g_level{Level::Info};
std::mutex g_mu;
constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void write(Level lvl, const std::string& msg) {
  if (lvl < g_level.load() || lvl == Level::Off) return;
  std::lock_guard lock(g_mu);
  std::cerr << "[" << kNames[static_cast<int>(lvl)] << "] " << msg << '\n';
}

}  // namespace dgerc::log
