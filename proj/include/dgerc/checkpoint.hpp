#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dgerc/optim.hpp"

namespace dgerc {

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

// On disk: "DGERCKP1", u64 header length, JSON header, then the raw doubles of
// params, adam_m, adam_v and best, in header order.
struct Checkpoint {
  int epoch = 0;  // completed epochs
  std::string config_hash;
  std::string config_text;
  std::string precision;
  std::uint64_t adam_steps = 0;
  std::map<std::string, std::string> rng;
  int best_epoch = -1;
  double best_score = -1.0;
  std::vector<NamedTensor> params, adam_m, adam_v, best;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

template <std::floating_point T>
std::vector<NamedTensor> snapshot(const ParamStore<T>& store);

// Throws ConfigError when names or shapes disagree with the store.
template <std::floating_point T>
void restore(ParamStore<T>& store, const std::vector<NamedTensor>& tensors);

template <std::floating_point T>
void store_optimizer(Checkpoint& ck, const ParamStore<T>& store, const Adam<T>& adam);
template <std::floating_point T>
void restore_optimizer(Adam<T>& adam, const ParamStore<T>& store, const Checkpoint& ck);

}  // namespace dgerc
