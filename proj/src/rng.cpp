#include "dgerc/rng.hpp"

#include <sstream>
#include <stdexcept>

namespace dgerc {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw std::invalid_argument("Rng::restore: malformed engine state");
}

}  // namespace dgerc
