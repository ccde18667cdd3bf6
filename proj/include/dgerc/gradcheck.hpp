#pragma once

#include <concepts>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dgerc/tape.hpp"

namespace dgerc {

struct FdOptions {
  double eps = 1e-6;
  double tol = 1e-3;
  // Parameters whose analytic gradient is intentionally zero. They are
  // checked for an exactly-zero analytic gradient instead of FD agreement.
  std::vector<std::string> blocked;
  // 0 checks every entry; otherwise a deterministic stride sample per parameter.
  std::size_t max_entries_per_param = 0;
};

struct FdMismatch {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct FdReport {
  std::size_t checked = 0;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  bool passed = true;
  std::vector<FdMismatch> failures;
  // Blocked parameters whose numeric gradient is nonzero (expected).
  std::vector<std::string> intentionally_blocked;
  std::vector<std::string> diagnostics;

  std::string summary() const;
};

// Central-difference check of the gradient of a scalar loss with respect to
// each entry of `params`. `loss` records the loss on the given tape; it must
// be deterministic in the parameter values. An entry passes when
// |analytic - numeric| / max(1, |analytic|, |numeric|) <= tol.
template <std::floating_point T>
FdReport finite_diff_check(const std::function<Var<T>(Tape<T>&)>& loss,
                           std::span<Parameter<T>* const> params, const FdOptions& opt);

}  // namespace dgerc
