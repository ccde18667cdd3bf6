#include "dgerc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dgerc {

std::string FdReport::summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << " checked=" << checked << " max_abs_err=" << max_abs_err
     << " max_rel_err=" << max_rel_err;
  for (const auto& f : failures) {
    os << "\n  mismatch " << f.param << "[" << f.index << "] analytic=" << f.analytic
       << " numeric=" << f.numeric;
  }
  for (const auto& b : intentionally_blocked) os << "\n  intentionally blocked: " << b;
  for (const auto& d : diagnostics) os << "\n  " << d;
  return os.str();
}

template <std::floating_point T>
FdReport finite_diff_check(const std::function<Var<T>(Tape<T>&)>& loss,
                           std::span<Parameter<T>* const> params, const FdOptions& opt) {
  FdReport report;
  for (Parameter<T>* p : params) p->zero_grad();
  {
    Tape<T> tape;
    Var<T> l = loss(tape);
    if (!std::isfinite(static_cast<double>(l.value().item()))) {
      report.passed = false;
      report.diagnostics.push_back("loss is not finite at the unperturbed point");
      return report;
    }
    tape.backward(l);
  }

  auto eval = [&]() {
    Tape<T> tape;
    return static_cast<double>(loss(tape).value().item());
  };

  for (Parameter<T>* p : params) {
    const bool blocked =
        std::find(opt.blocked.begin(), opt.blocked.end(), p->name) != opt.blocked.end();
    const std::size_t n = p->value.size();
    const std::size_t stride =
        opt.max_entries_per_param == 0 || n <= opt.max_entries_per_param
            ? 1
            : (n + opt.max_entries_per_param - 1) / opt.max_entries_per_param;
    bool numeric_nonzero = false;
    for (std::size_t i = 0; i < n; i += stride) {
      const T saved = p->value[i];
      p->value[i] = static_cast<T>(static_cast<double>(saved) + opt.eps);
      const double up = eval();
      p->value[i] = static_cast<T>(static_cast<double>(saved) - opt.eps);
      const double down = eval();
      p->value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        report.passed = false;
        report.diagnostics.push_back("non-finite loss when perturbing " + p->name + "[" +
                                     std::to_string(i) + "]");
        continue;
      }
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double analytic = static_cast<double>(p->grad[i]);
      ++report.checked;
      if (blocked) {
        if (analytic != 0.0) {
          report.passed = false;
          report.failures.push_back({p->name, i, analytic, numeric});
        }
        numeric_nonzero = numeric_nonzero || numeric != 0.0;
        continue;
      }
      const double abs_err = std::abs(analytic - numeric);
      const double scale = std::max({std::abs(analytic), std::abs(numeric)});
      const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      report.max_rel_err = std::max(report.max_rel_err, rel_err);
      if (abs_err / std::max(1.0, scale) > opt.tol) {
        report.passed = false;
        report.failures.push_back({p->name, i, analytic, numeric});
      }
    }
    if (blocked && numeric_nonzero) report.intentionally_blocked.push_back(p->name);
  }
  return report;
}

template FdReport finite_diff_check<float>(const std::function<Var<float>(Tape<float>&)>&,
                                           std::span<Parameter<float>* const>, const FdOptions&);
template FdReport finite_diff_check<double>(const std::function<Var<double>(Tape<double>&)>&,
                                            std::span<Parameter<double>* const>,
                                            const FdOptions&);

}  // namespace dgerc
