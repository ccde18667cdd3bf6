#include "dgerc/balance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dgerc/log.hpp"
#include "dgerc/metrics.hpp"
#include "dgerc/ops.hpp"

namespace dgerc {

void BalanceConfig::validate() const {
  if (q_base < 0.0 || q_base > 1.0) throw ConfigError("q_base must be in [0,1]");
  if (p_exe < 0.0 || p_exe > 1.0) throw ConfigError("p_exe must be in [0,1]");
  if (!(epsilon > 0.0)) throw ConfigError("balance epsilon must be > 0");
  if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
}

double inverse_frequency_score(const std::vector<int>& labels, const std::vector<int>& preds,
                            std::size_t n_classes) {
  if (labels.empty()) {
    log::warn("modality score requested on a batch without valid utterances; using 0");
    return 0.0;
  }
  Confusion cm(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], preds[i]);
  const double n = static_cast<double>(labels.size());
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const ClassStats s = class_stats(cm, c);
    if (!s.present) continue;
    const double w = n / static_cast<double>(s.support);
    num += w * s.precision * s.recall;
    den += w;
  }
  return num / den;
}

template <typename T>
double modality_f1(const Tensor<T>& logits, const IdTensor& labels, const MaskTensor& mask) {
  const auto preds = argmax_last(logits);
  std::vector<int> y, p;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    y.push_back(labels[i]);
    p.push_back(preds[i]);
  }
  return inverse_frequency_score(y, p, logits.dim(-1));
}

Triple dropout_probabilities(const Triple& p, const BalanceConfig& cfg, BalanceState* state) {
  Triple q{};
  BalanceState local;
  BalanceState& st = state != nullptr ? *state : local;
  st.p = p;
  for (std::size_t m = 0; m < kModalities; ++m) {
    std::array<double, kModalities - 1> r{}, rp{}, rh{};
    std::size_t k = 0;
    for (std::size_t j = 0; j < kModalities; ++j) {
      if (j == m) {
        st.r[m][j] = 0.0;
        continue;
      }
      // (p_m - p_j) / (p_j + eps): eps only guards the division, so equal
      // scores give exactly 0
      r[k] = (p[m] - p[j]) / (p[j] + cfg.epsilon);
      st.r[m][j] = r[k];
      rp[k] = std::max(r[k], 0.0);
      ++k;
    }
    const double mx = *std::max_element(rp.begin(), rp.end());
    double z = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) z += rh[i] = std::exp(rp[i] - mx);
    double avg = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) avg += rh[i] / z * r[i];
    avg /= static_cast<double>(r.size());
    st.r_bar[m] = avg;
    q[m] = std::clamp(cfg.q_base * (1.0 + cfg.lambda_scale * avg), 0.0, 1.0);
  }
  st.q = q;
  return q;
}

double compensation_theta(const Triple& q, const std::array<std::size_t, kModalities>& dims) {
  double num = 0.0, den = 0.0;
  for (std::size_t m = 0; m < kModalities; ++m) {
    num += static_cast<double>(dims[m]) * q[m];
    den += static_cast<double>(dims[m]);
  }
  return num / den;
}

bool warmup_gate(int epoch, const BalanceConfig& cfg) {
  return cfg.enabled && epoch >= cfg.warmup_epochs;
}

template <std::floating_point T>
std::array<Var<T>, kModalities> apply_balance_mask(const std::array<Var<T>, kModalities>& f,
                                                   const std::vector<std::uint8_t>& mask,
                                                   Var<T> theta) {
  const std::size_t B = f[0].value().dim(0);
  if (mask.size() != kModalities * B) {
    throw ShapeError("balance mask has " + std::to_string(mask.size()) + " entries for batch " +
                     std::to_string(B));
  }
  static const ops::CustomGradSpec<T> spec = ops::compensation_scaling_spec<T>();
  Tape<T>& tape = *theta.tape();
  std::array<Var<T>, kModalities> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    Tensor<T> keep({B, 1, 1});
    for (std::size_t b = 0; b < B; ++b) keep[b] = mask[m * B + b] ? T(1) : T(0);
    Var<T> dropped = ops::mul(f[m], tape.constant(std::move(keep)));
    out[m] = ops::custom_grad_apply(spec, {dropped, theta});
  }
  return out;
}

template <std::floating_point T>
std::array<Var<T>, kModalities> apply_modality_dropout(const std::array<Var<T>, kModalities>& f,
                                                       const Triple& q, const BalanceConfig& cfg,
                                                       Rng& rng, BalanceState& st) {
  const std::size_t B = f[0].value().dim(0);
  st.q = q;
  st.applied = false;
  st.degenerate = false;
  st.theta = 0.0;
  st.mask.assign(kModalities * B, 1);
  st.u.assign(B, 1);
  if (!rng.bernoulli(cfg.p_exe)) return f;
  std::array<std::size_t, kModalities> dims{};
  for (std::size_t m = 0; m < kModalities; ++m) dims[m] = f[m].value().dim(-1);
  const double theta = compensation_theta(q, dims);
  if (theta >= 1.0) {
    std::ostringstream os;
    os << "modality dropout skipped: theta=" << theta << " (q=" << q[0] << "," << q[1] << ","
       << q[2] << ")";
    log::warn(os.str());
    st.degenerate = true;
    return f;
  }
  for (std::size_t m = 0; m < kModalities; ++m)
    for (std::size_t b = 0; b < B; ++b) st.mask[m * B + b] = rng.bernoulli(1.0 - q[m]) ? 1 : 0;
  for (std::size_t b = 0; b < B; ++b) {
    st.u[b] = 0;
    for (std::size_t m = 0; m < kModalities; ++m) st.u[b] |= st.mask[m * B + b];
  }
  st.theta = theta;
  st.applied = true;
  Tape<T>& tape = *f[0].tape();
  return apply_balance_mask(f, st.mask, tape.constant(Tensor<T>::scalar(static_cast<T>(theta))));
}

template double modality_f1<float>(const Tensor<float>&, const IdTensor&, const MaskTensor&);
template double modality_f1<double>(const Tensor<double>&, const IdTensor&, const MaskTensor&);
template std::array<Var<float>, kModalities> apply_balance_mask<float>(
    const std::array<Var<float>, kModalities>&, const std::vector<std::uint8_t>&, Var<float>);
template std::array<Var<double>, kModalities> apply_balance_mask<double>(
    const std::array<Var<double>, kModalities>&, const std::vector<std::uint8_t>&, Var<double>);
template std::array<Var<float>, kModalities> apply_modality_dropout<float>(
    const std::array<Var<float>, kModalities>&, const Triple&, const BalanceConfig&, Rng&,
    BalanceState&);
template std::array<Var<double>, kModalities> apply_modality_dropout<double>(
    const std::array<Var<double>, kModalities>&, const Triple&, const BalanceConfig&, Rng&,
    BalanceState&);

}  // namespace dgerc
