#include "dgerc/classifier.hpp"

#include <cmath>

#include "dgerc/metrics.hpp"
#include "dgerc/ops.hpp"

namespace dgerc {

template <std::floating_point T>
Var<T> modality_logits(Var<T> g, Var<T> weight, Var<T> bias, double dropout, Rng* rng) {
  Var<T> x = ops::relu(ops::add(ops::matmul(g, weight), bias));
  if (dropout > 0.0) {
    if (rng == nullptr) throw std::logic_error("head dropout needs an rng");
    x = ops::dropout(x, dropout, *rng);
  }
  return x;
}

template <std::floating_point T>
Fused<T> fuse_and_predict(Var<T> t, Var<T> v, Var<T> a) {
  Fused<T> f;
  f.logits = ops::add(ops::add(t, v), a);
  f.log_probs = ops::log_softmax(f.logits);
  f.probs = f.log_probs.value();
  for (auto& p : f.probs.values()) p = std::exp(p);
  f.pred = argmax_last(f.probs);
  return f;
}

template <std::floating_point T>
Var<T> masked_cross_entropy(Var<T> log_probs, const IdTensor& labels, const MaskTensor& mask) {
  return ops::masked_nll(log_probs, labels, mask);
}

template <std::floating_point T>
LossBreakdown<T> total_loss(Var<T> fused_log_probs,
                            const std::array<Var<T>, kModalities>& unimodal_log_probs,
                            const IdTensor& labels, const MaskTensor& mask, bool alpha_squared) {
  LossBreakdown<T> out;
  Var<T> total = masked_cross_entropy(fused_log_probs, labels, mask);
  out.fusion = static_cast<double>(total.value()[0]);
  for (std::size_t m = 0; m < kModalities; ++m) {
    Var<T> lm = masked_cross_entropy(unimodal_log_probs[m], labels, mask);
    out.unimodal[m] = static_cast<double>(lm.value()[0]);
    out.alpha[m] = out.unimodal[m] / 10.0;
    Var<T> term = alpha_squared ? ops::mul(lm, ops::scale(lm, T(0.1)))
                                : ops::scale(lm, static_cast<T>(out.alpha[m]));
    total = ops::add(total, term);
  }
  out.total = total;
  return out;
}

template <std::floating_point T>
Classifier<T>::Classifier(const ClassifierConfig& cfg, ParamStore<T>& store, Rng& rng)
    : cfg_(cfg), store_(&store) {
  if (cfg.classes < 2) throw ConfigError("need at least 2 classes");
  for (std::size_t m = 0; m < kModalities; ++m) {
    const std::string p = std::string("cls.") + kModalityTags[m] + ".";
    store.add(p + "W", init::glorot<T>(cfg.d_h, cfg.classes, rng));
    store.add(p + "b", Tensor<T>({cfg.classes}));
  }
}

template <std::floating_point T>
std::array<Var<T>, kModalities> Classifier<T>::heads(Tape<T>& tape,
                                                     const std::array<Var<T>, kModalities>& g,
                                                     bool training, Rng* dropout_rng) const {
  std::array<Var<T>, kModalities> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    const std::string p = std::string("cls.") + kModalityTags[m] + ".";
    out[m] = modality_logits(g[m], tape.param(store_->get(p + "W")), tape.param(store_->get(p + "b")),
                             training ? cfg_.dropout : 0.0, dropout_rng);
  }
  return out;
}

#define DGERC_INSTANTIATE_CLS(T)                                                             \
  template Var<T> modality_logits<T>(Var<T>, Var<T>, Var<T>, double, Rng*);                  \
  template Fused<T> fuse_and_predict<T>(Var<T>, Var<T>, Var<T>);                             \
  template Var<T> masked_cross_entropy<T>(Var<T>, const IdTensor&, const MaskTensor&);       \
  template LossBreakdown<T> total_loss<T>(Var<T>, const std::array<Var<T>, kModalities>&,    \
                                          const IdTensor&, const MaskTensor&, bool);         \
  template class Classifier<T>;

DGERC_INSTANTIATE_CLS(float)
DGERC_INSTANTIATE_CLS(double)

#undef DGERC_INSTANTIATE_CLS

}  // namespace dgerc
