#pragma once

#include <array>
#include <vector>

#include "dgerc/data.hpp"
#include "dgerc/params.hpp"

namespace dgerc {

struct ClassifierConfig {
  std::size_t d_h = 32;
  std::size_t classes = 6;
  double dropout = 0.1;
  bool alpha_squared = false;  // differentiate through alpha_m = L_m / 10
};

// logits = Dropout(ReLU(g W + b)); no output nonlinearity. rng may be null
// when dropout is 0.
template <std::floating_point T>
Var<T> modality_logits(Var<T> g, Var<T> weight, Var<T> bias, double dropout, Rng* rng);

template <std::floating_point T>
struct Fused {
  Var<T> logits;     // O = t + v + a
  Var<T> log_probs;  // P
  Tensor<T> probs;   // softmax(O)
  std::vector<int> pred;
};

template <std::floating_point T>
Fused<T> fuse_and_predict(Var<T> t, Var<T> v, Var<T> a);

// Mean over valid positions of -log P[label]. Throws DataError when nothing is valid.
template <std::floating_point T>
Var<T> masked_cross_entropy(Var<T> log_probs, const IdTensor& labels, const MaskTensor& mask);

template <std::floating_point T>
struct LossBreakdown {
  Var<T> total;
  double fusion = 0.0;
  std::array<double, kModalities> unimodal{};  // L_t, L_v, L_a
  std::array<double, kModalities> alpha{};     // L_m / 10
  double value() const { return static_cast<double>(total.value()[0]); }
};

// L_total = L_fusion + sum_m alpha_m L_m with alpha_m = L_m / 10 held
// constant (or differentiated when alpha_squared).
template <std::floating_point T>
LossBreakdown<T> total_loss(Var<T> fused_log_probs,
                            const std::array<Var<T>, kModalities>& unimodal_log_probs,
                            const IdTensor& labels, const MaskTensor& mask, bool alpha_squared);

template <std::floating_point T>
class Classifier {
 public:
  Classifier(const ClassifierConfig& cfg, ParamStore<T>& store, Rng& rng);

  std::array<Var<T>, kModalities> heads(Tape<T>& tape, const std::array<Var<T>, kModalities>& g,
                                        bool training, Rng* dropout_rng) const;

  const ClassifierConfig& config() const { return cfg_; }

 private:
  ClassifierConfig cfg_;
  ParamStore<T>* store_;
};

}  // namespace dgerc
