#pragma once

#include <array>
#include <vector>

#include "dgerc/data.hpp"
#include "dgerc/rng.hpp"
#include "dgerc/tape.hpp"

namespace dgerc {

struct BalanceConfig {
  double q_base = 0.3;
  double lambda_scale = 0.9;
  double p_exe = 0.5;
  double epsilon = 1e-5;
  int warmup_epochs = 60;
  bool enabled = true;

  void validate() const;
};

using Triple = std::array<double, kModalities>;

struct BalanceState {
  Triple p{};
  std::array<Triple, kModalities> r{};  // r[m][j], diagonal unused (0)
  Triple r_bar{};
  Triple q{};
  std::vector<std::uint8_t> mask;  // [3*B], mask[m*B + b]
  double theta = 0.0;
  std::vector<std::uint8_t> u;     // [B]
  bool applied = false;
  bool degenerate = false;         // theta >= 1, skipped
};

// Modality score: sum_c w_c P_c R_c / sum_c w_c with w_c = N / n_c over the
// classes present in the valid labels. logits [B,L,C].
template <typename T>
double modality_f1(const Tensor<T>& logits, const IdTensor& labels, const MaskTensor& mask);

// Same score from flat label/prediction lists.
double inverse_frequency_score(const std::vector<int>& labels, const std::vector<int>& preds,
                            std::size_t n_classes);

// Relative-performance dropout probabilities. Fills r, r_bar and q of
// `state` when given.
Triple dropout_probabilities(const Triple& p, const BalanceConfig& cfg,
                             BalanceState* state = nullptr);

// theta = sum_m d_m q_m / sum_m d_m
double compensation_theta(const Triple& q, const std::array<std::size_t, kModalities>& dims);

bool warmup_gate(int epoch, const BalanceConfig& cfg);

// Deterministic core: F'' = (M (.) F) / (1 - theta) with the compensation
// op, M given per (modality, instance). theta is a scalar Var so tests can
// make it a leaf and observe its (zero) gradient.
template <std::floating_point T>
std::array<Var<T>, kModalities> apply_balance_mask(const std::array<Var<T>, kModalities>& f,
                                                   const std::vector<std::uint8_t>& mask,
                                                   Var<T> theta);

// Flips the p_exe coin, samples M ~ Bernoulli(1 - q) and applies the mask
// and compensation. Fills mask/theta/u/applied of `state`. When not applied
// the features are returned unchanged and u is all ones.
template <std::floating_point T>
std::array<Var<T>, kModalities> apply_modality_dropout(const std::array<Var<T>, kModalities>& f,
                                                       const Triple& q, const BalanceConfig& cfg,
                                                       Rng& rng, BalanceState& state);

}  // namespace dgerc
