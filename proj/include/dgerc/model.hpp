#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dgerc/balance.hpp"
#include "dgerc/classifier.hpp"
#include "dgerc/diff_rgcn.hpp"
#include "dgerc/encoder.hpp"

namespace dgerc {

struct ModelConfig {
  std::array<std::size_t, kModalities> input_dims{32, 16, 24};
  std::size_t d_h = 32;
  std::size_t enc_heads = 4;
  std::size_t gnn_heads = 4;
  std::size_t d_r = 8;
  std::size_t lambda_dim = 0;
  std::size_t gnn_stacks = 1;
  std::size_t n_speakers = 2;
  std::size_t classes = 6;
  int window = 5;
  double gnn_dropout = 0.1;
  double head_dropout = 0.1;
  GraphMode graph = GraphMode::DiffRGCN;
  bool text_transformer = true;
  bool alpha_squared = false;
  BalanceConfig balance;

  void validate() const;
};

template <std::floating_point T>
struct StepOptions {
  bool training = false;
  int epoch = 0;
  Rng* dropout_rng = nullptr;   // layer and head dropout
  Rng* modality_rng = nullptr;  // p_exe coin and Bernoulli masks
  bool keep_traces = false;
  // Fixed balance mask [3*B] and theta leaf, bypassing sampling (gradient checks).
  const std::vector<std::uint8_t>* fixed_mask = nullptr;
  Var<T> fixed_theta;
};

template <std::floating_point T>
struct ForwardResult {
  EncoderOutput<T> encoded;
  std::array<Var<T>, kModalities> g;       // graph outputs (encoder outputs in no-graph mode)
  std::array<Var<T>, kModalities> logits;  // unimodal head logits on the balanced features
  Fused<T> fused;
  std::optional<LossBreakdown<T>> loss;    // absent when nothing is left to score
  BalanceState balance;
  bool balance_active = false;
  MaskTensor loss_mask;
  std::vector<std::pair<std::string, Var<T>>> lambdas;
  std::vector<HeadTrace<T>> traces;
};

// Encoder -> relational subgraphs -> DiffRGCN -> modality balancing ->
// heads, fusion and loss.
template <std::floating_point T>
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t init_seed);

  ForwardResult<T> forward(Tape<T>& tape, const DialogueBatch<T>& batch,
                           const StepOptions<T>& opt) const;

  ParamStore<T>& params() { return *store_; }
  const ParamStore<T>& params() const { return *store_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  ModelConfig cfg_;
  std::unique_ptr<ParamStore<T>> store_;
  std::unique_ptr<Encoder<T>> encoder_;
  std::unique_ptr<DiffRGCN<T>> gnn_;
  std::unique_ptr<Classifier<T>> classifier_;
};

}  // namespace dgerc
