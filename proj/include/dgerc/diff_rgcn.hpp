#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "dgerc/data.hpp"
#include "dgerc/graph.hpp"
#include "dgerc/graph_attention.hpp"
#include "dgerc/params.hpp"

namespace dgerc {

enum class GraphMode { DiffRGCN, PlainGat, NoGraph };

GraphMode parse_graph_mode(const std::string& s);
std::string to_string(GraphMode mode);

struct GnnConfig {
  std::size_t d = 32;          // node width in and out of every layer
  std::size_t heads = 4;
  std::size_t d_r = 8;         // relation embedding width
  std::size_t lambda_dim = 0;  // 0 means d_head / 2
  std::size_t stacks = 1;      // (inter, intra) pairs per modality
  double dropout = 0.1;
  GraphMode mode = GraphMode::DiffRGCN;
};

// lambda_init(depth) = 0.8 - 0.6 exp(-0.3 depth)
double lambda_init(int depth);

// Sparse views of both subgraphs, built once per batch and shared by all
// layers and modalities.
struct BatchGraph {
  std::shared_ptr<const kernels::SparseAdjacency> inter;  // adj_c
  std::shared_ptr<const kernels::SparseAdjacency> intra;  // adj_s
};
BatchGraph make_batch_graph(const RelationalSubgraphs& g);

// Attention weights of one head, per edge, kept for inspection.
template <std::floating_point T>
struct HeadTrace {
  std::string layer;
  std::size_t head = 0;
  std::shared_ptr<const kernels::SparseAdjacency> adj;
  std::shared_ptr<const kernels::GraphAttentionCache<T>> cache;
  double lambda_full = 0.0;
};

template <std::floating_point T>
struct HeadOutput {
  Var<T> out;          // [B,L,d_head]
  Var<T> lambda_full;  // scalar, invalid for plain attention
  std::shared_ptr<const kernels::GraphAttentionCache<T>> cache;
};

// Parameter names of one head under `prefix`:
//   W [d_in,d_head]; a_l_pos, a_r_pos, a_l_neg, a_r_neg [d_head/2,1];
//   rel [6,d_r], rel_pos, rel_neg [d_r,1]; lam_l1, lam_r1, lam_l2, lam_r2 [D].
// Plain attention keeps W, a_l_pos and a_r_pos only: positive branch scores,
// values Wh, no lambda and no relation term.
template <std::floating_point T>
void register_head(ParamStore<T>& store, const std::string& prefix, std::size_t d_in,
                   std::size_t d_head, std::size_t d_r, std::size_t lambda_dim, bool differential,
                   bool relation, Rng& rng);

template <std::floating_point T>
HeadOutput<T> diff_attention_head(Tape<T>& tape, Var<T> h,
                                  std::shared_ptr<const kernels::SparseAdjacency> adj, int depth,
                                  ParamStore<T>& store, const std::string& prefix,
                                  bool differential, bool relation);

// Multi-head differential graph attention stack for all three modalities.
template <std::floating_point T>
class DiffRGCN {
 public:
  DiffRGCN(const GnnConfig& cfg, ParamStore<T>& store, Rng& rng);

  struct Output {
    std::array<Var<T>, kModalities> g;
    std::vector<HeadTrace<T>> traces;                    // filled when requested
    std::vector<std::pair<std::string, Var<T>>> lambdas; // lambda_full per head
  };

  Output forward(Tape<T>& tape, const std::array<Var<T>, kModalities>& x, const BatchGraph& graph,
                 const MaskTensor& mask, bool training, Rng* dropout_rng,
                 bool keep_traces = false) const;

  // One inter/intra layer; exposed for tests.
  Var<T> layer(Tape<T>& tape, Var<T> h, std::shared_ptr<const kernels::SparseAdjacency> adj,
               int depth, const std::string& prefix, const MaskTensor& mask, bool training,
               Rng* dropout_rng, std::vector<HeadTrace<T>>* traces,
               std::vector<std::pair<std::string, Var<T>>>* lambdas) const;

  const GnnConfig& config() const { return cfg_; }
  std::size_t head_width() const { return cfg_.d / cfg_.heads; }
  std::size_t lambda_dim() const;
  // Layer prefixes in execution order for modality m, e.g. "gnn.t.0.inter".
  std::vector<std::string> layer_prefixes(std::size_t m) const;

 private:
  bool differential() const { return cfg_.mode == GraphMode::DiffRGCN; }

  GnnConfig cfg_;
  ParamStore<T>* store_;
};

}  // namespace dgerc
