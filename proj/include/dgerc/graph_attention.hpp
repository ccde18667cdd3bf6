#pragma once

#include <memory>

#include "dgerc/kernels.hpp"
#include "dgerc/tape.hpp"

namespace dgerc::ops {

// Operands of the fused windowed graph attention. Leave the negative branch
// (q_neg, k_neg, rel_neg, lambda) unset for plain graph attention and the
// rel tables unset to drop the relation term.
template <std::floating_point T>
struct GraphAttentionInputs {
  Var<T> values;  // [B,L,W]
  Var<T> q_pos;   // [B,L]
  Var<T> k_pos;   // [B,L]
  Var<T> rel_pos; // [6], indexed by edge type
  Var<T> q_neg;
  Var<T> k_neg;
  Var<T> rel_neg;
  Var<T> lambda;  // scalar
};

template <std::floating_point T>
struct GraphAttentionResult {
  Var<T> out;  // [B,L,W]
  std::shared_ptr<const kernels::GraphAttentionCache<T>> cache;
};

// out_i = sum_j alpha_ij v_j over the edges of `adj`, with
// alpha = softmax(leaky(e_pos)) - lambda * softmax(leaky(e_neg)).
template <std::floating_point T>
GraphAttentionResult<T> graph_attention(std::shared_ptr<const kernels::SparseAdjacency> adj,
                                        const GraphAttentionInputs<T>& in, T slope = T(0.2));

// Scatters per-edge weights back to a dense [B,L,L] tensor (zeros off-graph).
template <typename T>
Tensor<T> dense_from_edges(const kernels::SparseAdjacency& adj, const std::vector<T>& per_edge) {
  const std::size_t L = adj.length;
  Tensor<T> out({adj.batch, L, L});
  for (std::size_t e = 0; e < adj.edges(); ++e) out[adj.rows[e] * L + adj.cols[e]] = per_edge[e];
  return out;
}

}  // namespace dgerc::ops
