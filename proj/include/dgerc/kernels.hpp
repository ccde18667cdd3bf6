#pragma once

// Numeric kernels behind the differentiable ops. Each kernel has a plain
// serial reference (straight textbook loops, kept for testing and
// benchmarking) and an OpenMP version used by the ops. The OpenMP versions
// partition work by output element only, so their results do not depend on
// the thread count.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace dgerc::kernels {

// Sets the OpenMP thread count used by the parallel kernels (0 = runtime default).
void set_num_threads(int n);
int num_threads();

// CSR view of a relational adjacency restricted to its nonzero entries.
// Row r = b * length + i lists the neighbours j of node i in dialogue b
// together with the edge-type id. The column view lists, for each node j,
// the edge ids pointing at it in ascending row order.
struct SparseAdjacency {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::size_t> row_offsets;  // batch*length + 1
  std::vector<std::uint32_t> cols;       // per edge, node index within the dialogue
  std::vector<std::uint8_t> types;       // per edge, relation id in 1..5
  std::vector<std::size_t> rows;         // per edge, owning row
  std::vector<std::size_t> col_offsets;  // batch*length + 1
  std::vector<std::size_t> col_edges;    // edge ids grouped by target node

  std::size_t nodes() const { return batch * length; }
  std::size_t edges() const { return cols.size(); }
  // Flat node index of the edge target.
  std::size_t target(std::size_t edge) const {
    return (rows[edge] / length) * length + cols[edge];
  }
};

// Builds the sparse view from a dense [B,L,L] id tensor, scanning only
// |i-j| <= window (pass window >= L for a full scan).
SparseAdjacency sparse_from_dense(const int* adj, std::size_t batch, std::size_t length,
                                  std::size_t window);

inline constexpr std::size_t kRelationIds = 6;

// Inputs of the fused (differential) graph attention. Scores use additive
// per-node scalars: e_ij = q_i + k_j (+ rel[type_ij]). The negative branch
// is absent (nullptr) for plain graph attention; rel tables may be nullptr.
template <typename T>
struct GraphAttentionArgs {
  const SparseAdjacency* adj = nullptr;
  std::size_t width = 0;       // value feature width
  const T* values = nullptr;   // [nodes, width]
  const T* q_pos = nullptr;    // [nodes]
  const T* k_pos = nullptr;
  const T* rel_pos = nullptr;  // [kRelationIds]
  const T* q_neg = nullptr;
  const T* k_neg = nullptr;
  const T* rel_neg = nullptr;
  T lambda = T(0);
  T slope = T(0.2);

  bool differential() const { return q_neg != nullptr; }
};

template <typename T>
struct GraphAttentionCache {
  std::vector<T> pre_pos, pre_neg;      // scores before LeakyReLU, per edge
  std::vector<T> alpha_pos, alpha_neg;  // branch softmax, per edge
  std::vector<T> alpha;                 // fused weights, per edge
};

// Gradient sinks; every non-null pointer is accumulated into.
template <typename T>
struct GraphAttentionGrads {
  T* values = nullptr;
  T* q_pos = nullptr;
  T* k_pos = nullptr;
  T* rel_pos = nullptr;
  T* q_neg = nullptr;
  T* k_neg = nullptr;
  T* rel_neg = nullptr;
  T* lambda = nullptr;
};

namespace serial {

// C(m,n) (+)= op(A) * op(B); op(A) is m x k, op(B) is k x n, all row-major.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

template <typename T>
void graph_attention_forward(const GraphAttentionArgs<T>& args, T* out,
                             GraphAttentionCache<T>& cache);

template <typename T>
void graph_attention_backward(const GraphAttentionArgs<T>& args,
                              const GraphAttentionCache<T>& cache, const T* grad_out,
                              const GraphAttentionGrads<T>& grads);

}  // namespace serial

namespace parallel {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate);

template <typename T>
void graph_attention_forward(const GraphAttentionArgs<T>& args, T* out,
                             GraphAttentionCache<T>& cache);

template <typename T>
void graph_attention_backward(const GraphAttentionArgs<T>& args,
                              const GraphAttentionCache<T>& cache, const T* grad_out,
                              const GraphAttentionGrads<T>& grads);

}  // namespace parallel

}  // namespace dgerc::kernels
