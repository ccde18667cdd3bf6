#include "dgerc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dgerc::kernels {

namespace {
int g_threads = 0;

using Index = std::ptrdiff_t;
}  // namespace

void set_num_threads(int n) {
  g_threads = n;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int num_threads() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

SparseAdjacency sparse_from_dense(const int* adj, std::size_t batch, std::size_t length,
                                  std::size_t window) {
  SparseAdjacency s;
  s.batch = batch;
  s.length = length;
  const std::size_t nodes = batch * length;
  s.row_offsets.assign(nodes + 1, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    const int* block = adj + b * length * length;
    for (std::size_t i = 0; i < length; ++i) {
      const std::size_t lo = i > window ? i - window : 0;
      const std::size_t hi = std::min(length - 1, i + window);
      const std::size_t row = b * length + i;
      for (std::size_t j = lo; j <= hi && length > 0; ++j) {
        const int t = block[i * length + j];
        if (t > 0) {
          s.cols.push_back(static_cast<std::uint32_t>(j));
          s.types.push_back(static_cast<std::uint8_t>(t));
          s.rows.push_back(row);
        }
      }
      s.row_offsets[row + 1] = s.cols.size();
    }
  }
  // Column view by counting sort; edges are visited in row order so each
  // column list ends up sorted by row.
  s.col_offsets.assign(nodes + 1, 0);
  for (std::size_t e = 0; e < s.edges(); ++e) ++s.col_offsets[s.target(e) + 1];
  for (std::size_t n = 0; n < nodes; ++n) s.col_offsets[n + 1] += s.col_offsets[n];
  s.col_edges.assign(s.edges(), 0);
  std::vector<std::size_t> fill(s.col_offsets.begin(), s.col_offsets.end() - 1);
  for (std::size_t e = 0; e < s.edges(); ++e) s.col_edges[fill[s.target(e)]++] = e;
  return s;
}

namespace {

template <typename T>
T leaky(T x, T slope) {
  return x > T(0) ? x : slope * x;
}

template <typename T>
T leaky_grad(T x, T slope) {
  return x > T(0) ? T(1) : slope;
}

// Softmax over the edges of one row for one branch.
template <typename T>
void branch_softmax(const GraphAttentionArgs<T>& args, std::size_t row, const T* q, const T* k,
                    const T* rel, T* pre, T* alpha) {
  const SparseAdjacency& a = *args.adj;
  const std::size_t begin = a.row_offsets[row];
  const std::size_t end = a.row_offsets[row + 1];
  if (begin == end) return;
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t e = begin; e < end; ++e) {
    T s = q[row] + k[a.target(e)];
    if (rel != nullptr) s += rel[a.types[e]];
    pre[e] = s;
    mx = std::max(mx, leaky(s, args.slope));
  }
  T z = T(0);
  for (std::size_t e = begin; e < end; ++e) {
    alpha[e] = std::exp(leaky(pre[e], args.slope) - mx);
    z += alpha[e];
  }
  for (std::size_t e = begin; e < end; ++e) alpha[e] /= z;
}

template <typename T>
void forward_row(const GraphAttentionArgs<T>& args, std::size_t row, T* out,
                 GraphAttentionCache<T>& c) {
  const SparseAdjacency& a = *args.adj;
  branch_softmax(args, row, args.q_pos, args.k_pos, args.rel_pos, c.pre_pos.data(),
                 c.alpha_pos.data());
  if (args.differential()) {
    branch_softmax(args, row, args.q_neg, args.k_neg, args.rel_neg, c.pre_neg.data(),
                   c.alpha_neg.data());
  }
  T* o = out + row * args.width;
  std::fill(o, o + args.width, T(0));
  for (std::size_t e = a.row_offsets[row]; e < a.row_offsets[row + 1]; ++e) {
    T w = c.alpha_pos[e];
    if (args.differential()) w -= args.lambda * c.alpha_neg[e];
    c.alpha[e] = w;
    const T* v = args.values + a.target(e) * args.width;
    for (std::size_t d = 0; d < args.width; ++d) o[d] += w * v[d];
  }
}

template <typename T>
void prepare_cache(const GraphAttentionArgs<T>& args, GraphAttentionCache<T>& c) {
  const std::size_t e = args.adj->edges();
  c.pre_pos.assign(e, T(0));
  c.alpha_pos.assign(e, T(0));
  c.alpha.assign(e, T(0));
  if (args.differential()) {
    c.pre_neg.assign(e, T(0));
    c.alpha_neg.assign(e, T(0));
  } else {
    c.pre_neg.clear();
    c.alpha_neg.clear();
  }
}

// Softmax + LeakyReLU backward for one row and branch: turns d(alpha) into
// d(pre-activation score), written per edge.
template <typename T>
void branch_backward_row(const GraphAttentionArgs<T>& args, std::size_t begin, std::size_t end,
                         const T* alpha, const T* pre, const T* dalpha, T* dpre) {
  T dot = T(0);
  for (std::size_t e = begin; e < end; ++e) dot += alpha[e] * dalpha[e - begin];
  for (std::size_t e = begin; e < end; ++e) {
    dpre[e] = alpha[e] * (dalpha[e - begin] - dot) * leaky_grad(pre[e], args.slope);
  }
}

}  // namespace

namespace serial {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T sum = T(0);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T bv = trans_b ? b[j * k + p] : b[p * n + j];
        sum += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

template <typename T>
void graph_attention_forward(const GraphAttentionArgs<T>& args, T* out,
                             GraphAttentionCache<T>& cache) {
  prepare_cache(args, cache);
  for (std::size_t r = 0; r < args.adj->nodes(); ++r) forward_row(args, r, out, cache);
}

template <typename T>
void graph_attention_backward(const GraphAttentionArgs<T>& args,
                              const GraphAttentionCache<T>& cache, const T* grad_out,
                              const GraphAttentionGrads<T>& grads) {
  const SparseAdjacency& a = *args.adj;
  const std::size_t w = args.width;
  std::vector<T> dalpha;
  std::vector<T> dpre_pos(a.edges(), T(0));
  std::vector<T> dpre_neg(args.differential() ? a.edges() : 0, T(0));
  std::vector<T> dneg;
  for (std::size_t r = 0; r < a.nodes(); ++r) {
    const std::size_t begin = a.row_offsets[r];
    const std::size_t end = a.row_offsets[r + 1];
    const T* g = grad_out + r * w;
    dalpha.assign(end - begin, T(0));
    for (std::size_t e = begin; e < end; ++e) {
      const std::size_t t = a.target(e);
      const T* v = args.values + t * w;
      T s = T(0);
      for (std::size_t d = 0; d < w; ++d) s += g[d] * v[d];
      dalpha[e - begin] = s;
      if (grads.values != nullptr) {
        T* dv = grads.values + t * w;
        for (std::size_t d = 0; d < w; ++d) dv[d] += cache.alpha[e] * g[d];
      }
    }
    branch_backward_row(args, begin, end, cache.alpha_pos.data(), cache.pre_pos.data(),
                        dalpha.data(), dpre_pos.data());
    if (args.differential()) {
      dneg.assign(end - begin, T(0));
      for (std::size_t e = begin; e < end; ++e) {
        dneg[e - begin] = -args.lambda * dalpha[e - begin];
        if (grads.lambda != nullptr) *grads.lambda -= dalpha[e - begin] * cache.alpha_neg[e];
      }
      branch_backward_row(args, begin, end, cache.alpha_neg.data(), cache.pre_neg.data(),
                          dneg.data(), dpre_neg.data());
    }
    for (std::size_t e = begin; e < end; ++e) {
      const std::size_t t = a.target(e);
      if (grads.q_pos) grads.q_pos[r] += dpre_pos[e];
      if (grads.k_pos) grads.k_pos[t] += dpre_pos[e];
      if (grads.rel_pos) grads.rel_pos[a.types[e]] += dpre_pos[e];
      if (args.differential()) {
        if (grads.q_neg) grads.q_neg[r] += dpre_neg[e];
        if (grads.k_neg) grads.k_neg[t] += dpre_neg[e];
        if (grads.rel_neg) grads.rel_neg[a.types[e]] += dpre_neg[e];
      }
    }
  }
}

}  // namespace serial

namespace parallel {

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  const Index rows = static_cast<Index>(m);
  if (!trans_b) {
    // i-p-j order streams rows of B and C.
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
    for (Index ii = 0; ii < rows; ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      T* crow = c + i * n;
      if (!accumulate) std::fill(crow, crow + n, T(0));
      for (std::size_t p = 0; p < k; ++p) {
        const T av = trans_a ? a[p * m + i] : a[i * k + p];
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }
#pragma omp parallel for schedule(static) if (m * n * k > 32768)
  for (Index ii = 0; ii < rows; ++ii) {
    const std::size_t i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T sum = T(0);
      if (trans_a) {
        for (std::size_t p = 0; p < k; ++p) sum += a[p * m + i] * brow[p];
      } else {
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) sum += arow[p] * brow[p];
      }
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

template <typename T>
void graph_attention_forward(const GraphAttentionArgs<T>& args, T* out,
                             GraphAttentionCache<T>& cache) {
  prepare_cache(args, cache);
  const Index nodes = static_cast<Index>(args.adj->nodes());
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < nodes; ++r) forward_row(args, static_cast<std::size_t>(r), out, cache);
}

template <typename T>
void graph_attention_backward(const GraphAttentionArgs<T>& args,
                              const GraphAttentionCache<T>& cache, const T* grad_out,
                              const GraphAttentionGrads<T>& grads) {
  const SparseAdjacency& a = *args.adj;
  const std::size_t w = args.width;
  const Index nodes = static_cast<Index>(a.nodes());
  const bool diff = args.differential();
  std::vector<T> dpre_pos(a.edges(), T(0));
  std::vector<T> dpre_neg(diff ? a.edges() : 0, T(0));
  std::vector<T> dalpha_all(a.edges(), T(0));
  std::vector<T> dneg_all(diff ? a.edges() : 0, T(0));
  std::vector<T> lambda_part(a.nodes(), T(0));

  // Row phase: everything owned by the query row.
#pragma omp parallel for schedule(static)
  for (Index rr = 0; rr < nodes; ++rr) {
    const std::size_t r = static_cast<std::size_t>(rr);
    const std::size_t begin = a.row_offsets[r];
    const std::size_t end = a.row_offsets[r + 1];
    const T* g = grad_out + r * w;
    for (std::size_t e = begin; e < end; ++e) {
      const T* v = args.values + a.target(e) * w;
      T s = T(0);
      for (std::size_t d = 0; d < w; ++d) s += g[d] * v[d];
      dalpha_all[e] = s;
    }
    branch_backward_row(args, begin, end, cache.alpha_pos.data(), cache.pre_pos.data(),
                        dalpha_all.data() + begin, dpre_pos.data());
    T qp = T(0);
    for (std::size_t e = begin; e < end; ++e) qp += dpre_pos[e];
    if (grads.q_pos) grads.q_pos[r] += qp;
    if (diff) {
      T lp = T(0);
      for (std::size_t e = begin; e < end; ++e) {
        dneg_all[e] = -args.lambda * dalpha_all[e];
        lp -= dalpha_all[e] * cache.alpha_neg[e];
      }
      lambda_part[r] = lp;
      branch_backward_row(args, begin, end, cache.alpha_neg.data(), cache.pre_neg.data(),
                          dneg_all.data() + begin, dpre_neg.data());
      T qn = T(0);
      for (std::size_t e = begin; e < end; ++e) qn += dpre_neg[e];
      if (grads.q_neg) grads.q_neg[r] += qn;
    }
  }

  // Column phase: everything owned by the key/value node.
#pragma omp parallel for schedule(static)
  for (Index cc = 0; cc < nodes; ++cc) {
    const std::size_t c = static_cast<std::size_t>(cc);
    T* dv = grads.values != nullptr ? grads.values + c * w : nullptr;
    T kp = T(0);
    T kn = T(0);
    for (std::size_t idx = a.col_offsets[c]; idx < a.col_offsets[c + 1]; ++idx) {
      const std::size_t e = a.col_edges[idx];
      if (dv != nullptr) {
        const T* g = grad_out + a.rows[e] * w;
        const T al = cache.alpha[e];
        for (std::size_t d = 0; d < w; ++d) dv[d] += al * g[d];
      }
      kp += dpre_pos[e];
      if (diff) kn += dpre_neg[e];
    }
    if (grads.k_pos) grads.k_pos[c] += kp;
    if (diff && grads.k_neg) grads.k_neg[c] += kn;
  }

  // Small reductions, kept serial for a fixed summation order.
  for (std::size_t e = 0; e < a.edges(); ++e) {
    if (grads.rel_pos) grads.rel_pos[a.types[e]] += dpre_pos[e];
    if (diff && grads.rel_neg) grads.rel_neg[a.types[e]] += dpre_neg[e];
  }
  if (diff && grads.lambda != nullptr) {
    for (T lp : lambda_part) *grads.lambda += lp;
  }
}

}  // namespace parallel

#define DGERC_INSTANTIATE_KERNELS(T)                                                          \
  template void serial::gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t, const T*, \
                                const T*, T*, bool);                                          \
  template void parallel::gemm<T>(bool, bool, std::size_t, std::size_t, std::size_t,         \
                                  const T*, const T*, T*, bool);                             \
  template void serial::graph_attention_forward<T>(const GraphAttentionArgs<T>&, T*,         \
                                                   GraphAttentionCache<T>&);                 \
  template void parallel::graph_attention_forward<T>(const GraphAttentionArgs<T>&, T*,       \
                                                     GraphAttentionCache<T>&);               \
  template void serial::graph_attention_backward<T>(                                          \
      const GraphAttentionArgs<T>&, const GraphAttentionCache<T>&, const T*,                 \
      const GraphAttentionGrads<T>&);                                                         \
  template void parallel::graph_attention_backward<T>(                                        \
      const GraphAttentionArgs<T>&, const GraphAttentionCache<T>&, const T*,                 \
      const GraphAttentionGrads<T>&);

DGERC_INSTANTIATE_KERNELS(float)
DGERC_INSTANTIATE_KERNELS(double)

#undef DGERC_INSTANTIATE_KERNELS

}  // namespace dgerc::kernels
