#include <benchmark/benchmark.h>

#include <vector>

#include "dgerc/graph.hpp"
#include "dgerc/kernels.hpp"
#include "dgerc/rng.hpp"

using namespace dgerc;

namespace {

std::vector<float> random_vec(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_vec(n * n, rng), b = random_vec(n * n, rng);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    else
      kernels::serial::gemm(false, false, n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

struct AttentionProblem {
  kernels::SparseAdjacency adj;
  std::size_t width = 16;
  std::vector<float> values, q_pos, k_pos, q_neg, k_neg, rel_pos, rel_neg;

  AttentionProblem(std::size_t batch, std::size_t length, int window) {
    Rng rng(2);
    IdTensor speakers({batch, length});
    for (auto& s : speakers.values()) s = static_cast<int>(rng.below(2));
    const auto g = build_subgraphs(speakers, MaskTensor({batch, length}, 1), window);
    adj = kernels::sparse_from_dense(g.adj_c.values().data(), batch, length,
                                     static_cast<std::size_t>(window));
    const std::size_t n = batch * length;
    values = random_vec(n * width, rng);
    q_pos = random_vec(n, rng);
    k_pos = random_vec(n, rng);
    q_neg = random_vec(n, rng);
    k_neg = random_vec(n, rng);
    rel_pos = random_vec(kernels::kRelationIds, rng);
    rel_neg = random_vec(kernels::kRelationIds, rng);
  }

  kernels::GraphAttentionArgs<float> args() const {
    kernels::GraphAttentionArgs<float> a;
    a.adj = &adj;
    a.width = width;
    a.values = values.data();
    a.q_pos = q_pos.data();
    a.k_pos = k_pos.data();
    a.rel_pos = rel_pos.data();
    a.q_neg = q_neg.data();
    a.k_neg = k_neg.data();
    a.rel_neg = rel_neg.data();
    a.lambda = 0.3f;
    return a;
  }
};

// range(0) = L, range(1) = window (0 means dense)
template <bool Parallel>
void BM_attention_forward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const int w = state.range(1) == 0 ? static_cast<int>(L) : static_cast<int>(state.range(1));
  AttentionProblem p(8, L, w);
  const auto args = p.args();
  std::vector<float> out(p.adj.nodes() * p.width);
  kernels::GraphAttentionCache<float> cache;
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::graph_attention_forward(args, out.data(), cache);
    else
      kernels::serial::graph_attention_forward(args, out.data(), cache);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["edges"] = static_cast<double>(p.adj.edges());
}

template <bool Parallel>
void BM_attention_backward(benchmark::State& state) {
  const auto L = static_cast<std::size_t>(state.range(0));
  const int w = state.range(1) == 0 ? static_cast<int>(L) : static_cast<int>(state.range(1));
  AttentionProblem p(8, L, w);
  const auto args = p.args();
  std::vector<float> out(p.adj.nodes() * p.width);
  kernels::GraphAttentionCache<float> cache;
  kernels::serial::graph_attention_forward(args, out.data(), cache);
  Rng rng(3);
  const auto grad_out = random_vec(out.size(), rng);
  std::vector<float> gv(out.size()), gq(p.adj.nodes()), gk(p.adj.nodes()), gqn(p.adj.nodes()),
      gkn(p.adj.nodes()), grp(kernels::kRelationIds), grn(kernels::kRelationIds);
  float gl = 0.f;
  kernels::GraphAttentionGrads<float> grads{gv.data(), gq.data(), gk.data(), grp.data(),
                                            gqn.data(), gkn.data(), grn.data(), &gl};
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::graph_attention_backward(args, cache, grad_out.data(), grads);
    else
      kernels::serial::graph_attention_backward(args, cache, grad_out.data(), grads);
    benchmark::DoNotOptimize(gv.data());
  }
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_attention_forward<false>)
    ->Name("attention_forward/serial")
    ->ArgsProduct({{64, 128, 256}, {5, 0}});
BENCHMARK(BM_attention_forward<true>)
    ->Name("attention_forward/parallel")
    ->ArgsProduct({{64, 128, 256}, {5, 0}});
BENCHMARK(BM_attention_backward<false>)
    ->Name("attention_backward/serial")
    ->ArgsProduct({{64, 128, 256}, {5, 0}});
BENCHMARK(BM_attention_backward<true>)
    ->Name("attention_backward/parallel")
    ->ArgsProduct({{64, 128, 256}, {5, 0}});

BENCHMARK_MAIN();
