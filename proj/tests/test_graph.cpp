#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <numeric>

#include "dgerc/graph.hpp"
#include "dgerc/rng.hpp"
#include "graph_oracle.hpp"

using namespace dgerc;
using dgerc::testing::oracle_build_subgraphs;

namespace {

struct Instance {
  IdTensor speakers;
  MaskTensor mask;
  int w;
};

// Padding is always a suffix, as produced by collate.
Instance random_instance(Rng& rng) {
  const std::size_t B = 1 + rng.below(3);
  const std::size_t L = 1 + rng.below(12);
  const int n_spk = 1 + static_cast<int>(rng.below(9));
  Instance in{IdTensor({B, L}), MaskTensor({B, L}), static_cast<int>(rng.below(7))};
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t len = rng.below(L + 1);
    for (std::size_t i = 0; i < L; ++i) {
      const bool valid = i < len;
      in.mask.at({b, i}) = valid;
      in.speakers.at({b, i}) = valid ? static_cast<int>(rng.below(n_spk)) : n_spk;
    }
  }
  return in;
}

IdTensor single(std::initializer_list<int> v) {
  return IdTensor({1, v.size()}, std::vector<int>(v));
}

MaskTensor ones(std::size_t L) { return MaskTensor({1, L}, 1); }

}  // namespace

TEST_CASE("single utterance has only self loops") {
  auto g = build_subgraphs(single({0}), ones(1), 5);
  CHECK(g.adj_s == IdTensor({1, 1, 1}, {1}));
  CHECK(g.adj_c == IdTensor({1, 1, 1}, {1}));
}

TEST_CASE("hand case A,B,A") {
  auto g = build_subgraphs(single({0, 1, 0}), ones(3), 5);
  CHECK(g.adj_s == IdTensor({1, 3, 3}, {1, 0, 3, 0, 1, 0, 2, 0, 1}));
  CHECK(g.adj_c == IdTensor({1, 3, 3}, {1, 4, 0, 5, 1, 4, 0, 5, 1}));
  auto o = oracle_build_subgraphs(single({0, 1, 0}), ones(3), 5);
  CHECK(o.adj_s == g.adj_s);
  CHECK(o.adj_c == g.adj_c);
}

TEST_CASE("window zero keeps only the diagonal") {
  auto g = build_subgraphs(single({0, 0}), ones(2), 0);
  CHECK(g.adj_s == IdTensor({1, 2, 2}, {1, 0, 0, 1}));
  CHECK(g.adj_c == IdTensor({1, 2, 2}, {1, 0, 0, 1}));
}

TEST_CASE("empty dialogue gives zero tensors") {
  auto g = build_subgraphs(single({2, 2, 2}), MaskTensor({1, 3}, 0), 5);
  for (int v : g.adj_s.values()) CHECK(v == 0);
  for (int v : g.adj_c.values()) CHECK(v == 0);
}

TEST_CASE("negative window is a config error") {
  CHECK_THROWS_AS(build_subgraphs(single({0}), ones(1), -1), ConfigError);
}

TEST_CASE("alternating speakers with full window link same-parity indices only") {
  const std::size_t L = 7;
  IdTensor spk({1, L});
  for (std::size_t i = 0; i < L; ++i) spk[i] = static_cast<int>(i % 2);
  auto g = build_subgraphs(spk, ones(L), static_cast<int>(L));
  auto o = oracle_build_subgraphs(spk, ones(L), static_cast<int>(L));
  CHECK(g.adj_s == o.adj_s);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j)
      if (i != j) CHECK((g.adj_s.at({0, i, j}) != 0) == ((i + j) % 2 == 0));
}

TEST_CASE("build_subgraphs equals the oracle on 1000 random instances") {
  Rng rng(2024);
  int mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const Instance in = random_instance(rng);
    auto g = build_subgraphs(in.speakers, in.mask, in.w);
    auto o = oracle_build_subgraphs(in.speakers, in.mask, in.w);
    if (!(g.adj_s == o.adj_s && g.adj_c == o.adj_c)) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("structural invariants on random instances") {
  Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const Instance in = random_instance(rng);
    const auto g = build_subgraphs(in.speakers, in.mask, in.w);
    const std::size_t B = in.speakers.dim(0), L = in.speakers.dim(1);
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = 0; j < L; ++j) {
          const int s = g.adj_s.at({b, i, j}), c = g.adj_c.at({b, i, j});
          const bool valid = in.mask.at({b, i}) && in.mask.at({b, j});
          if (!valid) {
            CHECK(s == 0);
            CHECK(c == 0);
            continue;
          }
          if (i == j) {
            CHECK(s == 1);
            CHECK(c == 1);
            continue;
          }
          const std::size_t dist = i > j ? i - j : j - i;
          const bool same = in.speakers.at({b, i}) == in.speakers.at({b, j});
          // exactly one case of each relation fires inside the window
          CHECK(!(s != 0 && c != 0));
          if (dist <= static_cast<std::size_t>(in.w)) {
            CHECK((s != 0) == same);
            CHECK((c != 0) == !same);
          } else {
            CHECK(s == 0);
            CHECK(c == 0);
          }
          // transpose duality
          CHECK((s == 2) == (g.adj_s.at({b, j, i}) == 3));
          CHECK((c == 5) == (g.adj_c.at({b, j, i}) == 4));
        }
      }
    }
  }
}

TEST_CASE("window monotonicity") {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    Instance in = random_instance(rng);
    const auto small = build_subgraphs(in.speakers, in.mask, in.w);
    const int w2 = in.w + 1 + static_cast<int>(rng.below(4));
    const auto big = build_subgraphs(in.speakers, in.mask, w2);
    const std::size_t L = in.speakers.dim(1);
    for (std::size_t k = 0; k < small.adj_s.size(); ++k) {
      const std::size_t i = (k / L) % L, j = k % L;
      const std::size_t dist = i > j ? i - j : j - i;
      if (small.adj_s[k] != 0) CHECK(big.adj_s[k] == small.adj_s[k]);
      if (small.adj_c[k] != 0) CHECK(big.adj_c[k] == small.adj_c[k]);
      const bool added = (big.adj_s[k] != 0 && small.adj_s[k] == 0) ||
                         (big.adj_c[k] != 0 && small.adj_c[k] == 0);
      if (added) CHECK(dist > static_cast<std::size_t>(in.w));
    }
  }
}

TEST_CASE("speaker relabelling leaves both tensors unchanged") {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    Instance in = random_instance(rng);
    std::vector<int> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    IdTensor relabelled = in.speakers;
    for (std::size_t k = 0; k < relabelled.size(); ++k)
      if (in.mask[k]) relabelled[k] = perm[static_cast<std::size_t>(in.speakers[k])];
    const auto a = build_subgraphs(in.speakers, in.mask, in.w);
    const auto b = build_subgraphs(relabelled, in.mask, in.w);
    CHECK(a.adj_s == b.adj_s);
    CHECK(a.adj_c == b.adj_c);
  }
}
