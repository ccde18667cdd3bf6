#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dgerc/balance.hpp"
#include "dgerc/gradcheck.hpp"
#include "dgerc/ops.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dgerc;
using dgerc::testing::oracle_modality_score;
using dgerc::testing::oracle_q;
using dgerc::testing::random_tensor;

namespace {

std::array<Tensor<double>, kModalities> random_features(std::size_t B, std::size_t L,
                                                        std::size_t d, Rng& rng) {
  std::array<Tensor<double>, kModalities> f;
  for (auto& t : f) t = random_tensor<double>({B, L, d}, rng, 0.2, 1.5);
  return f;
}

}  // namespace

TEST_CASE("dropout_probabilities matches the scalar oracle on 1000 triples") {
  Rng rng(41);
  BalanceConfig cfg;
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Triple p{rng.uniform(), rng.uniform(), rng.uniform()};
    if (t % 10 == 0) p[rng.below(3)] = 0.0;
    const Triple q = dropout_probabilities(p, cfg);
    const Triple o = oracle_q(p, cfg.q_base, cfg.lambda_scale, cfg.epsilon);
    for (int m = 0; m < 3; ++m) worst = std::max(worst, std::abs(q[m] - o[m]));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("dropout_probabilities examples") {
  BalanceConfig cfg;
  SUBCASE("equal performance gives q_base exactly") {
    for (double x : {0.0, 0.1, 0.37, 0.5, 1.0}) {
      BalanceState st;
      const Triple q = dropout_probabilities({x, x, x}, cfg, &st);
      for (int m = 0; m < 3; ++m) {
        CHECK(q[m] == cfg.q_base);
        CHECK(st.r_bar[m] == 0.0);
      }
    }
  }
  SUBCASE("one dominant modality") {
    BalanceState st;
    const Triple q = dropout_probabilities({1.0, 0.0, 0.0}, cfg, &st);
    CHECK(st.r[0][1] == doctest::Approx(1e5));
    CHECK(st.r[0][2] == doctest::Approx(1e5));
    CHECK(q[0] == 1.0);
    const Triple o = oracle_q({1.0, 0.0, 0.0}, 0.3, 0.9, 1e-5);
    for (int m = 0; m < 3; ++m) CHECK(std::abs(q[m] - o[m]) <= 1e-9);
    // the two weak modalities see r = -1 against the strong one, 0 against each other
    CHECK(q[1] == doctest::Approx(0.3 * (1.0 + 0.9 * (0.5 * -1.0 + 0.5 * 0.0) / 2.0)));
  }
  SUBCASE("single-modality scores of the text/visual/audio benchmark") {
    const Triple p{0.6863, 0.3560, 0.6070};
    const Triple q = dropout_probabilities(p, cfg);
    const Triple o = oracle_q(p, 0.3, 0.9, 1e-5);
    for (int m = 0; m < 3; ++m) CHECK(std::abs(q[m] - o[m]) <= 1e-9);
    CHECK(q[0] > q[2]);
    CHECK(q[2] > q[1]);
    CHECK(q[1] < cfg.q_base);
  }
}

TEST_CASE("monotone dominance and clipping") {
  Rng rng(42);
  BalanceConfig cfg;
  for (int t = 0; t < 300; ++t) {
    Triple p{rng.uniform(), rng.uniform(), rng.uniform()};
    const std::size_t m = rng.below(3);
    double prev = -1.0;
    for (int k = 0; k <= 100; ++k) {
      p[m] = k / 100.0;
      const Triple q = dropout_probabilities(p, cfg);
      for (double v : q) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(q[m] >= prev - 1e-15);
      prev = q[m];
    }
  }
  cfg.lambda_scale = 50.0;
  const Triple q = dropout_probabilities({0.0, 1.0, 1.0}, cfg);
  CHECK(q[0] == 0.0);
}

TEST_CASE("theta is the dimension-weighted mean") {
  CHECK(compensation_theta({0.4, 0.2, 0.3}, {8, 8, 8}) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(compensation_theta({0.4, 0.2, 0.3}, {2, 1, 1}) ==
        doctest::Approx((0.8 + 0.2 + 0.3) / 4.0).epsilon(1e-15));
  CHECK(compensation_theta({0, 0, 0}, {4, 5, 6}) == 0.0);
}

TEST_CASE("warmup gate") {
  BalanceConfig cfg;
  CHECK_FALSE(warmup_gate(0, cfg));
  CHECK_FALSE(warmup_gate(59, cfg));
  CHECK(warmup_gate(60, cfg));
  CHECK(warmup_gate(61, cfg));
  cfg.enabled = false;
  for (int e = 0; e < 200; ++e) CHECK_FALSE(warmup_gate(e, cfg));
}

TEST_CASE("config validation") {
  BalanceConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.q_base = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.p_exe = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("apply_modality_dropout examples") {
  Rng data(43);
  const auto f = random_features(3, 2, 4, data);
  BalanceConfig cfg;
  cfg.p_exe = 1.0;

  SUBCASE("q = 0 keeps every feature") {
    Tape<double> t;
    std::array<Var<double>, kModalities> v;
    for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.constant(f[m]);
    Rng rng(1);
    BalanceState st;
    auto out = apply_modality_dropout(v, {0, 0, 0}, cfg, rng, st);
    CHECK(st.applied);
    CHECK(st.theta == 0.0);
    for (std::size_t m = 0; m < kModalities; ++m) CHECK(out[m].value() == f[m]);
    for (auto u : st.u) CHECK(u == 1);
  }
  SUBCASE("surviving features are scaled by 1/(1-theta)") {
    Tape<double> t;
    std::array<Var<double>, kModalities> v;
    for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.constant(f[m]);
    Rng rng(2);
    BalanceState st;
    auto out = apply_modality_dropout(v, {0.4, 0.2, 0.3}, cfg, rng, st);
    CHECK(st.theta == doctest::Approx(0.3).epsilon(1e-15));
    for (std::size_t m = 0; m < kModalities; ++m)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t k = 0; k < 8; ++k) {
          const double want = st.mask[m * 3 + b] ? f[m][b * 8 + k] / 0.7 : 0.0;
          CHECK(out[m].value()[b * 8 + k] == doctest::Approx(want).epsilon(1e-12));
        }
  }
  SUBCASE("theta >= 1 skips with a degenerate flag") {
    Tape<double> t;
    std::array<Var<double>, kModalities> v;
    for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.constant(f[m]);
    Rng rng(3);
    BalanceState st;
    auto out = apply_modality_dropout(v, {1, 1, 1}, cfg, rng, st);
    CHECK(st.degenerate);
    CHECK_FALSE(st.applied);
    for (std::size_t m = 0; m < kModalities; ++m) CHECK(out[m].value() == f[m]);
  }
  SUBCASE("p_exe = 0 never applies") {
    cfg.p_exe = 0.0;
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
      Tape<double> t;
      std::array<Var<double>, kModalities> v;
      for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.constant(f[m]);
      BalanceState st;
      apply_modality_dropout(v, {0.5, 0.5, 0.5}, cfg, rng, st);
      CHECK_FALSE(st.applied);
    }
  }
}

TEST_CASE("p_exe coin frequency") {
  Rng data(44);
  const auto f = random_features(2, 1, 2, data);
  BalanceConfig cfg;
  Rng rng(5);
  int applied = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    Tape<double> t;
    std::array<Var<double>, kModalities> v;
    for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.constant(f[m]);
    BalanceState st;
    apply_modality_dropout(v, {0.3, 0.3, 0.3}, cfg, rng, st);
    applied += st.applied;
  }
  const double sigma = std::sqrt(0.25 / n);
  CHECK(std::abs(applied / static_cast<double>(n) - 0.5) <= 3 * sigma);
}

TEST_CASE("expectation preservation over 10000 mask draws") {
  Rng data(45);
  const std::size_t B = 2, L = 1, d = 2;
  const auto f = random_features(B, L, d, data);
  BalanceConfig cfg;
  cfg.p_exe = 1.0;
  const int n = 10000;
  for (const Triple q : {Triple{0.3, 0.3, 0.3}, Triple{0.5, 0.2, 0.35}}) {
    Rng rng(6);
    std::array<std::vector<double>, kModalities> sum, sq;
    for (auto& s : sum) s.assign(B * L * d, 0.0);
    for (auto& s : sq) s.assign(B * L * d, 0.0);
    double theta = 0.0;
    for (int i = 0; i < n; ++i) {
      Tape<double> t;
      std::array<Var<double>, kModalities> v;
      for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.constant(f[m]);
      BalanceState st;
      auto out = apply_modality_dropout(v, q, cfg, rng, st);
      REQUIRE(st.applied);
      theta = st.theta;
      for (std::size_t m = 0; m < kModalities; ++m)
        for (std::size_t k = 0; k < B * L * d; ++k) {
          const double x = out[m].value()[k];
          sum[m][k] += x;
          sq[m][k] += x * x;
        }
    }
    double mass = 0.0;
    for (std::size_t m = 0; m < kModalities; ++m) {
      // E[F''] = (1 - q_m) / (1 - theta) F; equals F when all q agree
      const double scale = (1.0 - q[m]) / (1.0 - theta);
      mass += scale / kModalities;
      for (std::size_t k = 0; k < B * L * d; ++k) {
        const double mean = sum[m][k] / n;
        const double var = sq[m][k] / n - mean * mean;
        const double se = std::sqrt(var / n);
        INFO("q=" << q[0] << "," << q[1] << "," << q[2] << " m=" << m << " k=" << k);
        CHECK(std::abs(mean - scale * f[m][k]) <= 3 * se);
        if (q[0] == q[1] && q[1] == q[2]) CHECK(std::abs(mean - f[m][k]) <= 3 * se);
      }
    }
    // dimension-weighted mass is preserved exactly in expectation
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("compensation gradient contract") {
  Rng data(46);
  const auto f = random_features(3, 2, 3, data);
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 0, 0, 1, 1};
  for (double th : {0.0, 0.3, 0.75}) {
    std::vector<Parameter<double>> ps;
    for (std::size_t m = 0; m < kModalities; ++m)
      ps.push_back(testing::make_param<double>("f" + std::to_string(m), f[m]));
    Parameter<double> theta = testing::make_param<double>("theta", Tensor<double>::scalar(th));
    auto loss = [&](Tape<double>& t) {
      std::array<Var<double>, kModalities> v;
      for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.param(ps[m]);
      auto out = apply_balance_mask(v, mask, t.param(theta));
      return ops::add(ops::add(ops::sum(out[0]), ops::sum(out[1])), ops::sum(out[2]));
    };
    {
      Tape<double> t;
      t.backward(loss(t));
    }
    CHECK(theta.grad.item() == 0.0);
    for (std::size_t m = 0; m < kModalities; ++m)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t k = 0; k < 6; ++k)
          CHECK(ps[m].grad[b * 6 + k] == doctest::Approx(mask[m * 3 + b] ? 1.0 / (1.0 - th) : 0.0).epsilon(1e-14));
    for (auto& p : ps) p.zero_grad();
    theta.zero_grad();
    std::vector<Parameter<double>*> ptrs{&ps[0], &ps[1], &ps[2], &theta};
    FdOptions opt;
    opt.blocked = {"theta"};
    auto rep = finite_diff_check<double>(loss, ptrs, opt);
    INFO(rep.summary());
    CHECK(rep.passed);
    if (th > 0.0) CHECK(rep.intentionally_blocked == std::vector<std::string>{"theta"});
  }
}

TEST_CASE("instance filtering keeps only instances with a surviving modality") {
  Rng data(47);
  const std::size_t B = 16;
  const auto f = random_features(B, 2, 2, data);
  BalanceConfig cfg;
  cfg.p_exe = 1.0;
  Rng rng(7);
  int dropped = 0;
  for (int i = 0; i < 200; ++i) {
    Tape<double> t;
    std::array<Var<double>, kModalities> v;
    for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.constant(f[m]);
    BalanceState st;
    auto out = apply_modality_dropout(v, {0.8, 0.7, 0.75}, cfg, rng, st);
    REQUIRE(st.applied);
    for (std::size_t b = 0; b < B; ++b) {
      const bool any = st.mask[b] || st.mask[B + b] || st.mask[2 * B + b];
      CHECK(static_cast<bool>(st.u[b]) == any);
      double norm = 0.0;
      for (std::size_t m = 0; m < kModalities; ++m)
        for (std::size_t k = 0; k < 4; ++k) norm += std::abs(out[m].value()[b * 4 + k]);
      CHECK((norm > 0.0) == any);
      dropped += !any;
    }
  }
  CHECK(dropped > 0);
}

TEST_CASE("mask draws are reproducible from the stream") {
  Rng data(48);
  const auto f = random_features(4, 1, 2, data);
  BalanceConfig cfg;
  auto draw = [&](std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint8_t> all;
    for (int i = 0; i < 20; ++i) {
      Tape<double> t;
      std::array<Var<double>, kModalities> v;
      for (std::size_t m = 0; m < kModalities; ++m) v[m] = t.constant(f[m]);
      BalanceState st;
      apply_modality_dropout(v, {0.3, 0.4, 0.5}, cfg, rng, st);
      all.push_back(st.applied);
      all.insert(all.end(), st.mask.begin(), st.mask.end());
    }
    return all;
  };
  CHECK(draw(9) == draw(9));
  CHECK(draw(9) != draw(10));
}

TEST_CASE("modality score matches a confusion oracle") {
  SUBCASE("examples") {
    // class 0: P=1 R=1/2, class 1: P=1/2 R=1, weights 3/2 and 3
    CHECK(inverse_frequency_score({0, 0, 1}, {0, 1, 1}, 2) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(inverse_frequency_score({0, 0, 1}, {0, 1, 1}, 2) == oracle_modality_score({0, 0, 1}, {0, 1, 1}, 2));
    CHECK(inverse_frequency_score({0, 1, 2, 2}, {0, 1, 2, 2}, 6) == 1.0);
    CHECK(inverse_frequency_score({0, 1, 2, 2}, {1, 2, 0, 0}, 6) == 0.0);
    CHECK(inverse_frequency_score({}, {}, 6) == 0.0);
  }
  SUBCASE("random logits") {
    Rng rng(49);
    for (int t = 0; t < 300; ++t) {
      const std::size_t B = 1 + rng.below(4), L = 1 + rng.below(8), C = 2 + rng.below(5);
      Tensor<double> logits = random_tensor<double>({B, L, C}, rng);
      IdTensor labels({B, L}, -1);
      MaskTensor mask({B, L});
      std::vector<int> y, p;
      for (std::size_t i = 0; i < B * L; ++i) {
        if (i > 0 && rng.uniform() < 0.2) continue;
        mask[i] = 1;
        labels[i] = static_cast<int>(rng.below(C));
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
          if (logits[i * C + c] > logits[i * C + best]) best = c;
        y.push_back(labels[i]);
        p.push_back(static_cast<int>(best));
      }
      CHECK(modality_f1(logits, labels, mask) ==
            doctest::Approx(oracle_modality_score(y, p, static_cast<int>(C))).epsilon(1e-14));
    }
  }
}
