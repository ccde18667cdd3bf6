#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <omp.h>

#include "dgerc/synth.hpp"

using namespace dgerc;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Nearest class mean on one modality: fit on the first half, score the second.
double nearest_mean_accuracy(const std::vector<Dialogue>& data, std::size_t m, std::size_t C) {
  const std::size_t half = data.size() / 2;
  const std::size_t D = data[0].features[m][0].size();
  std::vector<std::vector<double>> mean(C, std::vector<double>(D, 0.0));
  std::vector<std::size_t> count(C, 0);
  for (std::size_t i = 0; i < half; ++i)
    for (std::size_t u = 0; u < data[i].length(); ++u) {
      const auto y = static_cast<std::size_t>(data[i].labels[u]);
      ++count[y];
      for (std::size_t k = 0; k < D; ++k) mean[y][k] += data[i].features[m][u][k];
    }
  for (std::size_t c = 0; c < C; ++c)
    for (auto& v : mean[c]) v /= std::max<std::size_t>(count[c], 1);
  std::size_t correct = 0, n = 0;
  for (std::size_t i = half; i < data.size(); ++i)
    for (std::size_t u = 0; u < data[i].length(); ++u) {
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t c = 0; c < C; ++c) {
        if (count[c] == 0) continue;
        double dist = 0.0;
        for (std::size_t k = 0; k < D; ++k) {
          const double e = data[i].features[m][u][k] - mean[c][k];
          dist += e * e;
        }
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      correct += static_cast<int>(best) == data[i].labels[u];
      ++n;
    }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("config validation") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  c.len_min = 10;
  c.len_max = 5;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = {};
  c.kappa = 0.8;
  c.gamma = 0.3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.rho[1] = 1.2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.prior = {0.5, 0.5};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(synth_preset("huge"), ConfigError);
}

TEST_CASE("presets") {
  CHECK(synth_preset("tiny").n_dialogues == 20);
  CHECK(synth_preset("tiny").rho[0] == 0.9);
  const auto meld = synth_preset("meld-like");
  CHECK(meld.classes == 7);
  CHECK(meld.prior[0] == doctest::Approx(5180.0 / 10923.0));
  CHECK_NOTHROW(meld.validate());
  CHECK(synth_preset("full-dims").dims == std::array<std::size_t, 3>{1024, 342, 1582});
}

TEST_CASE("generation is deterministic and thread-count independent") {
  SynthConfig c;
  c.n_dialogues = 40;
  c.seed = 77;
  const auto dir = std::filesystem::temp_directory_path() / "dgerc_test_synth";
  std::filesystem::create_directories(dir);
  omp_set_num_threads(1);
  write_jsonl(dir / "a.jsonl", generate(c));
  omp_set_num_threads(4);
  write_jsonl(dir / "b.jsonl", generate(c));
  omp_set_num_threads(1);
  CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  c.seed = 78;
  write_jsonl(dir / "c.jsonl", generate(c));
  CHECK(slurp(dir / "a.jsonl") != slurp(dir / "c.jsonl"));

  const auto back = read_jsonl(dir / "a.jsonl");
  c.seed = 77;
  const auto orig = generate(c);
  REQUIRE(back.size() == orig.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].id == orig[i].id);
    CHECK(back[i].labels == orig[i].labels);
    CHECK(back[i].features[2] == orig[i].features[2]);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("record shapes and ranges") {
  SynthConfig c;
  c.n_dialogues = 30;
  c.n_speakers = 3;
  for (const auto& d : generate(c)) {
    CHECK(d.length() >= c.len_min);
    CHECK(d.length() <= c.len_max);
    CHECK_NOTHROW(validate(d, c.dims, 3, 6));
  }
}

TEST_CASE("full persistence keeps each speaker's label constant") {
  SynthConfig c;
  c.n_dialogues = 50;
  c.kappa = 1.0;
  c.gamma = 0.0;
  c.n_speakers = 3;
  for (const auto& d : generate(c)) {
    std::vector<int> first(3, -1);
    for (std::size_t i = 0; i < d.length(); ++i) {
      int& f = first[static_cast<std::size_t>(d.speakers[i])];
      if (f < 0) f = d.labels[i];
      CHECK(d.labels[i] == f);
    }
  }
}

TEST_CASE("repeat rate matches the chain within 3 sigma") {
  for (auto [kappa, gamma] : {std::pair{0.6, 0.3}, std::pair{0.2, 0.5}, std::pair{0.0, 0.0}}) {
    SynthConfig c;
    c.n_dialogues = 1200;
    c.kappa = kappa;
    c.gamma = gamma;
    c.prior = {0.4, 0.2, 0.1, 0.1, 0.1, 0.1};
    const auto data = generate(c);
    double expected = 0.0, var = 0.0, observed = 0.0;
    std::size_t n = 0;
    for (const auto& d : data) {
      std::vector<int> last(c.n_speakers, -1);
      for (std::size_t i = 0; i < d.length(); ++i) {
        const auto s = static_cast<std::size_t>(d.speakers[i]);
        int other = -1;
        for (std::size_t j = i; j-- > 0;)
          if (d.speakers[j] != d.speakers[i]) {
            other = d.labels[j];
            break;
          }
        if (last[s] >= 0 && other >= 0) {
          // P(repeat) = kappa + gamma [other == own last] + (1 - kappa - gamma) prior[own last]
          const double p = kappa + gamma * (other == last[s]) +
                           (1 - kappa - gamma) * c.prior[static_cast<std::size_t>(last[s])];
          expected += p;
          var += p * (1 - p);
          observed += d.labels[i] == last[s];
          ++n;
        }
        last[s] = d.labels[i];
      }
    }
    INFO("kappa=" << kappa << " gamma=" << gamma << " n=" << n);
    CHECK(n > 10000);
    CHECK(std::abs(observed - expected) <= 3 * std::sqrt(var));
  }
}

TEST_CASE("informativeness") {
  SUBCASE("rho = 0 carries no label information") {
    SynthConfig c;
    c.n_dialogues = 400;
    c.rho = {0.0, 0.0, 0.0};
    c.kappa = 0.0;
    c.gamma = 0.0;
    const double acc = nearest_mean_accuracy(generate(c), 0, c.classes);
    CHECK(std::abs(acc - 1.0 / 6.0) <= 0.1);
  }
  SUBCASE("accuracy rises with rho") {
    double prev = 0.0;
    for (double rho : {0.05, 0.15, 0.3, 0.6}) {
      double mean = 0.0;
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SynthConfig c;
        c.n_dialogues = 80;
        c.seed = seed;
        c.rho[0] = rho;
        mean += nearest_mean_accuracy(generate(c), 0, c.classes) / 5.0;
      }
      INFO("rho=" << rho << " acc=" << mean);
      CHECK(mean > prev);
      prev = mean;
    }
  }
}

TEST_CASE("noise injection") {
  SynthConfig c;
  c.n_dialogues = 200;
  const auto clean = generate(c);
  SUBCASE("sigma = 0 is the identity and draws nothing") {
    Rng rng(5), ref(5);
    const auto same = inject_noise(clean, {0, 0, 0}, rng);
    CHECK(rng == ref);
    for (std::size_t i = 0; i < clean.size(); ++i)
      for (std::size_t m = 0; m < kModalities; ++m) CHECK(same[i].features[m] == clean[i].features[m]);
  }
  SUBCASE("sigma = 0.7 scales the std by sqrt(1.49)") {
    Rng rng(6);
    const auto noisy = inject_noise(clean, {0.7, 0.7, 0.7}, rng);
    for (std::size_t m = 0; m < kModalities; ++m) {
      const double ratio = feature_std(noisy, m) / feature_std(clean, m);
      CHECK(std::abs(ratio / std::sqrt(1.49) - 1.0) <= 0.05);
    }
  }
  SUBCASE("labels, speakers and generation stream untouched") {
    Rng rng(7);
    const auto noisy = inject_noise(clean, {0.3, 0.1, 0.5}, rng);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      CHECK(noisy[i].labels == clean[i].labels);
      CHECK(noisy[i].speakers == clean[i].speakers);
    }
    const auto again = generate(c);
    CHECK(again[3].features[0] == clean[3].features[0]);
  }
}
