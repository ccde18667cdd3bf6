#include "dgerc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dgerc {

namespace {

constexpr std::uint64_t kCentroidStream = 1ULL << 40;

int draw_class(const std::vector<double>& prior, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t c = 0; c < prior.size(); ++c) {
    acc += prior[c];
    if (u < acc) return static_cast<int>(c);
  }
  return static_cast<int>(prior.size()) - 1;
}

}  // namespace

void SynthConfig::validate() const {
  if (len_min == 0 || len_min > len_max)
    throw ConfigError("synth: need 0 < len_min <= len_max, got " + std::to_string(len_min) + ".." +
                      std::to_string(len_max));
  if (n_speakers == 0) throw ConfigError("synth: n_speakers must be >= 1");
  if (classes < 2) throw ConfigError("synth: classes must be >= 2");
  for (double r : rho)
    if (r < 0.0 || r > 1.0) throw ConfigError("synth: rho must be in [0,1]");
  if (kappa < 0.0 || kappa > 1.0 || gamma < 0.0 || gamma > 1.0)
    throw ConfigError("synth: kappa and gamma must be in [0,1]");
  if (kappa + gamma > 1.0) throw ConfigError("synth: kappa + gamma must not exceed 1");
  if (switch_prob < 0.0 || switch_prob > 1.0) throw ConfigError("synth: switch_prob must be in [0,1]");
  for (double s : sigma)
    if (s < 0.0) throw ConfigError("synth: sigma must be >= 0");
  for (std::size_t d : dims)
    if (d == 0) throw ConfigError("synth: feature dims must be > 0");
  if (!prior.empty()) {
    if (prior.size() != classes)
      throw ConfigError("synth: prior has " + std::to_string(prior.size()) + " entries for " +
                        std::to_string(classes) + " classes");
    double s = 0.0;
    for (double p : prior) {
      if (p < 0.0) throw ConfigError("synth: prior entries must be >= 0");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("synth: prior must sum to 1");
  }
}

std::vector<double> SynthConfig::class_prior() const {
  if (!prior.empty()) return prior;
  return std::vector<double>(classes, 1.0 / static_cast<double>(classes));
}

SynthConfig synth_preset(const std::string& name) {
  SynthConfig c;
  if (name == "tiny") {
    c.n_dialogues = 20;
    c.rho = {0.9, 0.9, 0.9};
  } else if (name == "bench") {
    c.sigma = {0.5, 0.5, 0.5};
  } else if (name == "default") {
  } else if (name == "meld-like") {
    c.classes = 7;
    const std::vector<double> counts{5180, 1940, 794, 1243, 1205, 293, 268};
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (double n : counts) c.prior.push_back(n / total);
  } else if (name == "full-dims") {
    c.dims = {1024, 342, 1582};
  } else {
    throw ConfigError("unknown synth preset '" + name + "' (default, tiny, bench, meld-like, full-dims)");
  }
  return c;
}

std::array<std::vector<std::vector<double>>, kModalities> synth_centroids(const SynthConfig& cfg) {
  Rng rng(Rng::derive(cfg.seed, kCentroidStream));
  std::array<std::vector<std::vector<double>>, kModalities> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    // unit expected norm, so rho_m is the signal amplitude whatever D_m is
    const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.dims[m]));
    out[m].assign(cfg.classes, std::vector<double>(cfg.dims[m]));
    for (auto& row : out[m])
      for (auto& v : row) v = rng.normal(0.0, sd);
  }
  return out;
}

std::vector<Dialogue> generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto centroids = synth_centroids(cfg);
  const auto prior = cfg.class_prior();
  std::vector<Dialogue> out(cfg.n_dialogues);
  const auto n = static_cast<std::int64_t>(cfg.n_dialogues);
#pragma omp parallel for schedule(static)
  for (std::int64_t idx = 0; idx < n; ++idx) {
    Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(idx)));
    Dialogue& d = out[static_cast<std::size_t>(idx)];
    d.id = "synth-" + std::to_string(cfg.seed) + "-" + std::to_string(idx);
    const std::size_t L = cfg.len_min + rng.below(cfg.len_max - cfg.len_min + 1);
    std::vector<int> last(cfg.n_speakers, -1);
    int spk = static_cast<int>(rng.below(cfg.n_speakers));
    for (std::size_t i = 0; i < L; ++i) {
      if (i > 0 && cfg.n_speakers > 1 && rng.bernoulli(cfg.switch_prob)) {
        const int shift = 1 + static_cast<int>(rng.below(cfg.n_speakers - 1));
        spk = (spk + shift) % static_cast<int>(cfg.n_speakers);
      }
      // most recent emotion of a different speaker
      int other = -1;
      for (int j = static_cast<int>(i) - 1; j >= 0; --j) {
        if (d.speakers[static_cast<std::size_t>(j)] != spk) {
          other = d.labels[static_cast<std::size_t>(j)];
          break;
        }
      }
      const double u = rng.uniform();
      int y;
      if (u < cfg.kappa && last[static_cast<std::size_t>(spk)] >= 0) {
        y = last[static_cast<std::size_t>(spk)];
      } else if (u >= cfg.kappa && u < cfg.kappa + cfg.gamma && other >= 0) {
        y = other;
      } else {
        y = draw_class(prior, rng);
      }
      last[static_cast<std::size_t>(spk)] = y;
      d.speakers.push_back(spk);
      d.labels.push_back(y);
    }
    for (std::size_t m = 0; m < kModalities; ++m) {
      d.features[m].resize(L);
      for (std::size_t i = 0; i < L; ++i) {
        const auto& c = centroids[m][static_cast<std::size_t>(d.labels[i])];
        auto& row = d.features[m][i];
        row.resize(cfg.dims[m]);
        for (std::size_t k = 0; k < cfg.dims[m]; ++k)
          row[k] = static_cast<float>(cfg.rho[m] * c[k] + cfg.sigma[m] * rng.normal());
      }
    }
  }
  return out;
}

double feature_std(const std::vector<Dialogue>& records, std::size_t modality) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& d : records)
    for (const auto& row : d.features[modality])
      for (float v : row) {
        sum += v;
        sq += static_cast<double>(v) * v;
        ++n;
      }
  if (n == 0) return 0.0;
  const double mean = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
}

std::vector<Dialogue> inject_noise(const std::vector<Dialogue>& records,
                                   const std::array<double, kModalities>& sigma, Rng& rng) {
  for (double s : sigma)
    if (s < 0.0) throw ConfigError("noise sigma must be >= 0");
  std::vector<Dialogue> out = records;
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (sigma[m] == 0.0) continue;
    const double sd = sigma[m] * feature_std(records, m);
    for (auto& d : out)
      for (auto& row : d.features[m])
        for (float& v : row) v = static_cast<float>(v + sd * rng.normal());
  }
  return out;
}

}  // namespace dgerc
