#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dgerc/data.hpp"
#include "dgerc/rng.hpp"

namespace dgerc {

// Synthetic dialogues. Labels follow a two-factor chain per utterance: with
// probability kappa the speaker repeats their own last emotion, with
// probability gamma they take the last emotion of the most recent other
// speaker, otherwise a fresh draw from the prior. A branch whose source does
// not exist yet (first turn) falls back to the prior.
// Features: rho_m * centroid_m[label] + sigma_m * N(0, I), centroid entries
// drawn N(0, 1/D_m).
struct SynthConfig {
  std::size_t n_dialogues = 500;
  std::size_t len_min = 8;
  std::size_t len_max = 16;
  std::size_t n_speakers = 2;
  std::size_t classes = 6;
  std::vector<double> prior;  // empty means uniform
  std::array<double, kModalities> rho{0.8, 0.3, 0.6};
  double kappa = 0.6;
  double gamma = 0.3;
  double switch_prob = 0.7;   // chance the next turn goes to another speaker
  std::array<std::size_t, kModalities> dims{32, 16, 24};
  std::array<double, kModalities> sigma{1.0, 1.0, 1.0};
  std::uint64_t seed = 1;

  void validate() const;
  std::vector<double> class_prior() const;
};

// Named presets: default, tiny, bench (noise 0.5), meld-like, full-dims.
SynthConfig synth_preset(const std::string& name);

// Class centroids per modality, [C][D_m], fixed by the seed.
std::array<std::vector<std::vector<double>>, kModalities> synth_centroids(const SynthConfig& cfg);

// Dialogue i only depends on (seed, i), so generation runs in parallel.
std::vector<Dialogue> generate(const SynthConfig& cfg);

// Adds N(0, (sigma_m * std_m)^2) per feature, std_m being the global feature
// std of modality m over `records`. Draws from `rng` only.
std::vector<Dialogue> inject_noise(const std::vector<Dialogue>& records,
                                   const std::array<double, kModalities>& sigma, Rng& rng);

// Global standard deviation of every feature value of one modality.
double feature_std(const std::vector<Dialogue>& records, std::size_t modality);

}  // namespace dgerc
