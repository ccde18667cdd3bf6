#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgerc/config.hpp"
#include "dgerc/gradcheck.hpp"

namespace dgerc {

// full | no-md | plain-gat | no-graph
void apply_ablation(RunConfig& cfg, const std::string& name);

struct GradcheckCase {
  std::string name;
  FdReport report;
  double seconds = 0.0;
};

struct ContractCheck {
  double theta = 0.0;
  double theta_grad = 0.0;          // must be exactly 0
  double max_feature_dev = 0.0;     // max |grad - mask/(1-theta)|
  bool passed = false;
};

// Full-model finite-difference checks in f64 on one dialogue of 3
// utterances: balance off, balance on with a fixed mask and theta = 0.3
// (theta blocked), and the no-graph ablation.
std::vector<GradcheckCase> model_gradcheck(double tol, std::uint64_t seed);

// Gradient of sum(F'') through the compensation op on random features.
ContractCheck compensation_contract(double theta, std::uint64_t seed);

struct BenchRow {
  std::string mode;  // diffrgcn | plain-gat
  std::size_t batch = 0, length = 0, window = 0, d = 0, heads = 0;
  double batch_ms = 0.0;       // median forward time of the graph stack
  double per_sample_ms = 0.0;  // batch_ms / batch
  double throughput = 0.0;     // dialogues per second
  double flops = 0.0;          // B L w d h + B L^2 / h
};

double flop_estimate(std::size_t batch, std::size_t length, std::size_t window, std::size_t d,
                     std::size_t heads);

// Times inference of the graph stack alone on random encoder outputs.
BenchRow bench_graph(GraphMode mode, std::size_t batch, std::size_t length, std::size_t window,
                     std::size_t d, std::size_t heads, std::size_t reps, std::uint64_t seed);

// Least-squares slope of log(y) on log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace dgerc
