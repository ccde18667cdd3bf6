#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgerc/checkpoint.hpp"
#include "dgerc/config.hpp"
#include "dgerc/metrics.hpp"

namespace dgerc {

// Non-finite loss. The message names the last checkpoint written.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& msg, std::filesystem::path last_good)
      : std::runtime_error(msg), last_good_(std::move(last_good)) {}
  const std::filesystem::path& last_good() const { return last_good_; }

 private:
  std::filesystem::path last_good_;
};

struct EpochStats {
  int epoch = 0;
  std::size_t batches = 0;
  std::size_t scored = 0;  // batches that produced a loss
  double total = 0.0, fusion = 0.0;
  Triple unimodal{};
  std::size_t balance_active = 0, balance_applied = 0;
  Triple p{}, q{};
  double theta = 0.0;
  std::optional<EvalReport> train, val;
};

struct TrainSummary {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_f1 = -1.0;
  EvalReport train, val, test;
  bool has_val = false, has_test = false;
  std::vector<EpochStats> history;  // epochs run by this call only
};

// Scores fused predictions batch by batch in the given order, no dropout, no
// balancing.
template <std::floating_point T>
EvalReport evaluate_model(const Model<T>& model, const std::vector<Dialogue>& data,
                          std::size_t batch_size);

// Seeded training loop. Files in run_dir: config.txt, metrics.jsonl,
// losses.csv, balance.csv, lambda.csv, last.ckpt, summary.json. An empty
// run_dir disables all file output.
template <std::floating_point T>
class Trainer {
 public:
  Trainer(RunConfig cfg, DataSplits data, std::filesystem::path run_dir);

  // Continues from a checkpoint of a run with the same config hash; log rows
  // after the checkpoint epoch are dropped.
  void resume(const std::filesystem::path& checkpoint);

  TrainSummary run();

  Model<T>& model() { return model_; }
  const RunConfig& config() const { return cfg_; }

 private:
  EpochStats train_epoch(int epoch);
  Checkpoint make_checkpoint(int completed) const;
  void write_logs(const EpochStats& s);
  std::filesystem::path last_good() const;

  RunConfig cfg_;
  DataSplits data_;
  std::filesystem::path dir_;
  Model<T> model_;
  Adam<T> adam_;
  Rng shuffle_rng_, dropout_rng_, modality_rng_;
  int start_epoch_ = 0;
  int best_epoch_ = -1;
  double best_score_ = -1.0;
  std::vector<NamedTensor> best_;
  std::vector<std::pair<std::string, double>> last_lambdas_;
};

// Evaluates `data` at every sigma of the grid. Noise draws come from
// Rng(derive(noise_seed, k)) for grid point k; sigma 0 leaves data untouched.
struct NoiseRow {
  double sigma = 0.0;
  EvalReport report;
};
template <std::floating_point T>
std::vector<NoiseRow> noise_grid_eval(const Model<T>& model, const std::vector<Dialogue>& data,
                                      const std::vector<double>& grid, std::size_t batch_size,
                                      std::uint64_t noise_seed);

// Keeps log rows whose epoch is < `epochs` (CSV first column or JSON "epoch").
void truncate_log(const std::filesystem::path& path, int epochs);

}  // namespace dgerc
