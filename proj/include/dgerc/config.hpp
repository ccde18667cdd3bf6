#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dgerc/model.hpp"
#include "dgerc/synth.hpp"

namespace dgerc {

// Everything a training run needs. Text form is flat `key = value`, one per
// line, '#' starts a comment.
struct RunConfig {
  // data: explicit JSONL files, or a synthetic set split by `split`
  std::string train_path;
  std::string val_path;
  std::string test_path;
  SynthConfig synth;
  std::array<double, 3> split{0.7, 0.15, 0.15};

  ModelConfig model;

  double lr = 6.8e-5;
  double weight_decay = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 16;
  int epochs = 100;

  std::uint64_t seed = 1;
  std::string precision = "f32";  // f32 | f64
  int threads = 1;
  bool eval_train = false;        // also score the train split every epoch
  std::vector<double> noise_grid{0.0, 0.1, 0.3, 0.5, 0.7};

  RunConfig();

  bool uses_synth() const { return train_path.empty(); }

  // Throws ConfigError on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  void set_assignment(const std::string& key_eq_value);
  void load_file(const std::filesystem::path& path);

  void validate() const;

  // Canonical text, every key in a fixed order.
  std::string to_text() const;
  // Hash over the keys that shape the trajectory (not epochs or threads).
  std::string hash() const;

  static std::vector<std::string> keys();
  static RunConfig from_text(const std::string& text);
};

// standard: full-size defaults. desk: 500-dialogue synthetic benchmark at a
// width a single core trains in seconds. tiny: 20 easy dialogues, all train.
RunConfig run_preset(const std::string& name);

struct DataSplits {
  std::vector<Dialogue> train, val, test;
};

// Reads or generates the data, fills model.input_dims from it and checks
// every dialogue against the config.
DataSplits load_data(RunConfig& cfg);

// Root for run outputs: $DGERC_OUTPUT_ROOT, else ./runs.
std::filesystem::path output_root();

}  // namespace dgerc
