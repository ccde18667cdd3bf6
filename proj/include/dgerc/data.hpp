#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dgerc/tensor.hpp"

namespace dgerc {

enum Modality : std::size_t { kText = 0, kVisual = 1, kAudio = 2 };
inline constexpr std::size_t kModalities = 3;
inline constexpr std::array<const char*, kModalities> kModalityNames{"text", "visual", "audio"};
inline constexpr std::array<const char*, kModalities> kModalityTags{"t", "v", "a"};

// One dialogue as stored on disk: per-utterance speaker, label and features.
struct Dialogue {
  std::string id;
  std::vector<int> speakers;
  std::vector<int> labels;
  std::array<std::vector<std::vector<float>>, kModalities> features;

  std::size_t length() const { return speakers.size(); }
};

// Padded batch of B dialogues with max length L. Padded positions have zero
// features, speaker id n_speakers and label -1.
template <typename T>
struct DialogueBatch {
  std::array<Tensor<T>, kModalities> features;  // [B,L,D_m]
  IdTensor speakers;                           // [B,L]
  IdTensor labels;                             // [B,L]
  MaskTensor mask;                             // [B,L]

  std::size_t batch() const { return mask.dim(0); }
  std::size_t length() const { return mask.dim(1); }
  std::size_t valid_count() const;
};

template <typename T>
DialogueBatch<T> collate(std::span<const Dialogue> dialogues, std::size_t n_speakers);

// Canonical JSON-lines format, one dialogue per line:
// {"id", "speakers", "labels", "text", "visual", "audio"}.
std::vector<Dialogue> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const Dialogue> dialogues);
std::string to_json_line(const Dialogue& d);
Dialogue from_json_line(const std::string& line);

// Checks internal consistency (lengths, per-modality dims, id ranges).
// Negative bounds skip the corresponding range check.
void validate(const Dialogue& d, const std::array<std::size_t, kModalities>& dims,
              int n_speakers, int n_classes);

}  // namespace dgerc
