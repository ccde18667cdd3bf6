#include "dgerc/data.hpp"

#include <fstream>

#include "json.hpp"

namespace dgerc {

template <typename T>
std::size_t DialogueBatch<T>::valid_count() const {
  std::size_t n = 0;
  for (auto m : mask.values()) n += m != 0;
  return n;
}

template <typename T>
DialogueBatch<T> collate(std::span<const Dialogue> dialogues, std::size_t n_speakers) {
  if (dialogues.empty()) throw DataError("collate: empty batch");
  std::size_t L = 0;
  for (const auto& d : dialogues) L = std::max(L, d.length());
  if (L == 0) throw DataError("collate: all dialogues are empty");
  const std::size_t B = dialogues.size();
  std::array<std::size_t, kModalities> dims{};
  for (std::size_t m = 0; m < kModalities; ++m) {
    const auto& f = dialogues.front().features[m];
    if (f.empty()) throw DataError("collate: dialogue " + dialogues.front().id + " has no " + kModalityNames[m] + " features");
    dims[m] = f.front().size();
  }
  DialogueBatch<T> batch;
  for (std::size_t m = 0; m < kModalities; ++m) batch.features[m] = Tensor<T>({B, L, dims[m]});
  batch.speakers = IdTensor({B, L}, static_cast<int>(n_speakers));
  batch.labels = IdTensor({B, L}, -1);
  batch.mask = MaskTensor({B, L}, 0);
  for (std::size_t b = 0; b < B; ++b) {
    const Dialogue& d = dialogues[b];
    validate(d, dims, static_cast<int>(n_speakers), -1);
    for (std::size_t i = 0; i < d.length(); ++i) {
      batch.speakers[b * L + i] = d.speakers[i];
      batch.labels[b * L + i] = d.labels[i];
      batch.mask[b * L + i] = 1;
      for (std::size_t m = 0; m < kModalities; ++m) {
        const auto& row = d.features[m][i];
        T* dst = batch.features[m].data() + (b * L + i) * dims[m];
        for (std::size_t k = 0; k < dims[m]; ++k) dst[k] = static_cast<T>(row[k]);
      }
    }
  }
  return batch;
}

void validate(const Dialogue& d, const std::array<std::size_t, kModalities>& dims,
              int n_speakers, int n_classes) {
  const std::size_t n = d.length();
  if (d.labels.size() != n) {
    throw DataError("dialogue " + d.id + ": " + std::to_string(d.labels.size()) + " labels for " +
                    std::to_string(n) + " utterances");
  }
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (d.features[m].size() != n) {
      throw DataError("dialogue " + d.id + ": " + kModalityNames[m] + " has " +
                      std::to_string(d.features[m].size()) + " rows for " + std::to_string(n) +
                      " utterances");
    }
    for (const auto& row : d.features[m]) {
      if (row.size() != dims[m]) {
        throw DataError("dialogue " + d.id + ": " + kModalityNames[m] + " feature dim " +
                        std::to_string(row.size()) + ", expected " + std::to_string(dims[m]));
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (d.speakers[i] < 0 || (n_speakers >= 0 && d.speakers[i] >= n_speakers)) {
      throw DataError("dialogue " + d.id + ": speaker id " + std::to_string(d.speakers[i]) +
                      " out of range [0," + std::to_string(n_speakers) + ")");
    }
    if (d.labels[i] < 0 || (n_classes >= 0 && d.labels[i] >= n_classes)) {
      throw DataError("dialogue " + d.id + ": label " + std::to_string(d.labels[i]) +
                      " out of range [0," + std::to_string(n_classes) + ")");
    }
  }
}

std::string to_json_line(const Dialogue& d) {
  nlohmann::json j;
  j["id"] = d.id;
  j["speakers"] = d.speakers;
  j["labels"] = d.labels;
  for (std::size_t m = 0; m < kModalities; ++m) j[kModalityNames[m]] = d.features[m];
  return j.dump();
}

Dialogue from_json_line(const std::string& line) {
  const nlohmann::json j = nlohmann::json::parse(line);
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  d.speakers = j.at("speakers").get<std::vector<int>>();
  d.labels = j.at("labels").get<std::vector<int>>();
  for (std::size_t m = 0; m < kModalities; ++m) {
    d.features[m] = j.at(kModalityNames[m]).get<std::vector<std::vector<float>>>();
  }
  return d;
}

std::vector<Dialogue> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Dialogue> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Dialogue> dialogues) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& d : dialogues) out << to_json_line(d) << '\n';
  if (!out) throw DataError("write failed for " + path.string());
}

template struct DialogueBatch<float>;
template struct DialogueBatch<double>;
template DialogueBatch<float> collate<float>(std::span<const Dialogue>, std::size_t);
template DialogueBatch<double> collate<double>(std::span<const Dialogue>, std::size_t);

}  // namespace dgerc
