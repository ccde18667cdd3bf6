#include "dgerc/metrics.hpp"

#include "json.hpp"

namespace dgerc {

void Confusion::add(int label, int pred) {
  if (label < 0 || static_cast<std::size_t>(label) >= n_ || pred < 0 ||
      static_cast<std::size_t>(pred) >= n_) {
    throw DataError("confusion: label " + std::to_string(label) + " / prediction " +
                    std::to_string(pred) + " outside " + std::to_string(n_) + " classes");
  }
  ++counts_[static_cast<std::size_t>(label) * n_ + static_cast<std::size_t>(pred)];
}

std::size_t Confusion::total() const {
  std::size_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::size_t Confusion::support(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += at(c, p);
  return s;
}

std::size_t Confusion::predicted(std::size_t c) const {
  std::size_t s = 0;
  for (std::size_t y = 0; y < n_; ++y) s += at(y, c);
  return s;
}

ClassStats class_stats(const Confusion& cm, std::size_t c) {
  ClassStats s;
  const double tp = static_cast<double>(cm.at(c, c));
  const std::size_t pred = cm.predicted(c);
  s.support = cm.support(c);
  s.present = s.support > 0;
  s.precision = pred > 0 ? tp / static_cast<double>(pred) : 0.0;
  s.recall = s.support > 0 ? tp / static_cast<double>(s.support) : 0.0;
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

EvalReport evaluate(const Confusion& cm) {
  EvalReport r;
  r.confusion = cm;
  r.count = cm.total();
  if (r.count == 0) return r;
  std::size_t correct = 0;
  double f1 = 0.0;
  for (std::size_t c = 0; c < cm.classes(); ++c) {
    ClassStats s = class_stats(cm, c);
    correct += cm.at(c, c);
    f1 += static_cast<double>(s.support) * s.f1;
    r.per_class.push_back(s);
  }
  r.wa_acc = static_cast<double>(correct) / static_cast<double>(r.count);
  r.wa_f1 = f1 / static_cast<double>(r.count);
  return r;
}

EvalReport evaluate(const std::vector<int>& labels, const std::vector<int>& preds,
                    std::size_t n_classes) {
  if (labels.size() != preds.size()) throw DataError("evaluate: label/prediction count mismatch");
  Confusion cm(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) cm.add(labels[i], preds[i]);
  return evaluate(cm);
}

template <typename T>
std::vector<int> argmax_last(const Tensor<T>& logits) {
  const std::size_t C = logits.dim(-1);
  const std::size_t rows = logits.size() / C;
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = logits.data() + r * C;
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (x[c] > x[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
void accumulate(Confusion& cm, const Tensor<T>& logits, const IdTensor& labels,
                const MaskTensor& mask) {
  const auto preds = argmax_last(logits);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) cm.add(labels[i], preds[i]);
}

std::string metrics_json(const EvalReport& r, int epoch, const std::string& split) {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["split"] = split;
  j["wa_acc"] = r.wa_acc;
  j["wa_f1"] = r.wa_f1;
  j["count"] = r.count;
  nlohmann::json pc = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& s = r.per_class[c];
    if (!s.present) continue;
    pc.push_back({{"class", c},
                  {"precision", s.precision},
                  {"recall", s.recall},
                  {"f1", s.f1},
                  {"support", s.support}});
  }
  j["per_class"] = pc;
  nlohmann::json cm = nlohmann::json::array();
  for (std::size_t y = 0; y < r.confusion.classes(); ++y) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < r.confusion.classes(); ++p) row.push_back(r.confusion.at(y, p));
    cm.push_back(row);
  }
  j["confusion"] = cm;
  return j.dump();
}

template std::vector<int> argmax_last<float>(const Tensor<float>&);
template std::vector<int> argmax_last<double>(const Tensor<double>&);
template void accumulate<float>(Confusion&, const Tensor<float>&, const IdTensor&, const MaskTensor&);
template void accumulate<double>(Confusion&, const Tensor<double>&, const IdTensor&, const MaskTensor&);

}  // namespace dgerc
