#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dgerc/tensor.hpp"

namespace dgerc {

// Row = true class, column = predicted class.
class Confusion {
 public:
  explicit Confusion(std::size_t n_classes = 0) : n_(n_classes), counts_(n_classes * n_classes, 0) {}

  void add(int label, int pred);
  std::size_t at(std::size_t label, std::size_t pred) const { return counts_[label * n_ + pred]; }
  std::size_t classes() const { return n_; }
  std::size_t total() const;
  std::size_t support(std::size_t c) const;    // row sum
  std::size_t predicted(std::size_t c) const;  // column sum

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

struct ClassStats {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool present = false;  // support > 0
};

// Precision with no predictions counts as 0.
ClassStats class_stats(const Confusion& cm, std::size_t c);

struct EvalReport {
  double wa_acc = 0.0;  // overall accuracy (= support-weighted recall)
  double wa_f1 = 0.0;   // support-weighted F1
  std::vector<ClassStats> per_class;
  Confusion confusion;
  std::size_t count = 0;
};

EvalReport evaluate(const Confusion& cm);
EvalReport evaluate(const std::vector<int>& labels, const std::vector<int>& preds,
                    std::size_t n_classes);

// Argmax over the last axis of logits [B,L,C] at valid positions.
template <typename T>
void accumulate(Confusion& cm, const Tensor<T>& logits, const IdTensor& labels,
                const MaskTensor& mask);

template <typename T>
std::vector<int> argmax_last(const Tensor<T>& logits);

// {"epoch", "split", "wa_acc", "wa_f1", "per_class": [...], "confusion": [[...]]}
std::string metrics_json(const EvalReport& r, int epoch, const std::string& split);

}  // namespace dgerc
