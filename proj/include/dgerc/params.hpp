#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dgerc/rng.hpp"
#include "dgerc/tape.hpp"

namespace dgerc {

// Owns every learnable tensor under a stable name. Parameters never move
// once added, so tapes may hold pointers to them.
template <std::floating_point T>
class ParamStore {
 public:
  Parameter<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.contains(name)) throw std::logic_error("duplicate parameter " + name);
    index_.emplace(name, params_.size());
    params_.push_back(std::make_unique<Parameter<T>>(Parameter<T>{name, std::move(value), {}}));
    params_.back()->zero_grad();
    return *params_.back();
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Parameter<T>& get(const std::string& name) { return *params_.at(lookup(name)); }
  const Parameter<T>& get(const std::string& name) const { return *params_.at(lookup(name)); }

  // Registration order.
  std::vector<Parameter<T>*> all() {
    std::vector<Parameter<T>*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<const Parameter<T>*> all() const {
    std::vector<const Parameter<T>*> out;
    for (const auto& p : params_) out.push_back(p.get());
    return out;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& p : params_) out.push_back(p->name);
    return out;
  }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
  }

  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

namespace init {

// Glorot uniform for a [fan_in, fan_out] matrix.
template <std::floating_point T>
Tensor<T> glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t({fan_in, fan_out});
  for (auto& v : t.values()) v = static_cast<T>((rng.uniform() * 2.0 - 1.0) * limit);
  return t;
}

template <std::floating_point T>
Tensor<T> normal(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
  return t;
}

}  // namespace init

}  // namespace dgerc
