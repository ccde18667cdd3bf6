#pragma once

#include <cstdint>
#include <vector>

#include "dgerc/params.hpp"

namespace dgerc {

struct AdamOptions {
  double lr = 6.8e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-5;  // L2 term added to the gradient
};

// Adam over every parameter of a store, moments kept in registration order.
template <std::floating_point T>
class Adam {
 public:
  Adam(ParamStore<T>& store, AdamOptions opt);

  // Uses Parameter::grad; does not clear it.
  void step();

  std::uint64_t steps() const { return t_; }
  const AdamOptions& options() const { return opt_; }
  const std::vector<Tensor<T>>& first_moments() const { return m_; }
  const std::vector<Tensor<T>>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<Tensor<T>> m, std::vector<Tensor<T>> v);

 private:
  ParamStore<T>* store_;
  AdamOptions opt_;
  std::uint64_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace dgerc
