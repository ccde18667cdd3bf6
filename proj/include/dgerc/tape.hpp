#pragma once

#include <concepts>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dgerc/tensor.hpp"

namespace dgerc {

template <std::floating_point T>
class Tape;

// Learnable tensor that outlives any single tape.
template <std::floating_point T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

// Handle to a node recorded on a tape.
template <std::floating_point T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(*this); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of one forward pass. Single use: backward() may run once,
// after which the tape only serves reads of values and gradients.
template <std::floating_point T>
class Tape {
 public:
  // Called with the node's upstream gradient and its own forward value.
  using Backward =
      std::function<void(Tape&, const Tensor<T>& grad_out, const Tensor<T>& out_value)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr, {}); }

  // Leaf that collects a gradient readable through grad().
  Var<T> input(Tensor<T> value) { return push(std::move(value), true, nullptr, {}); }

  // Parameters are registered once per tape; their node gradient is added
  // into Parameter::grad when backward() finishes.
  Var<T> param(Parameter<T>& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var<T>(this, it->second);
    Var<T> v = push(p.value, true, &p, {});
    param_ids_.emplace(&p, v.id());
    return v;
  }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward fn) {
    return record(std::move(value), std::vector<Var<T>>(inputs), std::move(fn));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward fn) {
    bool needs = false;
    for (const Var<T>& in : inputs) {
      if (in.tape() != this) throw std::logic_error("op mixes vars from different tapes");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), needs, nullptr, needs ? std::move(fn) : Backward{});
  }

  void backward(Var<T> root) {
    if (consumed_) throw std::logic_error("tape already consumed by a backward pass");
    consumed_ = true;
    Node& r = nodes_.at(root.id());
    if (!r.requires_grad) return;
    r.grad = Tensor<T>(r.value.shape(), T(1));
    r.has_grad = true;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.has_grad && n.backward) n.backward(*this, n.grad, n.value);
    }
    for (Node& n : nodes_) {
      if (n.param == nullptr || !n.has_grad) continue;
      if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
    }
  }

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id()).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id()).requires_grad; }
  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of a node after backward(); zeros when nothing reached it.
  Tensor<T> grad(Var<T> v) const {
    const Node& n = nodes_.at(v.id());
    return n.has_grad ? n.grad : Tensor<T>(n.value.shape());
  }

  // Accumulator used by backward closures.
  Tensor<T>& grad_sink(Var<T> v) {
    Node& n = nodes_[v.id()];
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
    return n.grad;
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    Parameter<T>* param = nullptr;
    Backward backward;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Parameter<T>* p, Backward fn) {
    if (consumed_) throw std::logic_error("recording on a consumed tape");
    nodes_.push_back(Node{std::move(value), Tensor<T>{}, requires_grad, false, p, std::move(fn)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter<T>*, std::size_t> param_ids_;
  bool consumed_ = false;
};

}  // namespace dgerc
