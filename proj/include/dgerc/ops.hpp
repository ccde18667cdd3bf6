#pragma once

#include <concepts>
#include <functional>
#include <span>
#include <vector>

#include "dgerc/rng.hpp"
#include "dgerc/tape.hpp"
#include "dgerc/tensor.hpp"

namespace dgerc::ops {

// Batched matrix product [..,m,k] x [..,k,n] -> [..,m,n]; batch dims broadcast.
template <std::floating_point T>
Var<T> matmul(Var<T> a, Var<T> b);

// Elementwise with numpy-style broadcasting.
template <std::floating_point T>
Var<T> add(Var<T> a, Var<T> b);
template <std::floating_point T>
Var<T> sub(Var<T> a, Var<T> b);
template <std::floating_point T>
Var<T> mul(Var<T> a, Var<T> b);

template <std::floating_point T>
Var<T> scale(Var<T> x, T factor);
template <std::floating_point T>
Var<T> exp(Var<T> x);
// Sum of all entries, rank-0 result.
template <std::floating_point T>
Var<T> sum(Var<T> x);

template <std::floating_point T>
Var<T> reshape(Var<T> x, Shape shape);
// Swaps the last two axes.
template <std::floating_point T>
Var<T> transpose(Var<T> x);
// Columns [begin, end) of the last axis.
template <std::floating_point T>
Var<T> slice_last(Var<T> x, std::size_t begin, std::size_t end);
template <std::floating_point T>
Var<T> concat_last(const std::vector<Var<T>>& parts);

template <std::floating_point T>
Var<T> relu(Var<T> x);
template <std::floating_point T>
Var<T> leaky_relu(Var<T> x, T slope);
// Exact (erf) GELU.
template <std::floating_point T>
Var<T> gelu(Var<T> x);

// Log-softmax over the last axis.
template <std::floating_point T>
Var<T> log_softmax(Var<T> x);

// Softmax over the last axis restricted to mask != 0. Masked entries are
// exactly 0 and a row without valid entries is all zeros.
template <std::floating_point T>
Var<T> softmax_masked(Var<T> scores, const MaskTensor& mask);

// Normalizes over the last axis, then applies gain and bias (both [d]).
template <std::floating_point T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

// Row lookup: table [N,d], ids of any shape -> [ids..., d].
template <std::floating_point T>
Var<T> embedding(Var<T> table, const IdTensor& ids);

// Mean negative log-likelihood over positions with mask != 0.
// log_probs [..,C], labels and mask [..]. Throws DataError when no position is valid.
template <std::floating_point T>
Var<T> masked_nll(Var<T> log_probs, const IdTensor& labels, const MaskTensor& mask);

// Inverted dropout with a mask drawn from rng; identity when rate == 0.
template <std::floating_point T>
Var<T> dropout(Var<T> x, double rate, Rng& rng);

// Forward/backward pair for an op whose gradient is specified by hand.
// Inputs flagged in `blocked` receive exactly zero gradient.
template <std::floating_point T>
struct CustomGradSpec {
  std::function<Tensor<T>(std::span<const Tensor<T>> inputs)> forward;
  std::function<std::vector<Tensor<T>>(const Tensor<T>& upstream,
                                       std::span<const Tensor<T>> inputs,
                                       const Tensor<T>& output)>
      backward;
  std::vector<bool> blocked;
};

template <std::floating_point T>
Var<T> custom_grad_apply(const CustomGradSpec<T>& spec, const std::vector<Var<T>>& inputs);

// x / (1 - theta) with d/dx = 1/(1-theta) and d/dtheta = 0.
template <std::floating_point T>
CustomGradSpec<T> compensation_scaling_spec();

}  // namespace dgerc::ops
