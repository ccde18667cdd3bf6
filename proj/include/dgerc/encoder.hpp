#pragma once

#include <array>
#include <cstddef>

#include "dgerc/data.hpp"
#include "dgerc/params.hpp"
#include "dgerc/tape.hpp"

namespace dgerc {

struct EncoderConfig {
  std::array<std::size_t, kModalities> input_dims{32, 16, 24};
  std::size_t d_h = 32;
  std::size_t heads = 4;
  std::size_t n_speakers = 2;
  bool text_transformer = true;
};

// Sinusoidal table [L, d_h]. Throws ConfigError for odd d_h.
template <std::floating_point T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d_h);

// [B,L] mask as a [B,L,1] multiplier.
template <std::floating_point T>
Tensor<T> row_mask(const MaskTensor& mask);

// [B,L] mask as a [B,L,L] key-padding mask (valid query and valid key).
MaskTensor pair_mask(const MaskTensor& mask);

// x = f W + b, then padded rows re-zeroed. f [B,L,D], W [D,d_h], b [d_h].
template <std::floating_point T>
Var<T> project_modality(Var<T> features, Var<T> weight, Var<T> bias, const MaskTensor& mask,
                        const char* modality);

// x + PE + E_s[speaker], padded rows zeroed. speaker_table is [n_s+1, d_h].
template <std::floating_point T>
Var<T> add_context_signals(Var<T> x, const IdTensor& speakers, Var<T> speaker_table,
                           const MaskTensor& mask);

template <std::floating_point T>
struct TransformerWeights {
  Var<T> w_q, w_k, w_v;         // [d_h, d_h], no bias
  Var<T> ln_gain, ln_bias;      // [d_h]
  Var<T> w_1, b_1, w_2, b_2;    // FFN, hidden width = d_h
};

template <std::floating_point T>
struct TransformerOutput {
  Var<T> out;         // [B,L,d_h]
  Tensor<T> attention; // [B,h,L,L]
};

// Single layer: z = MultiHead(x) with key padding; out = z + W2 GELU(W1 LN(z)).
template <std::floating_point T>
TransformerOutput<T> transformer_encode(Var<T> x, const MaskTensor& mask,
                                        const TransformerWeights<T>& w, std::size_t heads);

template <std::floating_point T>
struct EncoderOutput {
  std::array<Var<T>, kModalities> x;
  std::array<Tensor<T>, kModalities> attention;  // empty when no transformer ran
};

// Owns naming of the encoder parameters ("enc.*") inside a ParamStore.
template <std::floating_point T>
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, ParamStore<T>& store, Rng& rng);

  EncoderOutput<T> forward(Tape<T>& tape, const DialogueBatch<T>& batch) const;

  const EncoderConfig& config() const { return cfg_; }
  bool uses_transformer(std::size_t m) const { return m != kText || cfg_.text_transformer; }

 private:
  EncoderConfig cfg_;
  ParamStore<T>* store_;
};

}  // namespace dgerc
