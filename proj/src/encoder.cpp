#include "dgerc/encoder.hpp"

#include <cmath>
#include <string>

#include "dgerc/ops.hpp"

namespace dgerc {

template <std::floating_point T>
Tensor<T> positional_encoding(std::size_t length, std::size_t d_h) {
  if (d_h % 2 != 0) throw ConfigError("positional encoding needs an even d_h, got " + std::to_string(d_h));
  Tensor<T> pe({length, d_h});
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t j = 0; 2 * j < d_h; ++j) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * j) / static_cast<double>(d_h));
      pe[pos * d_h + 2 * j] = static_cast<T>(std::sin(angle));
      pe[pos * d_h + 2 * j + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <std::floating_point T>
Tensor<T> row_mask(const MaskTensor& mask) {
  Tensor<T> out({mask.dim(0), mask.dim(1), 1});
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? T(1) : T(0);
  return out;
}

MaskTensor pair_mask(const MaskTensor& mask) {
  const std::size_t B = mask.dim(0), L = mask.dim(1);
  MaskTensor out({B, L, L});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j)
        out[(b * L + i) * L + j] = mask[b * L + i] && mask[b * L + j];
  return out;
}

template <std::floating_point T>
Var<T> project_modality(Var<T> features, Var<T> weight, Var<T> bias, const MaskTensor& mask,
                        const char* modality) {
  const Shape& fs = features.shape();
  if (fs.size() != 3 || fs[2] != weight.value().dim(0)) {
    throw ConfigError(std::string(modality) + " features have shape " + shape_str(fs) +
                      " but the projection expects dim " + std::to_string(weight.value().dim(0)));
  }
  Tape<T>& t = *features.tape();
  Var<T> x = ops::add(ops::matmul(features, weight), bias);
  return ops::mul(x, t.constant(row_mask<T>(mask)));
}

template <std::floating_point T>
Var<T> add_context_signals(Var<T> x, const IdTensor& speakers, Var<T> speaker_table,
                           const MaskTensor& mask) {
  Tape<T>& t = *x.tape();
  const std::size_t L = x.value().dim(1), d = x.value().dim(2);
  Var<T> y = ops::add(x, t.constant(positional_encoding<T>(L, d)));
  y = ops::add(y, ops::embedding(speaker_table, speakers));
  return ops::mul(y, t.constant(row_mask<T>(mask)));
}

template <std::floating_point T>
TransformerOutput<T> transformer_encode(Var<T> x, const MaskTensor& mask,
                                        const TransformerWeights<T>& w, std::size_t heads) {
  Tape<T>& t = *x.tape();
  const std::size_t B = x.value().dim(0), L = x.value().dim(1), d = x.value().dim(2);
  if (heads == 0 || d % heads != 0) {
    throw ConfigError("d_h=" + std::to_string(d) + " is not divisible by heads=" + std::to_string(heads));
  }
  const std::size_t dk = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dk));
  const MaskTensor pm = pair_mask(mask);
  Var<T> q = ops::matmul(x, w.w_q);
  Var<T> k = ops::matmul(x, w.w_k);
  Var<T> v = ops::matmul(x, w.w_v);

  TransformerOutput<T> res;
  res.attention = Tensor<T>({B, heads, L, L});
  std::vector<Var<T>> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var<T> qh = ops::slice_last(q, h * dk, (h + 1) * dk);
    Var<T> kh = ops::slice_last(k, h * dk, (h + 1) * dk);
    Var<T> vh = ops::slice_last(v, h * dk, (h + 1) * dk);
    Var<T> scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
    Var<T> a = ops::softmax_masked(scores, pm);
    const Tensor<T>& av = a.value();
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(av.data() + b * L * L, L * L, res.attention.data() + (b * heads + h) * L * L);
    outs.push_back(ops::matmul(a, vh));
  }
  Var<T> z = heads == 1 ? outs.front() : ops::concat_last(outs);
  Var<T> f = ops::layer_norm(z, w.ln_gain, w.ln_bias);
  f = ops::gelu(ops::add(ops::matmul(f, w.w_1), w.b_1));
  f = ops::add(ops::matmul(f, w.w_2), w.b_2);
  res.out = ops::mul(ops::add(z, f), t.constant(row_mask<T>(mask)));
  return res;
}

template <std::floating_point T>
Encoder<T>::Encoder(const EncoderConfig& cfg, ParamStore<T>& store, Rng& rng)
    : cfg_(cfg), store_(&store) {
  if (cfg.d_h % 2 != 0) throw ConfigError("d_h must be even, got " + std::to_string(cfg.d_h));
  if (cfg.heads == 0 || cfg.d_h % cfg.heads != 0) {
    throw ConfigError("d_h=" + std::to_string(cfg.d_h) + " is not divisible by encoder heads=" +
                      std::to_string(cfg.heads));
  }
  const std::size_t d = cfg.d_h;
  for (std::size_t m = 0; m < kModalities; ++m) {
    const std::string p = std::string("enc.") + kModalityTags[m] + ".";
    store.add(p + "proj.W", init::glorot<T>(cfg.input_dims[m], d, rng));
    store.add(p + "proj.b", Tensor<T>({d}));
  }
  store.add("enc.speaker", init::normal<T>({cfg.n_speakers + 1, d}, 0.1, rng));
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (!uses_transformer(m)) continue;
    const std::string p = std::string("enc.") + kModalityTags[m] + ".tf.";
    store.add(p + "Wq", init::glorot<T>(d, d, rng));
    store.add(p + "Wk", init::glorot<T>(d, d, rng));
    store.add(p + "Wv", init::glorot<T>(d, d, rng));
    store.add(p + "ln.g", Tensor<T>({d}, T(1)));
    store.add(p + "ln.b", Tensor<T>({d}));
    store.add(p + "W1", init::glorot<T>(d, d, rng));
    store.add(p + "b1", Tensor<T>({d}));
    store.add(p + "W2", init::glorot<T>(d, d, rng));
    store.add(p + "b2", Tensor<T>({d}));
  }
}

template <std::floating_point T>
EncoderOutput<T> Encoder<T>::forward(Tape<T>& tape, const DialogueBatch<T>& batch) const {
  ParamStore<T>& s = *store_;
  EncoderOutput<T> out;
  Var<T> speaker = tape.param(s.get("enc.speaker"));
  for (std::size_t m = 0; m < kModalities; ++m) {
    const std::string p = std::string("enc.") + kModalityTags[m] + ".";
    Var<T> x = project_modality(tape.constant(batch.features[m]), tape.param(s.get(p + "proj.W")),
                                tape.param(s.get(p + "proj.b")), batch.mask, kModalityNames[m]);
    if (uses_transformer(m)) {
      x = add_context_signals(x, batch.speakers, speaker, batch.mask);
      TransformerWeights<T> w{tape.param(s.get(p + "tf.Wq")),   tape.param(s.get(p + "tf.Wk")),
                              tape.param(s.get(p + "tf.Wv")),   tape.param(s.get(p + "tf.ln.g")),
                              tape.param(s.get(p + "tf.ln.b")), tape.param(s.get(p + "tf.W1")),
                              tape.param(s.get(p + "tf.b1")),   tape.param(s.get(p + "tf.W2")),
                              tape.param(s.get(p + "tf.b2"))};
      auto r = transformer_encode(x, batch.mask, w, cfg_.heads);
      x = r.out;
      out.attention[m] = std::move(r.attention);
    }
    out.x[m] = x;
  }
  return out;
}

#define DGERC_INSTANTIATE_ENCODER(T)                                                           \
  template Tensor<T> positional_encoding<T>(std::size_t, std::size_t);                         \
  template Tensor<T> row_mask<T>(const MaskTensor&);                                           \
  template Var<T> project_modality<T>(Var<T>, Var<T>, Var<T>, const MaskTensor&, const char*); \
  template Var<T> add_context_signals<T>(Var<T>, const IdTensor&, Var<T>, const MaskTensor&);  \
  template TransformerOutput<T> transformer_encode<T>(Var<T>, const MaskTensor&,               \
                                                      const TransformerWeights<T>&, std::size_t); \
  template class Encoder<T>;

DGERC_INSTANTIATE_ENCODER(float)
DGERC_INSTANTIATE_ENCODER(double)

#undef DGERC_INSTANTIATE_ENCODER

}  // namespace dgerc
