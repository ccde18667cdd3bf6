#include "dgerc/model.hpp"

#include "dgerc/ops.hpp"

namespace dgerc {

void ModelConfig::validate() const {
  if (d_h == 0 || d_h % 2 != 0) throw ConfigError("d_h must be even and positive");
  if (enc_heads == 0 || d_h % enc_heads != 0) throw ConfigError("d_h must be divisible by enc_heads");
  if (graph != GraphMode::NoGraph) {
    if (gnn_heads == 0 || d_h % gnn_heads != 0) throw ConfigError("d_h must be divisible by gnn_heads");
    if ((d_h / gnn_heads) % 2 != 0)
      throw ConfigError("graph attention needs an even head width d_h/gnn_heads");
  }
  if (window < 0) throw ConfigError("window must be >= 0");
  if (classes < 2) throw ConfigError("classes must be >= 2");
  if (n_speakers == 0) throw ConfigError("n_speakers must be >= 1");
  for (std::size_t m = 0; m < kModalities; ++m)
    if (input_dims[m] == 0) throw ConfigError(std::string(kModalityNames[m]) + " dim must be > 0");
  if (gnn_dropout < 0.0 || gnn_dropout >= 1.0 || head_dropout < 0.0 || head_dropout >= 1.0)
    throw ConfigError("dropout rates must be in [0,1)");
  balance.validate();
}

template <std::floating_point T>
Model<T>::Model(const ModelConfig& cfg, std::uint64_t init_seed)
    : cfg_(cfg), store_(std::make_unique<ParamStore<T>>()) {
  cfg.validate();
  Rng rng(init_seed);
  encoder_ = std::make_unique<Encoder<T>>(
      EncoderConfig{cfg.input_dims, cfg.d_h, cfg.enc_heads, cfg.n_speakers, cfg.text_transformer},
      *store_, rng);
  if (cfg.graph != GraphMode::NoGraph) {
    gnn_ = std::make_unique<DiffRGCN<T>>(GnnConfig{cfg.d_h, cfg.gnn_heads, cfg.d_r, cfg.lambda_dim,
                                                   cfg.gnn_stacks, cfg.gnn_dropout, cfg.graph},
                                         *store_, rng);
  }
  classifier_ = std::make_unique<Classifier<T>>(
      ClassifierConfig{cfg.d_h, cfg.classes, cfg.head_dropout, cfg.alpha_squared}, *store_, rng);
}

template <std::floating_point T>
ForwardResult<T> Model<T>::forward(Tape<T>& tape, const DialogueBatch<T>& batch,
                                   const StepOptions<T>& opt) const {
  ForwardResult<T> r;
  r.encoded = encoder_->forward(tape, batch);
  if (gnn_) {
    const RelationalSubgraphs sg = build_subgraphs(batch.speakers, batch.mask, cfg_.window);
    auto out = gnn_->forward(tape, r.encoded.x, make_batch_graph(sg), batch.mask, opt.training,
                             opt.dropout_rng, opt.keep_traces);
    r.g = out.g;
    r.lambdas = std::move(out.lambdas);
    r.traces = std::move(out.traces);
  } else {
    r.g = r.encoded.x;
  }

  std::array<Var<T>, kModalities> features = r.g;
  r.loss_mask = batch.mask;
  const std::size_t B = batch.batch(), L = batch.length();
  if (opt.fixed_mask != nullptr) {
    r.balance_active = true;
    r.balance.mask = *opt.fixed_mask;
    r.balance.theta = static_cast<double>(opt.fixed_theta.value()[0]);
    r.balance.applied = true;
    features = apply_balance_mask(r.g, *opt.fixed_mask, opt.fixed_theta);
    r.balance.u.assign(B, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t m = 0; m < kModalities; ++m) r.balance.u[b] |= (*opt.fixed_mask)[m * B + b];
  } else if (opt.training && warmup_gate(opt.epoch, cfg_.balance)) {
    r.balance_active = true;
    // modality scores from the heads before any masking, no dropout
    auto probe = classifier_->heads(tape, r.g, false, nullptr);
    Triple p{};
    for (std::size_t m = 0; m < kModalities; ++m)
      p[m] = modality_f1(probe[m].value(), batch.labels, batch.mask);
    const Triple q = dropout_probabilities(p, cfg_.balance, &r.balance);
    if (opt.modality_rng == nullptr) throw std::logic_error("balancing needs a modality rng");
    features = apply_modality_dropout(r.g, q, cfg_.balance, *opt.modality_rng, r.balance);
  }
  if (r.balance.applied) {
    for (std::size_t b = 0; b < B; ++b)
      if (!r.balance.u[b])
        for (std::size_t i = 0; i < L; ++i) r.loss_mask[b * L + i] = 0;
  }

  r.logits = classifier_->heads(tape, features, opt.training, opt.dropout_rng);
  r.fused = fuse_and_predict(r.logits[0], r.logits[1], r.logits[2]);
  bool any = false;
  for (auto v : r.loss_mask.values()) any = any || v;
  if (any) {
    std::array<Var<T>, kModalities> lp;
    for (std::size_t m = 0; m < kModalities; ++m) lp[m] = ops::log_softmax(r.logits[m]);
    r.loss = total_loss(r.fused.log_probs, lp, batch.labels, r.loss_mask, cfg_.alpha_squared);
  }
  return r;
}

template class Model<float>;
template class Model<double>;

}  // namespace dgerc
