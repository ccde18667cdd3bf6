#include "dgerc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "dgerc/ops.hpp"

namespace dgerc {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ModelConfig gradcheck_config(GraphMode mode) {
  ModelConfig c;
  c.input_dims = {5, 4, 3};
  c.d_h = 8;
  c.enc_heads = 2;
  c.gnn_heads = 2;
  c.d_r = 4;
  c.classes = 4;
  c.n_speakers = 2;
  c.graph = mode;
  return c;
}

Dialogue gradcheck_dialogue(const ModelConfig& c, Rng& rng) {
  Dialogue d;
  d.id = "gradcheck";
  d.speakers = {0, 1, 0};
  for (int i = 0; i < 3; ++i) d.labels.push_back(static_cast<int>(rng.below(c.classes)));
  for (std::size_t m = 0; m < kModalities; ++m) {
    d.features[m].assign(3, std::vector<float>(c.input_dims[m]));
    for (auto& row : d.features[m])
      for (auto& v : row) v = static_cast<float>(rng.normal());
  }
  return d;
}

}  // namespace

void apply_ablation(RunConfig& cfg, const std::string& name) {
  if (name == "full") return;
  if (name == "no-md") {
    cfg.model.balance.enabled = false;
  } else if (name == "plain-gat") {
    cfg.model.graph = GraphMode::PlainGat;
  } else if (name == "no-graph") {
    cfg.model.graph = GraphMode::NoGraph;
  } else {
    throw ConfigError("unknown ablation '" + name + "' (full, no-md, plain-gat, no-graph)");
  }
}

std::vector<GradcheckCase> model_gradcheck(double tol, std::uint64_t seed) {
  std::vector<GradcheckCase> out;
  struct Spec {
    std::string name;
    GraphMode mode;
    bool fixed_mask;
  };
  const std::vector<Spec> specs{{"full model, balance off", GraphMode::DiffRGCN, false},
                                {"full model, fixed balance mask, theta=0.3", GraphMode::DiffRGCN, true},
                                {"no-graph ablation", GraphMode::NoGraph, false}};
  for (const auto& spec : specs) {
    const auto t0 = Clock::now();
    const ModelConfig cfg = gradcheck_config(spec.mode);
    Model<double> model(cfg, Rng::derive(seed, 0));
    Rng rng(Rng::derive(seed, 1));
    // Zero-initialized biases put a dropped modality's head exactly on the
    // ReLU kink, where a central difference is meaningless; check at a
    // jittered point instead.
    for (auto* p : model.params().all())
      for (auto& v : p->value.values()) v += rng.normal(0.0, 0.05);
    const std::vector<Dialogue> ds{gradcheck_dialogue(cfg, rng)};
    const auto batch = collate<double>(ds, cfg.n_speakers);
    Parameter<double> theta{"theta", Tensor<double>::scalar(0.3), {}};
    theta.zero_grad();
    // text and audio survive, visual dropped
    const std::vector<std::uint8_t> mask{1, 0, 1};
    auto forward = [&](Tape<double>& tape) {
      StepOptions<double> opt;
      if (spec.fixed_mask) {
        opt.fixed_mask = &mask;
        opt.fixed_theta = tape.param(theta);
      }
      auto r = model.forward(tape, batch, opt);
      if (!r.loss) throw std::logic_error("gradcheck instance produced no loss");
      return r;
    };
    // alpha_m = L_m / 10 is a constant in the backward pass, so the
    // differenced loss holds alpha at its value at the base point.
    std::array<double, kModalities> alpha0{};
    {
      Tape<double> tape;
      alpha0 = forward(tape).loss->alpha;
    }
    auto loss = [&](Tape<double>& tape) {
      auto r = forward(tape);
      Var<double> total = masked_cross_entropy(r.fused.log_probs, batch.labels, r.loss_mask);
      for (std::size_t m = 0; m < kModalities; ++m) {
        Var<double> lm = masked_cross_entropy(ops::log_softmax(r.logits[m]), batch.labels, r.loss_mask);
        total = ops::add(total, ops::scale(lm, alpha0[m]));
      }
      return total;
    };
    // the frozen-alpha loss and the model's own loss must share gradients
    auto grads_of = [&](bool own) {
      model.params().zero_grad();
      theta.zero_grad();
      Tape<double> tape;
      tape.backward(own ? forward(tape).loss->total : loss(tape));
      std::vector<double> g;
      for (const auto* p : model.params().all()) g.insert(g.end(), p->grad.values().begin(), p->grad.values().end());
      g.push_back(theta.grad.item());
      model.params().zero_grad();
      theta.zero_grad();
      return g;
    };
    const auto g_own = grads_of(true), g_frozen = grads_of(false);
    double dev = 0.0;
    for (std::size_t i = 0; i < g_own.size(); ++i) dev = std::max(dev, std::abs(g_own[i] - g_frozen[i]));
    std::vector<Parameter<double>*> params = model.params().all();
    FdOptions fd;
    fd.tol = tol;
    if (spec.fixed_mask) {
      params.push_back(&theta);
      fd.blocked = {"theta"};
    }
    GradcheckCase c;
    c.name = spec.name;
    c.report = finite_diff_check<double>(loss, params, fd);
    std::ostringstream note;
    note << "model loss vs frozen-alpha loss gradient deviation " << dev;
    c.report.diagnostics.push_back(note.str());
    if (dev > 1e-12) {
      c.report.passed = false;
      c.report.diagnostics.push_back("gradient of the model loss differs from the frozen-alpha loss");
    }
    c.seconds = since(t0);
    out.push_back(std::move(c));
  }
  return out;
}

ContractCheck compensation_contract(double theta_value, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t B = 4, L = 3, d = 5;
  std::vector<Parameter<double>> feats;
  for (std::size_t m = 0; m < kModalities; ++m) {
    Tensor<double> t({B, L, d});
    for (auto& v : t.values()) v = rng.normal();
    feats.push_back(Parameter<double>{"f" + std::to_string(m), std::move(t), {}});
    feats.back().zero_grad();
  }
  std::vector<std::uint8_t> mask(kModalities * B);
  for (auto& x : mask) x = rng.bernoulli(0.5) ? 1 : 0;
  Parameter<double> theta{"theta", Tensor<double>::scalar(theta_value), {}};
  theta.zero_grad();

  Tape<double> tape;
  std::array<Var<double>, kModalities> v;
  for (std::size_t m = 0; m < kModalities; ++m) v[m] = tape.param(feats[m]);
  auto out = apply_balance_mask(v, mask, tape.param(theta));
  Var<double> s = ops::sum(out[0]);
  for (std::size_t m = 1; m < kModalities; ++m) s = ops::add(s, ops::sum(out[m]));
  tape.backward(s);

  ContractCheck c;
  c.theta = theta_value;
  c.theta_grad = theta.grad.item();
  for (std::size_t m = 0; m < kModalities; ++m)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < L * d; ++k) {
        const double want = mask[m * B + b] ? 1.0 / (1.0 - theta_value) : 0.0;
        c.max_feature_dev =
            std::max(c.max_feature_dev, std::abs(feats[m].grad[b * L * d + k] - want));
      }
  c.passed = c.theta_grad == 0.0 && c.max_feature_dev == 0.0;
  return c;
}

double flop_estimate(std::size_t batch, std::size_t length, std::size_t window, std::size_t d,
                     std::size_t heads) {
  const double B = static_cast<double>(batch), L = static_cast<double>(length);
  const double w = static_cast<double>(window), h = static_cast<double>(heads);
  return B * L * w * static_cast<double>(d) * h + B * L * L / h;
}

BenchRow bench_graph(GraphMode mode, std::size_t batch, std::size_t length, std::size_t window,
                     std::size_t d, std::size_t heads, std::size_t reps, std::uint64_t seed) {
  if (mode == GraphMode::NoGraph) throw ConfigError("bench needs a graph mode");
  ParamStore<float> store;
  Rng rng(seed);
  DiffRGCN<float> gnn(GnnConfig{d, heads, 8, 0, 1, 0.0, mode}, store, rng);
  IdTensor speakers({batch, length});
  MaskTensor mask({batch, length}, 1);
  for (auto& s : speakers.values()) s = static_cast<int>(rng.below(2));
  const auto graph = make_batch_graph(build_subgraphs(speakers, mask, static_cast<int>(window)));
  std::array<Tensor<float>, kModalities> x;
  for (auto& t : x) {
    t = Tensor<float>({batch, length, d});
    for (auto& v : t.values()) v = static_cast<float>(rng.normal());
  }
  auto once = [&] {
    Tape<float> tape;
    std::array<Var<float>, kModalities> in;
    for (std::size_t m = 0; m < kModalities; ++m) in[m] = tape.constant(x[m]);
    const auto t0 = Clock::now();
    auto out = gnn.forward(tape, in, graph, mask, false, nullptr);
    (void)out;
    return since(t0);
  };
  once();
  std::vector<double> times;
  for (std::size_t r = 0; r < std::max<std::size_t>(reps, 1); ++r) times.push_back(once());
  std::sort(times.begin(), times.end());
  BenchRow row;
  row.mode = to_string(mode);
  row.batch = batch;
  row.length = length;
  row.window = window;
  row.d = d;
  row.heads = heads;
  row.batch_ms = times[times.size() / 2] * 1e3;
  row.per_sample_ms = row.batch_ms / static_cast<double>(batch);
  row.throughput = static_cast<double>(batch) * 1e3 / row.batch_ms;
  row.flops = flop_estimate(batch, length, std::min(window, length), d, heads);
  return row;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope needs >= 2 points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace dgerc
