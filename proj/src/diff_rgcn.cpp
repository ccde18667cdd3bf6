#include "dgerc/diff_rgcn.hpp"

#include <cmath>

#include "dgerc/encoder.hpp"
#include "dgerc/ops.hpp"

namespace dgerc {

GraphMode parse_graph_mode(const std::string& s) {
  if (s == "diffrgcn" || s == "full") return GraphMode::DiffRGCN;
  if (s == "plain-gat" || s == "gat") return GraphMode::PlainGat;
  if (s == "no-graph" || s == "none") return GraphMode::NoGraph;
  throw ConfigError("unknown graph mode '" + s + "' (diffrgcn, plain-gat, no-graph)");
}

std::string to_string(GraphMode mode) {
  switch (mode) {
    case GraphMode::DiffRGCN:
      return "diffrgcn";
    case GraphMode::PlainGat:
      return "plain-gat";
    default:
      return "no-graph";
  }
}

// 0.8 - 0.6 exp(-0.3 depth), arranged so depth 0 gives 0.2 exactly
double lambda_init(int depth) {
  return 0.2 + 0.6 * (1.0 - std::exp(-0.3 * static_cast<double>(depth)));
}

BatchGraph make_batch_graph(const RelationalSubgraphs& g) {
  const std::size_t B = g.batch(), L = g.length();
  const std::size_t w = static_cast<std::size_t>(g.window);
  return {std::make_shared<const kernels::SparseAdjacency>(
              kernels::sparse_from_dense(g.adj_c.data(), B, L, w)),
          std::make_shared<const kernels::SparseAdjacency>(
              kernels::sparse_from_dense(g.adj_s.data(), B, L, w))};
}

template <std::floating_point T>
void register_head(ParamStore<T>& store, const std::string& prefix, std::size_t d_in,
                   std::size_t d_head, std::size_t d_r, std::size_t lambda_dim, bool differential,
                   bool relation, Rng& rng) {
  store.add(prefix + "W", init::glorot<T>(d_in, d_head, rng));
  if (d_head % 2 != 0) throw ConfigError("head width must be even, got " + std::to_string(d_head));
  const std::size_t half = d_head / 2;
  store.add(prefix + "a_l_pos", init::glorot<T>(half, 1, rng));
  store.add(prefix + "a_r_pos", init::glorot<T>(half, 1, rng));
  if (!differential) return;
  store.add(prefix + "a_l_neg", init::glorot<T>(half, 1, rng));
  store.add(prefix + "a_r_neg", init::glorot<T>(half, 1, rng));
  if (relation) {
    store.add(prefix + "rel", init::normal<T>({kernels::kRelationIds, d_r}, 0.1, rng));
    store.add(prefix + "rel_pos", init::glorot<T>(d_r, 1, rng));
    store.add(prefix + "rel_neg", init::glorot<T>(d_r, 1, rng));
  }
  // variance 0.1
  const double sd = std::sqrt(0.1);
  for (const char* n : {"lam_l1", "lam_r1", "lam_l2", "lam_r2"})
    store.add(prefix + n, init::normal<T>({lambda_dim}, sd, rng));
}

namespace {

template <std::floating_point T>
Var<T> node_scores(Var<T> feats, Var<T> a) {
  const Shape& s = feats.shape();
  return ops::reshape(ops::matmul(feats, a), {s[0], s[1]});
}

}  // namespace

template <std::floating_point T>
HeadOutput<T> diff_attention_head(Tape<T>& tape, Var<T> h,
                                  std::shared_ptr<const kernels::SparseAdjacency> adj, int depth,
                                  ParamStore<T>& store, const std::string& prefix,
                                  bool differential, bool relation) {
  auto P = [&](const char* n) { return tape.param(store.get(prefix + n)); };
  Var<T> wh = ops::matmul(h, P("W"));
  ops::GraphAttentionInputs<T> in;
  in.values = wh;
  HeadOutput<T> out;
  const std::size_t d_head = wh.value().dim(2), half = d_head / 2;
  Var<T> pos = ops::slice_last(wh, 0, half);
  in.q_pos = node_scores(pos, P("a_l_pos"));
  in.k_pos = node_scores(pos, P("a_r_pos"));
  if (differential) {
    Var<T> neg = ops::slice_last(wh, half, d_head);
    in.q_neg = node_scores(neg, P("a_l_neg"));
    in.k_neg = node_scores(neg, P("a_r_neg"));
    if (relation) {
      Var<T> rel = P("rel");
      in.rel_pos = ops::reshape(ops::matmul(rel, P("rel_pos")), {kernels::kRelationIds});
      in.rel_neg = ops::reshape(ops::matmul(rel, P("rel_neg")), {kernels::kRelationIds});
    }
    Var<T> l1 = ops::exp(ops::sum(ops::mul(P("lam_l1"), P("lam_r1"))));
    Var<T> l2 = ops::exp(ops::sum(ops::mul(P("lam_l2"), P("lam_r2"))));
    in.lambda = ops::add(ops::sub(l1, l2),
                         tape.constant(Tensor<T>::scalar(static_cast<T>(lambda_init(depth)))));
    out.lambda_full = in.lambda;
  }
  // cat(v_pos, v_neg) is Wh itself, so the values are Wh.
  auto r = ops::graph_attention(std::move(adj), in);
  out.out = r.out;
  out.cache = r.cache;
  return out;
}

template <std::floating_point T>
DiffRGCN<T>::DiffRGCN(const GnnConfig& cfg, ParamStore<T>& store, Rng& rng)
    : cfg_(cfg), store_(&store) {
  if (cfg.mode == GraphMode::NoGraph) throw ConfigError("DiffRGCN built in no-graph mode");
  if (cfg.heads == 0 || cfg.d % cfg.heads != 0) {
    throw ConfigError("gnn width " + std::to_string(cfg.d) + " not divisible by heads " +
                      std::to_string(cfg.heads));
  }
  const bool diff = differential();
  if (head_width() % 2 != 0) {
    throw ConfigError("attention heads need an even head width, got " +
                      std::to_string(head_width()));
  }
  for (std::size_t m = 0; m < kModalities; ++m) {
    for (const std::string& layer : layer_prefixes(m)) {
      for (std::size_t h = 0; h < cfg.heads; ++h) {
        register_head(store, layer + ".h" + std::to_string(h) + ".", cfg.d, head_width(), cfg.d_r,
                      lambda_dim(), diff, diff, rng);
      }
      // output attention: one head, same adjacency, no relation term
      register_head(store, layer + ".out.", cfg.d, cfg.d, cfg.d_r, cfg.d / 2, diff, false, rng);
      store.add(layer + ".fc.W", init::glorot<T>(cfg.d, cfg.d, rng));
      store.add(layer + ".fc.b", Tensor<T>({cfg.d}));
      store.add(layer + ".ln.g", Tensor<T>({cfg.d}, T(1)));
      store.add(layer + ".ln.b", Tensor<T>({cfg.d}));
    }
  }
}

template <std::floating_point T>
std::size_t DiffRGCN<T>::lambda_dim() const {
  return cfg_.lambda_dim != 0 ? cfg_.lambda_dim : head_width() / 2;
}

template <std::floating_point T>
std::vector<std::string> DiffRGCN<T>::layer_prefixes(std::size_t m) const {
  std::vector<std::string> out;
  for (std::size_t s = 0; s < cfg_.stacks; ++s) {
    const std::string base = std::string("gnn.") + kModalityTags[m] + "." + std::to_string(s);
    out.push_back(base + ".inter");
    out.push_back(base + ".intra");
  }
  return out;
}

template <std::floating_point T>
Var<T> DiffRGCN<T>::layer(Tape<T>& tape, Var<T> h,
                          std::shared_ptr<const kernels::SparseAdjacency> adj, int depth,
                          const std::string& prefix, const MaskTensor& mask, bool training,
                          Rng* dropout_rng, std::vector<HeadTrace<T>>* traces,
                          std::vector<std::pair<std::string, Var<T>>>* lambdas) const {
  ParamStore<T>& s = *store_;
  const bool diff = differential();
  auto note = [&](const std::string& name, std::size_t head, const HeadOutput<T>& o) {
    if (traces != nullptr) {
      traces->push_back({name, head, adj, o.cache,
                         o.lambda_full.valid() ? static_cast<double>(o.lambda_full.value()[0]) : 0.0});
    }
    if (lambdas != nullptr && o.lambda_full.valid()) lambdas->emplace_back(name, o.lambda_full);
  };
  std::vector<Var<T>> heads;
  for (std::size_t i = 0; i < cfg_.heads; ++i) {
    const std::string hp = prefix + ".h" + std::to_string(i) + ".";
    HeadOutput<T> o = diff_attention_head(tape, h, adj, depth, s, hp, diff, diff);
    note(prefix + ".h" + std::to_string(i), i, o);
    heads.push_back(o.out);
  }
  Var<T> x = heads.size() == 1 ? heads.front() : ops::concat_last(heads);
  if (training && cfg_.dropout > 0.0) x = ops::dropout(x, cfg_.dropout, *dropout_rng);
  HeadOutput<T> o = diff_attention_head(tape, x, adj, depth, s, prefix + ".out.", diff, false);
  note(prefix + ".out", 0, o);
  Var<T> y = ops::add(ops::matmul(o.out, tape.param(s.get(prefix + ".fc.W"))),
                      tape.param(s.get(prefix + ".fc.b")));
  y = ops::add(y, h);
  y = ops::layer_norm(y, tape.param(s.get(prefix + ".ln.g")), tape.param(s.get(prefix + ".ln.b")));
  return ops::mul(y, tape.constant(row_mask<T>(mask)));
}

template <std::floating_point T>
typename DiffRGCN<T>::Output DiffRGCN<T>::forward(Tape<T>& tape,
                                                  const std::array<Var<T>, kModalities>& x,
                                                  const BatchGraph& graph, const MaskTensor& mask,
                                                  bool training, Rng* dropout_rng,
                                                  bool keep_traces) const {
  Output out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    Var<T> h = x[m];
    int depth = 0;
    for (const std::string& prefix : layer_prefixes(m)) {
      const bool inter = prefix.ends_with(".inter");
      h = layer(tape, h, inter ? graph.inter : graph.intra, depth, prefix, mask, training,
                dropout_rng, keep_traces ? &out.traces : nullptr, &out.lambdas);
      ++depth;
    }
    out.g[m] = h;
  }
  return out;
}

#define DGERC_INSTANTIATE_GNN(T)                                                                 \
  template void register_head<T>(ParamStore<T>&, const std::string&, std::size_t, std::size_t,  \
                                 std::size_t, std::size_t, bool, bool, Rng&);                    \
  template HeadOutput<T> diff_attention_head<T>(Tape<T>&, Var<T>,                                \
                                                std::shared_ptr<const kernels::SparseAdjacency>, \
                                                int, ParamStore<T>&, const std::string&, bool,   \
                                                bool);                                           \
  template class DiffRGCN<T>;

DGERC_INSTANTIATE_GNN(float)
DGERC_INSTANTIATE_GNN(double)

#undef DGERC_INSTANTIATE_GNN

}  // namespace dgerc
