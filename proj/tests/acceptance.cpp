// Acceptance gate: criteria 1-10, one PASS/FAIL line each.
// Usage: acceptance [criterion numbers...]   (no arguments runs all ten)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dgerc/balance.hpp"
#include "dgerc/config.hpp"
#include "dgerc/diff_rgcn.hpp"
#include "dgerc/graph.hpp"
#include "dgerc/harness.hpp"
#include "dgerc/log.hpp"
#include "dgerc/metrics.hpp"
#include "dgerc/trainer.hpp"
#include "graph_oracle.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dgerc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and sizes.
constexpr double kGradTol = 1e-3;
constexpr double kGradSeconds = 60.0;
constexpr int kGraphInstances = 1000;
constexpr int kAttnConfigs = 200;
constexpr double kRowSumTol = 1e-5;
constexpr double kCollapseTol = 1e-6;
constexpr int kBalanceTriples = 1000;
constexpr double kBalanceTol = 1e-9;
constexpr int kMaskDraws = 10000;
constexpr int kMetricInstances = 500;
constexpr double kOverfitAcc = 0.95;
constexpr double kOverfitSeconds = 300.0;
constexpr int kSeeds = 5;
constexpr double kAblationGap = 0.02;
constexpr double kNoiseStepTol = 0.01;
constexpr double kSlopeGap = 0.5;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Result {
  bool pass = false;
  std::string detail;
};

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dgerc-acceptance-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---- 1 ----
Result gradcheck() {
  const auto t0 = Clock::now();
  const auto cases = model_gradcheck(kGradTol, 11);
  bool ok = true;
  double worst = 0.0;
  std::size_t checked = 0;
  for (const auto& c : cases) {
    ok = ok && c.report.passed;
    worst = std::max(worst, c.report.max_abs_err);
    checked += c.report.checked;
  }
  const auto contract = compensation_contract(0.3, 12);
  const double secs = seconds_since(t0);
  ok = ok && contract.passed && contract.theta_grad == 0.0 && contract.max_feature_dev == 0.0 &&
       secs < kGradSeconds;
  return {ok, std::to_string(cases.size()) + " cases, " + std::to_string(checked) +
                  " entries, max abs err " + sci(worst) + ", theta grad " +
                  sci(contract.theta_grad) + ", feature dev " + sci(contract.max_feature_dev) +
                  ", " + fmt(secs, 1) + " s"};
}

// ---- 2 ----
Result graph_oracle() {
  Rng rng(2024);
  int mismatches = 0;
  for (int t = 0; t < kGraphInstances; ++t) {
    const std::size_t B = 1 + rng.below(3), L = 1 + rng.below(12);
    const int n_spk = 1 + static_cast<int>(rng.below(9));
    const int w = static_cast<int>(rng.below(7));
    IdTensor spk({B, L});
    MaskTensor mask({B, L});
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t len = rng.below(L + 1);
      for (std::size_t i = 0; i < L; ++i) {
        mask.at({b, i}) = i < len;
        spk.at({b, i}) = i < len ? static_cast<int>(rng.below(static_cast<std::size_t>(n_spk))) : n_spk;
      }
    }
    const auto g = build_subgraphs(spk, mask, w);
    const auto o = testing::oracle_build_subgraphs(spk, mask, w);
    if (!(g.adj_s == o.adj_s && g.adj_c == o.adj_c)) ++mismatches;
  }
  // A,B,A with a wide window
  const auto g = build_subgraphs(IdTensor({1, 3}, {0, 1, 0}), MaskTensor({1, 3}, 1), 5);
  const bool hand = g.adj_s == IdTensor({1, 3, 3}, {1, 0, 3, 0, 1, 0, 2, 0, 1}) &&
                    g.adj_c == IdTensor({1, 3, 3}, {1, 4, 0, 5, 1, 4, 0, 5, 1});
  return {mismatches == 0 && hand, std::to_string(mismatches) + "/" +
                                       std::to_string(kGraphInstances) +
                                       " mismatches, hand case A,B,A " + (hand ? "ok" : "wrong")};
}

// ---- 3 ----
std::shared_ptr<const kernels::SparseAdjacency> sparse(const IdTensor& adj, int w) {
  return std::make_shared<const kernels::SparseAdjacency>(
      kernels::sparse_from_dense(adj.data(), adj.dim(0), adj.dim(1), static_cast<std::size_t>(w)));
}

Result attention_algebra() {
  Rng rng(32);
  double worst_row = 0.0, worst_collapse = 0.0;
  std::size_t mask_violations = 0;
  for (int t = 0; t < kAttnConfigs; ++t) {
    const std::size_t B = 1 + rng.below(3), L = 1 + rng.below(10);
    const int w = static_cast<int>(rng.below(7));
    const std::size_t d_in = 2 + rng.below(6), d_head = 2 * (1 + rng.below(3));
    IdTensor spk({B, L});
    MaskTensor mask({B, L});
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t len = b == 0 ? L : rng.below(L + 1);
      for (std::size_t i = 0; i < L; ++i) {
        mask.at({b, i}) = i < len;
        spk.at({b, i}) = i < len ? static_cast<int>(rng.below(3)) : 3;
      }
    }
    const auto g = build_subgraphs(spk, mask, w);
    const IdTensor& dense_adj = t % 2 ? g.adj_s : g.adj_c;
    const auto adj = sparse(dense_adj, w);
    const int depth = static_cast<int>(rng.below(5));

    // rows sum to 1 - lambda_full at valid rows, exact zeros elsewhere (f32)
    {
      ParamStore<float> store;
      register_head<float>(store, "h.", d_in, d_head, 4, d_head / 2, true, true, rng);
      Tape<float> tape;
      auto o = diff_attention_head(
          tape, tape.constant(testing::random_tensor<float>({B, L, d_in}, rng)), adj, depth,
          store, "h.", true, true);
      const double lam = o.lambda_full.value().item();
      const auto alpha = ops::dense_from_edges(*adj, o.cache->alpha);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < L; ++i) {
          double row = 0.0;
          for (std::size_t j = 0; j < L; ++j) {
            const float a = alpha.at({b, i, j});
            if (dense_adj.at({b, i, j}) == 0 && a != 0.0f) ++mask_violations;
            row += a;
          }
          if (mask.at({b, i})) {
            worst_row = std::max(worst_row, std::abs(row - (1.0 - lam)));
          } else if (row != 0.0) {
            ++mask_violations;
          }
        }
      }
    }

    // identical branches collapse to (1 - lambda_full) softmax (f64)
    {
      ParamStore<double> store;
      register_head<double>(store, "h.", d_in, d_head, 4, d_head / 2, true, true, rng);
      auto& W = store.get("h.W").value;
      for (std::size_t r = 0; r < d_in; ++r)
        for (std::size_t c = 0; c < d_head / 2; ++c) W.at({r, c + d_head / 2}) = W.at({r, c});
      store.get("h.a_l_neg").value = store.get("h.a_l_pos").value;
      store.get("h.a_r_neg").value = store.get("h.a_r_pos").value;
      store.get("h.rel_neg").value = store.get("h.rel_pos").value;
      Tape<double> tape;
      auto o = diff_attention_head(
          tape, tape.constant(testing::random_tensor<double>({B, L, d_in}, rng)), adj, depth,
          store, "h.", true, true);
      const double lam = o.lambda_full.value().item();
      for (std::size_t e = 0; e < adj->edges(); ++e)
        worst_collapse =
            std::max(worst_collapse, std::abs(o.cache->alpha[e] - (1.0 - lam) * o.cache->alpha_pos[e]));
    }
  }
  const bool init_ok = lambda_init(0) == 0.2;
  const bool ok = worst_row <= kRowSumTol && mask_violations == 0 &&
                  worst_collapse <= kCollapseTol && init_ok;
  return {ok, std::to_string(kAttnConfigs) + " configs, row-sum dev " + sci(worst_row) +
                  ", masked nonzeros " + std::to_string(mask_violations) + ", collapse dev " +
                  sci(worst_collapse) + ", lambda_init(0) " + (init_ok ? "= 0.2" : "!= 0.2")};
}

// ---- 4 ----
Result balancing() {
  Rng rng(41);
  BalanceConfig cfg;
  double worst = 0.0;
  for (int t = 0; t < kBalanceTriples; ++t) {
    Triple p{rng.uniform(), rng.uniform(), rng.uniform()};
    if (t % 10 == 0) p[rng.below(3)] = 0.0;
    const Triple q = dropout_probabilities(p, cfg);
    const Triple o = testing::oracle_q(p, cfg.q_base, cfg.lambda_scale, cfg.epsilon);
    for (std::size_t m = 0; m < 3; ++m) worst = std::max(worst, std::abs(q[m] - o[m]));
  }
  bool equal_ok = true;
  for (double x : {0.0, 0.123, 0.5, 0.69, 1.0}) {
    const Triple q = dropout_probabilities({x, x, x}, cfg);
    for (double v : q) equal_ok = equal_ok && v == cfg.q_base;
  }

  // Monte-Carlo: mean of F'' per element within 3 standard errors of its
  // expectation (1-q_m)/(1-theta) F, which is F itself for equal q.
  Rng data(45);
  const std::size_t B = 2, d = 2;
  std::array<Tensor<double>, kModalities> f;
  for (auto& t : f) t = testing::random_tensor<double>({B, 1, d}, data, 0.2, 1.5);
  BalanceConfig mc = cfg;
  mc.p_exe = 1.0;
  std::size_t outside = 0, elements = 0;
  for (const Triple q : {Triple{0.3, 0.3, 0.3}, Triple{0.5, 0.2, 0.35}}) {
    Rng mrng(6);
    std::array<std::vector<double>, kModalities> sum, sq;
    for (auto& s : sum) s.assign(B * d, 0.0);
    for (auto& s : sq) s.assign(B * d, 0.0);
    double theta = 0.0;
    for (int i = 0; i < kMaskDraws; ++i) {
      Tape<double> tape;
      std::array<Var<double>, kModalities> v;
      for (std::size_t m = 0; m < kModalities; ++m) v[m] = tape.constant(f[m]);
      BalanceState st;
      auto out = apply_modality_dropout(v, q, mc, mrng, st);
      theta = st.theta;
      for (std::size_t m = 0; m < kModalities; ++m)
        for (std::size_t k = 0; k < B * d; ++k) {
          const double x = out[m].value()[k];
          sum[m][k] += x;
          sq[m][k] += x * x;
        }
    }
    for (std::size_t m = 0; m < kModalities; ++m) {
      const double scale = (1.0 - q[m]) / (1.0 - theta);
      for (std::size_t k = 0; k < B * d; ++k) {
        const double mean = sum[m][k] / kMaskDraws;
        const double se = std::sqrt((sq[m][k] / kMaskDraws - mean * mean) / kMaskDraws);
        ++elements;
        if (std::abs(mean - scale * f[m][k]) > 3 * se) ++outside;
      }
    }
  }
  const bool ok = worst <= kBalanceTol && equal_ok && outside == 0;
  return {ok, std::to_string(kBalanceTriples) + " triples, max dev " + sci(worst) +
                  ", equal p -> q_base " + (equal_ok ? "exact" : "inexact") + ", Monte-Carlo " +
                  std::to_string(elements - outside) + "/" + std::to_string(elements) +
                  " elements within 3 se over " + std::to_string(kMaskDraws) + " draws"};
}

// ---- 5 ----
Result metric_oracle() {
  Rng rng(8);
  int mismatches = 0;
  for (int t = 0; t < kMetricInstances; ++t) {
    const int C = 2 + static_cast<int>(rng.below(6));
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> y(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(static_cast<std::size_t>(C)));
      p[i] = rng.uniform() < 0.4 ? y[i] : static_cast<int>(rng.below(static_cast<std::size_t>(C)));
    }
    const auto r = evaluate(y, p, static_cast<std::size_t>(C));
    const auto o = testing::oracle_metrics(y, p, C);
    if (r.wa_acc != o.acc || r.wa_f1 != o.wf1) ++mismatches;
  }
  const auto perfect = evaluate({0, 1, 2, 2, 5, 3, 3}, {0, 1, 2, 2, 5, 3, 3}, 6);
  const bool perfect_ok = perfect.wa_acc == 1.0 && perfect.wa_f1 == 1.0;
  return {mismatches == 0 && perfect_ok,
          std::to_string(mismatches) + "/" + std::to_string(kMetricInstances) +
              " mismatches, perfect prediction " + (perfect_ok ? "1.0" : "not 1.0")};
}

// ---- 6 ----
Result overfit() {
  const auto t0 = Clock::now();
  RunConfig cfg = run_preset("tiny");
  cfg.model.balance.enabled = false;
  auto data = load_data(cfg);
  const std::size_t n = data.train.size();
  Trainer<float> trainer(cfg, std::move(data), {});
  const auto s = trainer.run();
  const double secs = seconds_since(t0);
  const bool ok = cfg.synth.n_dialogues == 20 && cfg.epochs == 200 && s.train.wa_acc >= kOverfitAcc &&
                  secs < kOverfitSeconds;
  return {ok, std::to_string(n) + " dialogues, " + std::to_string(s.epochs_run) +
                  " epochs, train wa_acc " + fmt(s.train.wa_acc) + ", " + fmt(secs, 1) + " s"};
}

// ---- 7 and 8 share the full-model runs ----
struct AblationRuns {
  bool done = false;
  std::array<std::vector<double>, 4> f1;  // full, no-md, plain-gat, no-graph
  std::vector<std::vector<double>> noise_acc;  // [seed][sigma], full model
  std::vector<double> grid;
};

const std::array<const char*, 4> kVariants{"full", "no-md", "plain-gat", "no-graph"};

AblationRuns& ablation_runs() {
  static AblationRuns runs;
  if (runs.done) return runs;
  for (int s = 1; s <= kSeeds; ++s) {
    for (std::size_t v = 0; v < kVariants.size(); ++v) {
      const auto t0 = Clock::now();
      RunConfig cfg = run_preset("desk");
      cfg.seed = static_cast<std::uint64_t>(s);
      cfg.synth.seed = static_cast<std::uint64_t>(s);
      apply_ablation(cfg, kVariants[v]);
      auto data = load_data(cfg);
      const auto test = data.test;
      Trainer<float> trainer(cfg, std::move(data), {});
      const auto summary = trainer.run();
      runs.f1[v].push_back(summary.test.wa_f1);
      if (v == 0) {
        runs.grid = cfg.noise_grid;
        std::vector<double> acc;
        for (const auto& row :
             noise_grid_eval(trainer.model(), test, cfg.noise_grid, cfg.batch_size, 7))
          acc.push_back(row.report.wa_acc);
        runs.noise_acc.push_back(acc);
      }
      std::cout << "  seed " << s << " " << kVariants[v] << ": test wa-F1 "
                << fmt(summary.test.wa_f1) << " (best epoch " << summary.best_epoch << ", "
                << fmt(seconds_since(t0), 1) << " s)" << std::endl;
    }
  }
  runs.done = true;
  return runs;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

Result ablation() {
  const RunConfig cfg = run_preset("desk");
  const auto& sc = cfg.synth;
  const bool setting = sc.n_dialogues == 500 && sc.kappa == 0.6 && sc.gamma == 0.3 &&
                       sc.rho == std::array<double, 3>{0.8, 0.3, 0.6};
  const auto& runs = ablation_runs();
  std::array<double, 4> m{};
  for (std::size_t v = 0; v < 4; ++v) m[v] = mean(runs.f1[v]);
  const bool ok = setting && m[0] >= m[1] && m[1] >= m[2] && m[2] >= m[3] && m[0] - m[3] >= kAblationGap;
  std::string d = "mean test wa-F1";
  for (std::size_t v = 0; v < 4; ++v) d += std::string(" ") + kVariants[v] + " " + fmt(m[v]);
  d += ", full - no-graph " + fmt(100.0 * (m[0] - m[3]), 2) + " points";
  if (!setting) d += ", desk preset does not match the benchmark setting";
  return {ok, d};
}

Result noise_trend() {
  const auto& runs = ablation_runs();
  std::vector<double> m(runs.grid.size(), 0.0);
  for (const auto& seed : runs.noise_acc)
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += seed[k] / static_cast<double>(runs.noise_acc.size());
  bool ok = runs.grid == std::vector<double>{0.0, 0.1, 0.3, 0.5, 0.7};
  for (std::size_t k = 1; k < m.size(); ++k) ok = ok && m[k] <= m[k - 1] + kNoiseStepTol;
  std::string d = "mean wa_acc over " + std::to_string(runs.noise_acc.size()) + " seeds:";
  for (std::size_t k = 0; k < m.size(); ++k) d += " sigma " + fmt(runs.grid[k], 1) + " " + fmt(m[k]);
  return {ok, d};
}

// ---- 9 ----
Result complexity() {
  const std::vector<std::size_t> lengths{64, 128, 256};
  const std::size_t B = 4, d = 32, heads = 4, w = 5, reps = 5;
  bool faster = true;
  std::string d_out;
  std::array<double, 2> gaps{};
  std::vector<double> xs(lengths.begin(), lengths.end());
  std::array<std::vector<double>, 2> win, dense;  // [mode][L]
  const std::array<GraphMode, 2> modes{GraphMode::DiffRGCN, GraphMode::PlainGat};
  for (std::size_t L : lengths) {
    for (std::size_t k = 0; k < 2; ++k) {
      win[k].push_back(bench_graph(modes[k], B, L, w, d, heads, reps, 5).batch_ms);
      dense[k].push_back(bench_graph(modes[k], B, L, L, d, heads, reps, 5).batch_ms);
    }
    const std::size_t i = win[0].size() - 1;
    faster = faster && win[0][i] > win[1][i] && dense[0][i] > dense[1][i];
  }
  for (std::size_t k = 0; k < 2; ++k)
    gaps[k] = loglog_slope(xs, dense[k]) - loglog_slope(xs, win[k]);
  for (std::size_t i = 0; i < lengths.size(); ++i)
    d_out += "L=" + std::to_string(lengths[i]) + " diff/plain ms " + fmt(win[0][i], 2) + "/" +
             fmt(win[1][i], 2) + " (dense " + fmt(dense[0][i], 2) + "/" + fmt(dense[1][i], 2) + "), ";
  d_out += "slope gap diff " + fmt(gaps[0], 2) + " plain " + fmt(gaps[1], 2);
  return {faster && gaps[0] >= kSlopeGap && gaps[1] >= kSlopeGap, d_out};
}

// ---- 10 ----
RunConfig determinism_config() {
  RunConfig c = run_preset("desk");
  c.synth.n_dialogues = 40;
  c.synth.len_min = 3;
  c.synth.len_max = 9;
  c.model.d_h = 16;
  c.model.d_r = 4;
  c.model.enc_heads = 2;
  c.model.gnn_heads = 2;
  c.model.balance.warmup_epochs = 2;
  c.model.balance.p_exe = 1.0;
  c.batch_size = 8;
  c.epochs = 6;
  c.threads = 1;
  c.eval_train = true;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void train_into(RunConfig cfg, const fs::path& dir, const fs::path& resume_from = {}) {
  auto data = load_data(cfg);
  Trainer<float> trainer(cfg, std::move(data), dir);
  if (!resume_from.empty()) trainer.resume(resume_from);
  trainer.run();
}

Result determinism() {
  const fs::path root = scratch_dir("determinism");
  const RunConfig cfg = determinism_config();
  train_into(cfg, root / "a");
  train_into(cfg, root / "b");
  // interrupted after 3 epochs, then resumed to 6
  RunConfig first = cfg;
  first.epochs = 3;
  train_into(first, root / "c");
  train_into(cfg, root / "c", root / "c" / "last.ckpt");

  const std::vector<std::string> files{"metrics.jsonl", "losses.csv", "balance.csv",
                                       "lambda.csv", "summary.json", "last.ckpt"};
  int same_seed = 0, resumed = 0;
  for (const auto& f : files) {
    const std::string a = slurp(root / "a" / f);
    same_seed += !a.empty() && a == slurp(root / "b" / f);
    resumed += !a.empty() && a == slurp(root / "c" / f);
  }
  const int n = static_cast<int>(files.size());
  fs::remove_all(root);
  return {same_seed == n && resumed == n,
          "same-seed identical files " + std::to_string(same_seed) + "/" + std::to_string(n) +
              ", resumed vs uninterrupted " + std::to_string(resumed) + "/" + std::to_string(n)};
}

}  // namespace

int main(int argc, char** argv) {
  log::set_level(log::Level::Warn);
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria{
      {"full-model gradient check and compensation contract", gradcheck},
      {"relational subgraphs against the oracle", graph_oracle},
      {"differential attention algebra", attention_algebra},
      {"balancing algebra", balancing},
      {"metric oracle", metric_oracle},
      {"overfit smoke", overfit},
      {"ablation ordering", ablation},
      {"noise robustness trend", noise_trend},
      {"complexity direction", complexity},
      {"determinism and resume", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Result r;
    try {
      r = criteria[k].second();
    } catch (const std::exception& e) {
      r = {false, std::string("threw: ") + e.what()};
    }
    failed += !r.pass;
    std::cout << "criterion " << id << " " << (r.pass ? "PASS" : "FAIL") << "  "
              << criteria[k].first << ": " << r.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
