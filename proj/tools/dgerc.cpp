#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dgerc/harness.hpp"
#include "dgerc/log.hpp"
#include "dgerc/trainer.hpp"

using namespace dgerc;
namespace fs = std::filesystem;

namespace {

// Options shared by every command that builds a RunConfig.
struct ConfigArgs {
  std::string preset;
  std::string config_file;
  std::string synth;
  std::vector<std::string> sets;
  int epochs = -1;
  long long seed = -1;
  bool no_balance = false;
  std::string ablate = "full";
  std::string precision;
  int threads = -1;
  std::string train, val, test;

  void add_to(CLI::App* app) {
    app->add_option("--preset", preset, "standard | desk | tiny (default: standard, or from --synth)");
    app->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app->add_option("--synth", synth, "synthetic data preset: default, tiny, bench, meld-like, full-dims");
    app->add_option("--set", sets, "override, key=value (repeatable)");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--seed", seed, "seed for the model and the synthetic data");
    app->add_flag("--no-balance", no_balance, "disable adaptive modality dropout");
    app->add_option("--ablate", ablate, "full | no-md | plain-gat | no-graph");
    app->add_option("--precision", precision, "f32 | f64");
    app->add_option("--threads", threads, "kernel threads (0 = OpenMP default)");
    app->add_option("--train", train, "training dialogues (JSONL)");
    app->add_option("--val", val, "validation dialogues (JSONL)");
    app->add_option("--test", test, "test dialogues (JSONL)");
  }

  RunConfig build() const {
    std::string p = preset;
    if (p.empty()) p = synth.empty() ? "standard" : (synth == "tiny" ? "tiny" : "desk");
    RunConfig cfg = run_preset(p);
    if (!config_file.empty()) cfg.load_file(config_file);
    if (!synth.empty()) cfg.set("synth.preset", synth);
    if (!train.empty()) cfg.train_path = train;
    if (!val.empty()) cfg.val_path = val;
    if (!test.empty()) cfg.test_path = test;
    apply_ablation(cfg, ablate);
    if (no_balance) cfg.model.balance.enabled = false;
    if (epochs >= 0) cfg.epochs = epochs;
    if (seed >= 0) {
      cfg.seed = static_cast<std::uint64_t>(seed);
      cfg.synth.seed = static_cast<std::uint64_t>(seed);
    }
    if (!precision.empty()) cfg.precision = precision;
    if (threads >= 0) cfg.threads = threads;
    for (const auto& s : sets) cfg.set_assignment(s);
    return cfg;
  }
};

fs::path resolve_out(const std::string& out, const std::string& fallback) {
  const fs::path p = out.empty() ? fs::path(fallback) : fs::path(out);
  return p.is_absolute() ? p : output_root() / p;
}

std::string fixed(double x, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

std::vector<double> parse_list(const std::string& s) {
  RunConfig tmp;
  tmp.set("eval.noise", s);
  return tmp.noise_grid;
}

void print_report(const std::string& split, const EvalReport& r) {
  std::cout << "  " << std::left << std::setw(6) << split << " wa_acc " << fixed(r.wa_acc)
            << "  wa_f1 " << fixed(r.wa_f1) << "  (n=" << r.count << ")\n";
}

template <std::floating_point T>
TrainSummary train_with(RunConfig cfg, const fs::path& dir, const std::string& resume) {
  DataSplits data = load_data(cfg);
  Trainer<T> trainer(cfg, std::move(data), dir);
  if (!resume.empty()) trainer.resume(resume);
  return trainer.run();
}

TrainSummary train_any(const RunConfig& cfg, const fs::path& dir, const std::string& resume = "") {
  if (cfg.precision == "f64") return train_with<double>(cfg, dir, resume);
  return train_with<float>(cfg, dir, resume);
}

// ---- train ----

int cmd_train(const ConfigArgs& args, const std::string& out, const std::string& resume) {
  RunConfig cfg = args.build();
  cfg.validate();
  const fs::path dir = resolve_out(out, "train-" + cfg.hash().substr(0, 8) + "-s" + std::to_string(cfg.seed));
  log::info("run directory " + dir.string());
  const TrainSummary s = train_any(cfg, dir, resume);
  std::cout << "trained " << s.epochs_run << " epoch(s), best epoch " << s.best_epoch << "\n";
  print_report("train", s.train);
  if (s.has_val) print_report("val", s.val);
  if (s.has_test) print_report("test", s.test);
  std::cout << "outputs in " << dir.string() << "\n";
  return 0;
}

// ---- eval ----

template <std::floating_point T>
int eval_with(const Checkpoint& ck, RunConfig cfg, const std::string& data_path,
              std::vector<double> grid, std::uint64_t noise_seed, const fs::path& dir) {
  std::vector<Dialogue> data;
  if (!data_path.empty()) {
    data = read_jsonl(data_path);
    for (const auto& d : data) {
      for (std::size_t m = 0; m < kModalities; ++m)
        if (!d.features[m].empty() && d.features[m][0].size() != cfg.model.input_dims[m])
          throw ConfigError(data_path + ": " + kModalityNames[m] + " dim " +
                            std::to_string(d.features[m][0].size()) + " does not match checkpoint dim " +
                            std::to_string(cfg.model.input_dims[m]));
      validate(d, cfg.model.input_dims, static_cast<int>(cfg.model.n_speakers),
               static_cast<int>(cfg.model.classes));
    }
  } else {
    const auto dims = cfg.model.input_dims;
    DataSplits s = load_data(cfg);
    if (cfg.model.input_dims != dims) throw ConfigError("data dims do not match the checkpoint");
    data = !s.test.empty() ? s.test : (!s.val.empty() ? s.val : s.train);
  }
  Model<T> model(cfg.model, Rng::derive(cfg.seed, 0));
  restore(model.params(), ck.best.empty() ? ck.params : ck.best);
  const auto rows = noise_grid_eval(model, data, grid, cfg.batch_size, noise_seed);

  fs::create_directories(dir);
  std::ofstream csv(dir / "noise.csv");
  csv << "sigma,wa_acc,wa_f1,count\n";
  std::ofstream jl(dir / "metrics.jsonl");
  std::cout << "sigma   wa_acc  wa_f1\n";
  for (const auto& r : rows) {
    std::ostringstream sig;
    sig << r.sigma;
    csv << sig.str() << "," << std::setprecision(17) << r.report.wa_acc << "," << r.report.wa_f1
        << "," << r.report.count << "\n";
    auto j = nlohmann::json::parse(metrics_json(r.report, ck.best_epoch, "eval"));
    j["sigma"] = r.sigma;
    jl << j.dump() << "\n";
    std::cout << std::left << std::setw(8) << sig.str() << fixed(r.report.wa_acc) << "  "
              << fixed(r.report.wa_f1) << "\n";
  }
  if (!rows.empty()) {
    nlohmann::json cm;
    cm["sigma"] = rows.front().sigma;
    cm["classes"] = cfg.model.classes;
    cm["confusion"] = nlohmann::json::parse(metrics_json(rows.front().report, ck.best_epoch, "eval"))["confusion"];
    std::ofstream(dir / "confusion.json") << cm.dump(2) << "\n";
  }
  std::cout << "outputs in " << dir.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, const std::string& noise,
             long long noise_seed, const std::string& out) {
  const Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig cfg = RunConfig::from_text(ck.config_text);
  const std::vector<double> grid = noise.empty() ? cfg.noise_grid : parse_list(noise);
  const std::uint64_t ns = noise_seed >= 0 ? static_cast<std::uint64_t>(noise_seed) : cfg.seed;
  const fs::path dir = out.empty() ? fs::path(ckpt_path).parent_path() / "eval" : resolve_out(out, "");
  if (ck.precision == "f64") return eval_with<double>(ck, cfg, data_path, grid, ns, dir);
  return eval_with<float>(ck, cfg, data_path, grid, ns, dir);
}

// ---- sweep ----

int cmd_sweep(const ConfigArgs& args, const std::string& param, const std::string& grid_s,
              const std::string& grid2_s, const std::string& out) {
  const RunConfig base = args.build();
  std::vector<double> grid = parse_list(grid_s);
  std::vector<double> grid2 = grid2_s.empty() ? std::vector<double>{} : parse_list(grid2_s);
  if (grid.empty()) throw ConfigError("sweep needs a non-empty --grid");
  std::string key;
  if (param == "window") key = "model.window";
  else if (param == "heads") key = "model.gnn_heads";
  else if (param == "warmup") key = "balance.warmup";
  else if (param == "qbase-pexe") {
    key = "balance.q_base";
    if (grid2.empty()) throw ConfigError("qbase-pexe needs --grid2 with p_exe values");
  } else {
    throw ConfigError("unknown sweep parameter '" + param + "' (window, heads, warmup, qbase-pexe)");
  }
  if (param != "qbase-pexe") grid2 = {std::nan("")};
  const fs::path dir = resolve_out(out, "sweep-" + param);
  fs::create_directories(dir);
  std::ofstream csv(dir / "sweep.csv");
  csv << (param == "qbase-pexe" ? "q_base,p_exe" : param) << ",best_epoch,split,wa_acc,wa_f1\n";
  for (double v : grid) {
    for (double v2 : grid2) {
      RunConfig cfg = base;
      std::ostringstream val;
      val << v;
      const bool integer = param != "qbase-pexe";
      cfg.set(key, integer ? std::to_string(static_cast<long long>(std::llround(v))) : val.str());
      std::string label = param + "-" + val.str();
      std::ostringstream val2;
      if (param == "qbase-pexe") {
        val2 << v2;
        cfg.set("balance.p_exe", val2.str());
        label += "-" + val2.str();
      }
      cfg.validate();
      const TrainSummary s = train_any(cfg, dir / label);
      const bool test = s.has_test, valid = s.has_val;
      const EvalReport& r = test ? s.test : (valid ? s.val : s.train);
      const std::string split = test ? "test" : (valid ? "val" : "train");
      csv << (integer ? std::to_string(std::llround(v)) : val.str());
      if (param == "qbase-pexe") csv << "," << val2.str();
      csv << "," << s.best_epoch << "," << split << "," << std::setprecision(17) << r.wa_acc << ","
          << r.wa_f1 << "\n";
      csv.flush();
      std::cout << label << ": " << split << " wa_acc " << fixed(r.wa_acc) << " wa_f1 "
                << fixed(r.wa_f1) << "\n";
    }
  }
  std::cout << "outputs in " << dir.string() << "\n";
  return 0;
}

// ---- bench ----

int cmd_bench(const std::string& lengths_s, std::size_t batch, std::size_t d, std::size_t heads,
              std::size_t window, std::size_t reps, const std::string& out) {
  std::vector<std::size_t> lengths;
  for (double x : parse_list(lengths_s)) lengths.push_back(static_cast<std::size_t>(x));
  const fs::path path = resolve_out(out, "bench.csv");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream csv(path);
  csv << "mode,batch,length,window,d,heads,batch_ms,per_sample_ms,throughput,flops\n";
  std::cout << std::left << std::setw(10) << "mode" << std::setw(6) << "L" << std::setw(6) << "w"
            << std::setw(12) << "batch_ms" << std::setw(14) << "sample_ms" << std::setw(12)
            << "dlg/s" << "flops\n";
  for (std::size_t L : lengths) {
    for (std::size_t w : {window, L}) {
      for (GraphMode mode : {GraphMode::DiffRGCN, GraphMode::PlainGat}) {
        const BenchRow r = bench_graph(mode, batch, L, w, d, heads, reps, 7);
        csv << r.mode << "," << r.batch << "," << r.length << "," << r.window << "," << r.d << ","
            << r.heads << "," << r.batch_ms << "," << r.per_sample_ms << "," << r.throughput << ","
            << r.flops << "\n";
        std::cout << std::left << std::setw(10) << r.mode << std::setw(6) << L << std::setw(6) << w
                  << std::setw(12) << fixed(r.batch_ms, 3) << std::setw(14)
                  << fixed(r.per_sample_ms, 4) << std::setw(12) << fixed(r.throughput, 1)
                  << r.flops << "\n";
      }
      if (w == L) break;
    }
  }
  std::cout << "outputs in " << path.string() << "\n";
  return 0;
}

// ---- gradcheck ----

int cmd_gradcheck(double tol, std::uint64_t seed) {
  bool ok = true;
  for (const auto& c : model_gradcheck(tol, seed)) {
    std::cout << (c.report.passed ? "PASS " : "FAIL ") << c.name << " (" << fixed(c.seconds, 2)
              << " s)\n  " << c.report.summary() << "\n";
    ok = ok && c.report.passed;
  }
  const ContractCheck cc = compensation_contract(0.3, seed);
  std::cout << (cc.passed ? "PASS " : "FAIL ") << "compensation contract at theta=0.3: theta grad "
            << cc.theta_grad << ", max feature-grad deviation from 1/(1-theta) " << cc.max_feature_dev
            << "\n";
  ok = ok && cc.passed;
  return ok ? 0 : 1;
}

// ---- graphdump / attn-dump ----

Dialogue pick_dialogue(const ConfigArgs& args, const std::string& data, std::size_t index,
                       RunConfig* cfg_out) {
  RunConfig cfg = args.build();
  std::vector<Dialogue> ds;
  if (!data.empty()) {
    ds = read_jsonl(data);
  } else {
    DataSplits s = load_data(cfg);
    ds = std::move(s.train);
  }
  if (index >= ds.size())
    throw DataError("dialogue index " + std::to_string(index) + " out of range (" +
                    std::to_string(ds.size()) + " dialogues)");
  if (cfg_out != nullptr) *cfg_out = cfg;
  return ds[index];
}

nlohmann::json matrix(const IdTensor& t, std::size_t b) {
  const std::size_t L = t.dim(1);
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < L; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < L; ++j) row.push_back(t[(b * L + i) * L + j]);
    out.push_back(row);
  }
  return out;
}

void emit(const nlohmann::json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  const fs::path p = resolve_out(out, "");
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream(p) << j.dump(2) << "\n";
  std::cout << "wrote " << p.string() << "\n";
}

int cmd_graphdump(const ConfigArgs& args, const std::string& speakers_s, const std::string& data,
                  std::size_t index, int window, const std::string& out) {
  std::vector<int> speakers;
  std::string id = "inline";
  if (!speakers_s.empty()) {
    for (double x : parse_list(speakers_s)) speakers.push_back(static_cast<int>(x));
  } else {
    const Dialogue d = pick_dialogue(args, data, index, nullptr);
    speakers = d.speakers;
    id = d.id;
  }
  if (speakers.empty()) throw DataError("graphdump needs at least one utterance");
  IdTensor spk({1, speakers.size()});
  for (std::size_t i = 0; i < speakers.size(); ++i) spk[i] = speakers[i];
  const RelationalSubgraphs g = build_subgraphs(spk, MaskTensor({1, speakers.size()}, 1), window);
  nlohmann::json j;
  j["id"] = id;
  j["speakers"] = speakers;
  j["window"] = window;
  j["adj_s"] = matrix(g.adj_s, 0);
  j["adj_c"] = matrix(g.adj_c, 0);
  emit(j, out);
  return 0;
}

template <std::floating_point T>
nlohmann::json dense_rows(const kernels::SparseAdjacency& adj, const std::vector<T>& per_edge) {
  const Tensor<T> dense = ops::dense_from_edges(adj, per_edge);
  const std::size_t L = adj.length;
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < L; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t k = 0; k < L; ++k) row.push_back(static_cast<double>(dense[i * L + k]));
    out.push_back(row);
  }
  return out;
}

template <std::floating_point T>
int attn_dump_with(const RunConfig& cfg, const Checkpoint* ck, const Dialogue& d, const std::string& out) {
  Model<T> model(cfg.model, Rng::derive(cfg.seed, 0));
  if (ck != nullptr) restore(model.params(), ck->best.empty() ? ck->params : ck->best);
  const std::vector<Dialogue> one{d};
  const auto batch = collate<T>(one, cfg.model.n_speakers);
  Tape<T> tape;
  StepOptions<T> opt;
  opt.keep_traces = true;
  const auto r = model.forward(tape, batch, opt);
  nlohmann::json j;
  j["id"] = d.id;
  j["speakers"] = d.speakers;
  j["labels"] = d.labels;
  j["graph"] = to_string(cfg.model.graph);
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& t : r.traces) {
    nlohmann::json e;
    e["layer"] = t.layer;
    e["head"] = t.head;
    e["lambda_full"] = t.lambda_full;
    e["alpha"] = dense_rows(*t.adj, t.cache->alpha);
    if (!t.cache->alpha_neg.empty()) {
      e["alpha_pos"] = dense_rows(*t.adj, t.cache->alpha_pos);
      e["alpha_neg"] = dense_rows(*t.adj, t.cache->alpha_neg);
    }
    layers.push_back(e);
  }
  j["heads"] = layers;
  emit(j, out);
  return 0;
}

int cmd_attn_dump(const ConfigArgs& args, const std::string& ckpt_path, const std::string& data,
                  std::size_t index, const std::string& out) {
  RunConfig cfg;
  std::optional<Checkpoint> ck;
  Dialogue d;
  if (!ckpt_path.empty()) {
    ck = load_checkpoint(ckpt_path);
    cfg = RunConfig::from_text(ck->config_text);
    if (!data.empty()) {
      const auto ds = read_jsonl(data);
      if (index >= ds.size()) throw DataError("dialogue index out of range");
      d = ds[index];
    } else {
      DataSplits s = load_data(cfg);
      if (index >= s.train.size()) throw DataError("dialogue index out of range");
      d = s.train[index];
    }
  } else {
    d = pick_dialogue(args, data, index, &cfg);
    if (!data.empty())
      for (std::size_t m = 0; m < kModalities; ++m) cfg.model.input_dims[m] = d.features[m][0].size();
  }
  validate(d, cfg.model.input_dims, static_cast<int>(cfg.model.n_speakers),
           static_cast<int>(cfg.model.classes));
  if (cfg.precision == "f64") return attn_dump_with<double>(cfg, ck ? &*ck : nullptr, d, out);
  return attn_dump_with<float>(cfg, ck ? &*ck : nullptr, d, out);
}

// ---- synth ----

int cmd_synth(const ConfigArgs& args, const std::string& out) {
  RunConfig cfg = args.build();
  cfg.synth.validate();
  const auto ds = generate(cfg.synth);
  const fs::path p = resolve_out(out, "synth-" + std::to_string(cfg.synth.seed) + ".jsonl");
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_jsonl(p, ds);
  std::cout << "wrote " << ds.size() << " dialogues to " << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal emotion recognition in conversation: training, evaluation and tooling"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  ConfigArgs train_args;
  std::string train_out, resume;
  auto* train = app.add_subcommand("train", "train a model");
  train_args.add_to(train);
  train->add_option("--out", train_out, "run directory (relative to the output root)");
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);

  std::string ckpt, eval_data, noise, eval_out;
  long long noise_seed = -1;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over a noise grid");
  eval->add_option("--checkpoint", ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "dialogues to score (default: the run's test split)");
  eval->add_option("--noise", noise, "comma-separated sigma grid (default 0,0.1,0.3,0.5,0.7)");
  eval->add_option("--noise-seed", noise_seed, "seed of the noise stream (default: run seed)");
  eval->add_option("--out", eval_out, "output directory");

  ConfigArgs sweep_args;
  std::string sweep_param, grid, grid2, sweep_out;
  auto* sweep = app.add_subcommand("sweep", "train over a grid of one hyperparameter");
  sweep_args.add_to(sweep);
  sweep->add_option("--param", sweep_param, "window | heads | warmup | qbase-pexe")->required();
  sweep->add_option("--grid", grid, "comma-separated values")->required();
  sweep->add_option("--grid2", grid2, "p_exe values for qbase-pexe");
  sweep->add_option("--out", sweep_out, "output directory");

  std::string lengths = "16,64,128,256", bench_out;
  std::size_t bench_batch = 4, bench_d = 32, bench_heads = 4, bench_window = 5, reps = 5;
  auto* bench = app.add_subcommand("bench", "time the differential vs plain graph attention stack");
  bench->add_option("--lengths", lengths, "dialogue lengths");
  bench->add_option("--batch", bench_batch, "dialogues per batch");
  bench->add_option("--d", bench_d, "hidden width");
  bench->add_option("--heads", bench_heads, "attention heads");
  bench->add_option("--window", bench_window, "window of the sparse runs (dense runs use w = L)");
  bench->add_option("--reps", reps, "timed repetitions (median reported)");
  bench->add_option("--out", bench_out, "CSV path");

  double tol = 1e-3;
  std::uint64_t gc_seed = 11;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full model (f64)");
  gradcheck->add_option("--tol", tol, "relative tolerance");
  gradcheck->add_option("--seed", gc_seed, "seed of weights and instance");

  ConfigArgs gd_args;
  std::string speakers, gd_data, gd_out;
  std::size_t gd_index = 0;
  int gd_window = 5;
  auto* graphdump = app.add_subcommand("graphdump", "print the relational subgraphs of a dialogue");
  gd_args.add_to(graphdump);
  graphdump->add_option("--speakers", speakers, "comma-separated speaker ids, e.g. 0,1,0");
  graphdump->add_option("--data", gd_data, "JSONL dialogues");
  graphdump->add_option("--index", gd_index, "dialogue index");
  graphdump->add_option("--window", gd_window, "window w");
  graphdump->add_option("--out", gd_out, "JSON path (default stdout)");

  ConfigArgs ad_args;
  std::string ad_ckpt, ad_data, ad_out;
  std::size_t ad_index = 0;
  auto* attn = app.add_subcommand("attn-dump", "dump graph attention weights for one dialogue");
  ad_args.add_to(attn);
  attn->add_option("--checkpoint", ad_ckpt, "trained checkpoint (default: fresh weights)");
  attn->add_option("--data", ad_data, "JSONL dialogues");
  attn->add_option("--index", ad_index, "dialogue index");
  attn->add_option("--out", ad_out, "JSON path (default stdout)");

  ConfigArgs synth_args;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic dialogue set as JSONL");
  synth_args.add_to(synth);
  synth->add_option("--out", synth_out, "JSONL path");

  CLI11_PARSE(app, argc, argv);
  if (verbose) log::set_level(log::Level::Debug);
  if (quiet) log::set_level(log::Level::Warn);

  try {
    if (*train) return cmd_train(train_args, train_out, resume);
    if (*eval) return cmd_eval(ckpt, eval_data, noise, noise_seed, eval_out);
    if (*sweep) return cmd_sweep(sweep_args, sweep_param, grid, grid2, sweep_out);
    if (*bench) return cmd_bench(lengths, bench_batch, bench_d, bench_heads, bench_window, reps, bench_out);
    if (*gradcheck) return cmd_gradcheck(tol, gc_seed);
    if (*graphdump) return cmd_graphdump(gd_args, speakers, gd_data, gd_index, gd_window, gd_out);
    if (*attn) return cmd_attn_dump(ad_args, ad_ckpt, ad_data, ad_index, ad_out);
    if (*synth) return cmd_synth(synth_args, synth_out);
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
