#include "dgerc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

namespace dgerc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  char* end = nullptr;
  const double x = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(x))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  long long x = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return x;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < 0) throw ConfigError(key + ": must be >= 0, got " + v);
  return static_cast<std::size_t>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  const std::string t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

template <typename V>
std::string join(const V& xs) {
  std::string out;
  for (const auto& x : xs) {
    if (!out.empty()) out += ",";
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(x)>>)
      out += fmt(x);
    else
      out += std::to_string(x);
  }
  return out;
}

std::array<double, 3> to_triple(const std::string& key, const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() == 1) {
    const double x = to_double(key, parts[0]);
    return {x, x, x};
  }
  if (parts.size() != 3) throw ConfigError(key + ": expected 1 or 3 comma-separated numbers");
  return {to_double(key, parts[0]), to_double(key, parts[1]), to_double(key, parts[2])};
}

std::array<std::size_t, 3> to_dims(const std::string& key, const std::string& v) {
  const auto parts = split_list(v);
  if (parts.size() != 3) throw ConfigError(key + ": expected 3 comma-separated sizes");
  return {to_size(key, parts[0]), to_size(key, parts[1]), to_size(key, parts[2])};
}

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split_list(v))
    if (!p.empty()) out.push_back(to_double(key, p));
  return out;
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> put;
  bool hashed = true;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"data.train", [](const RunConfig& c) { return c.train_path; },
       [](RunConfig& c, const std::string& v) { c.train_path = trim(v); }},
      {"data.val", [](const RunConfig& c) { return c.val_path; },
       [](RunConfig& c, const std::string& v) { c.val_path = trim(v); }},
      {"data.test", [](const RunConfig& c) { return c.test_path; },
       [](RunConfig& c, const std::string& v) { c.test_path = trim(v); }},
      {"data.split", [](const RunConfig& c) { return join(c.split); },
       [](RunConfig& c, const std::string& v) { c.split = to_triple("data.split", v); }},

      {"synth.n_dialogues", [](const RunConfig& c) { return std::to_string(c.synth.n_dialogues); },
       [](RunConfig& c, const std::string& v) { c.synth.n_dialogues = to_size("synth.n_dialogues", v); }},
      {"synth.len_min", [](const RunConfig& c) { return std::to_string(c.synth.len_min); },
       [](RunConfig& c, const std::string& v) { c.synth.len_min = to_size("synth.len_min", v); }},
      {"synth.len_max", [](const RunConfig& c) { return std::to_string(c.synth.len_max); },
       [](RunConfig& c, const std::string& v) { c.synth.len_max = to_size("synth.len_max", v); }},
      {"synth.n_speakers", [](const RunConfig& c) { return std::to_string(c.synth.n_speakers); },
       [](RunConfig& c, const std::string& v) { c.synth.n_speakers = to_size("synth.n_speakers", v); }},
      {"synth.classes", [](const RunConfig& c) { return std::to_string(c.synth.classes); },
       [](RunConfig& c, const std::string& v) { c.synth.classes = to_size("synth.classes", v); }},
      {"synth.prior", [](const RunConfig& c) { return join(c.synth.prior); },
       [](RunConfig& c, const std::string& v) { c.synth.prior = to_doubles("synth.prior", v); }},
      {"synth.rho", [](const RunConfig& c) { return join(c.synth.rho); },
       [](RunConfig& c, const std::string& v) { c.synth.rho = to_triple("synth.rho", v); }},
      {"synth.kappa", [](const RunConfig& c) { return fmt(c.synth.kappa); },
       [](RunConfig& c, const std::string& v) { c.synth.kappa = to_double("synth.kappa", v); }},
      {"synth.gamma", [](const RunConfig& c) { return fmt(c.synth.gamma); },
       [](RunConfig& c, const std::string& v) { c.synth.gamma = to_double("synth.gamma", v); }},
      {"synth.switch_prob", [](const RunConfig& c) { return fmt(c.synth.switch_prob); },
       [](RunConfig& c, const std::string& v) { c.synth.switch_prob = to_double("synth.switch_prob", v); }},
      {"synth.dims", [](const RunConfig& c) { return join(c.synth.dims); },
       [](RunConfig& c, const std::string& v) { c.synth.dims = to_dims("synth.dims", v); }},
      {"synth.sigma", [](const RunConfig& c) { return join(c.synth.sigma); },
       [](RunConfig& c, const std::string& v) { c.synth.sigma = to_triple("synth.sigma", v); }},
      {"synth.seed", [](const RunConfig& c) { return std::to_string(c.synth.seed); },
       [](RunConfig& c, const std::string& v) {
         c.synth.seed = static_cast<std::uint64_t>(to_size("synth.seed", v));
       }},

      {"model.input_dims", [](const RunConfig& c) { return join(c.model.input_dims); },
       [](RunConfig& c, const std::string& v) { c.model.input_dims = to_dims("model.input_dims", v); }},
      {"model.d_h", [](const RunConfig& c) { return std::to_string(c.model.d_h); },
       [](RunConfig& c, const std::string& v) { c.model.d_h = to_size("model.d_h", v); }},
      {"model.enc_heads", [](const RunConfig& c) { return std::to_string(c.model.enc_heads); },
       [](RunConfig& c, const std::string& v) { c.model.enc_heads = to_size("model.enc_heads", v); }},
      {"model.gnn_heads", [](const RunConfig& c) { return std::to_string(c.model.gnn_heads); },
       [](RunConfig& c, const std::string& v) { c.model.gnn_heads = to_size("model.gnn_heads", v); }},
      {"model.d_r", [](const RunConfig& c) { return std::to_string(c.model.d_r); },
       [](RunConfig& c, const std::string& v) { c.model.d_r = to_size("model.d_r", v); }},
      {"model.lambda_dim", [](const RunConfig& c) { return std::to_string(c.model.lambda_dim); },
       [](RunConfig& c, const std::string& v) { c.model.lambda_dim = to_size("model.lambda_dim", v); }},
      {"model.gnn_stacks", [](const RunConfig& c) { return std::to_string(c.model.gnn_stacks); },
       [](RunConfig& c, const std::string& v) { c.model.gnn_stacks = to_size("model.gnn_stacks", v); }},
      {"model.n_speakers", [](const RunConfig& c) { return std::to_string(c.model.n_speakers); },
       [](RunConfig& c, const std::string& v) { c.model.n_speakers = to_size("model.n_speakers", v); }},
      {"model.classes", [](const RunConfig& c) { return std::to_string(c.model.classes); },
       [](RunConfig& c, const std::string& v) { c.model.classes = to_size("model.classes", v); }},
      {"model.window", [](const RunConfig& c) { return std::to_string(c.model.window); },
       [](RunConfig& c, const std::string& v) {
         c.model.window = static_cast<int>(to_int("model.window", v));
       }},
      {"model.gnn_dropout", [](const RunConfig& c) { return fmt(c.model.gnn_dropout); },
       [](RunConfig& c, const std::string& v) { c.model.gnn_dropout = to_double("model.gnn_dropout", v); }},
      {"model.head_dropout", [](const RunConfig& c) { return fmt(c.model.head_dropout); },
       [](RunConfig& c, const std::string& v) { c.model.head_dropout = to_double("model.head_dropout", v); }},
      {"model.graph", [](const RunConfig& c) { return to_string(c.model.graph); },
       [](RunConfig& c, const std::string& v) { c.model.graph = parse_graph_mode(trim(v)); }},
      {"model.text_transformer", [](const RunConfig& c) { return std::string(c.model.text_transformer ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.model.text_transformer = to_bool("model.text_transformer", v); }},
      {"model.alpha_squared", [](const RunConfig& c) { return std::string(c.model.alpha_squared ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.model.alpha_squared = to_bool("model.alpha_squared", v); }},

      {"balance.enabled", [](const RunConfig& c) { return std::string(c.model.balance.enabled ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.model.balance.enabled = to_bool("balance.enabled", v); }},
      {"balance.q_base", [](const RunConfig& c) { return fmt(c.model.balance.q_base); },
       [](RunConfig& c, const std::string& v) { c.model.balance.q_base = to_double("balance.q_base", v); }},
      {"balance.lambda", [](const RunConfig& c) { return fmt(c.model.balance.lambda_scale); },
       [](RunConfig& c, const std::string& v) { c.model.balance.lambda_scale = to_double("balance.lambda", v); }},
      {"balance.p_exe", [](const RunConfig& c) { return fmt(c.model.balance.p_exe); },
       [](RunConfig& c, const std::string& v) { c.model.balance.p_exe = to_double("balance.p_exe", v); }},
      {"balance.epsilon", [](const RunConfig& c) { return fmt(c.model.balance.epsilon); },
       [](RunConfig& c, const std::string& v) { c.model.balance.epsilon = to_double("balance.epsilon", v); }},
      {"balance.warmup", [](const RunConfig& c) { return std::to_string(c.model.balance.warmup_epochs); },
       [](RunConfig& c, const std::string& v) {
         c.model.balance.warmup_epochs = static_cast<int>(to_int("balance.warmup", v));
       }},

      {"train.lr", [](const RunConfig& c) { return fmt(c.lr); },
       [](RunConfig& c, const std::string& v) { c.lr = to_double("train.lr", v); }},
      {"train.weight_decay", [](const RunConfig& c) { return fmt(c.weight_decay); },
       [](RunConfig& c, const std::string& v) { c.weight_decay = to_double("train.weight_decay", v); }},
      {"train.beta1", [](const RunConfig& c) { return fmt(c.beta1); },
       [](RunConfig& c, const std::string& v) { c.beta1 = to_double("train.beta1", v); }},
      {"train.beta2", [](const RunConfig& c) { return fmt(c.beta2); },
       [](RunConfig& c, const std::string& v) { c.beta2 = to_double("train.beta2", v); }},
      {"train.adam_eps", [](const RunConfig& c) { return fmt(c.adam_eps); },
       [](RunConfig& c, const std::string& v) { c.adam_eps = to_double("train.adam_eps", v); }},
      {"train.batch_size", [](const RunConfig& c) { return std::to_string(c.batch_size); },
       [](RunConfig& c, const std::string& v) { c.batch_size = to_size("train.batch_size", v); }},
      {"train.epochs", [](const RunConfig& c) { return std::to_string(c.epochs); },
       [](RunConfig& c, const std::string& v) { c.epochs = static_cast<int>(to_int("train.epochs", v)); },
       false},

      {"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
       [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_size("seed", v)); }},
      {"precision", [](const RunConfig& c) { return c.precision; },
       [](RunConfig& c, const std::string& v) { c.precision = trim(v); }},
      {"threads", [](const RunConfig& c) { return std::to_string(c.threads); },
       [](RunConfig& c, const std::string& v) { c.threads = static_cast<int>(to_int("threads", v)); },
       false},
      {"eval.train", [](const RunConfig& c) { return std::string(c.eval_train ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.eval_train = to_bool("eval.train", v); }, false},
      {"eval.noise", [](const RunConfig& c) { return join(c.noise_grid); },
       [](RunConfig& c, const std::string& v) { c.noise_grid = to_doubles("eval.noise", v); }, false},
  };
  return f;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

RunConfig::RunConfig() {
  model.d_h = 512;
  synth.dims = {1024, 342, 1582};
  model.input_dims = synth.dims;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string k = trim(key);
  if (k == "synth.preset") {
    const auto seed = synth.seed;
    synth = synth_preset(trim(value));
    synth.seed = seed;
    return;
  }
  for (const auto& f : fields())
    if (k == f.key) {
      f.put(*this, value);
      return;
    }
  throw ConfigError("unknown config key '" + k + "'");
}

void RunConfig::set_assignment(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
  set(kv.substr(0, eq), kv.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    if (trim(line).empty()) continue;
    try {
      set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::validate() const {
  model.validate();
  if (uses_synth()) synth.validate();
  if (lr <= 0.0) throw ConfigError("train.lr must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("adam betas must be in [0,1)");
  if (adam_eps <= 0.0) throw ConfigError("train.adam_eps must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (precision != "f32" && precision != "f64")
    throw ConfigError("precision must be f32 or f64, got '" + precision + "'");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  double s = 0.0;
  for (double x : split) {
    if (x < 0.0) throw ConfigError("data.split entries must be >= 0");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError("data.split must sum to 1");
  if (split[0] <= 0.0) throw ConfigError("data.split needs a non-empty train part");
  for (double x : noise_grid)
    if (x < 0.0) throw ConfigError("eval.noise entries must be >= 0");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::string s;
  for (const auto& f : fields())
    if (f.hashed) s += std::string(f.key) + "=" + f.get(*this) + "\n";
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(s);
  return os.str();
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
    if (!trim(line).empty()) c.set_assignment(line);
  return c;
}

RunConfig run_preset(const std::string& name) {
  RunConfig c;
  if (name == "standard") return c;
  if (name != "desk" && name != "tiny")
    throw ConfigError("unknown run preset '" + name + "' (standard, desk, tiny)");
  c.synth = synth_preset(name == "tiny" ? "tiny" : "bench");
  c.model.input_dims = c.synth.dims;
  c.model.d_h = 32;
  c.model.d_r = 8;
  // text goes straight to the graph, as for the full-size model without the
  // optional text transformer
  c.model.text_transformer = false;
  c.lr = 1e-3;
  c.weight_decay = 5e-5;
  c.batch_size = 16;
  c.epochs = 60;
  c.model.balance.warmup_epochs = 36;
  if (name == "tiny") {
    c.split = {1.0, 0.0, 0.0};
    c.epochs = 200;
  }
  return c;
}

DataSplits load_data(RunConfig& cfg) {
  DataSplits d;
  if (cfg.uses_synth()) {
    cfg.synth.validate();
    auto all = generate(cfg.synth);
    const std::size_t n = all.size();
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.split[0] * static_cast<double>(n)));
    const auto n_val = std::min(
        n - n_train, static_cast<std::size_t>(std::llround(cfg.split[1] * static_cast<double>(n))));
    d.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    d.val.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                 all.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    d.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), all.end());
    cfg.model.input_dims = cfg.synth.dims;
    cfg.model.classes = cfg.synth.classes;
    cfg.model.n_speakers = cfg.synth.n_speakers;
  } else {
    d.train = read_jsonl(cfg.train_path);
    if (!cfg.val_path.empty()) d.val = read_jsonl(cfg.val_path);
    if (!cfg.test_path.empty()) d.test = read_jsonl(cfg.test_path);
    if (d.train.empty()) throw DataError(cfg.train_path + ": no dialogues");
    for (std::size_t m = 0; m < kModalities; ++m) {
      if (d.train[0].features[m].empty())
        throw DataError(cfg.train_path + ": first dialogue has no utterances");
      cfg.model.input_dims[m] = d.train[0].features[m][0].size();
    }
  }
  if (d.train.empty()) throw DataError("training split is empty");
  const auto check = [&](const std::vector<Dialogue>& ds, const std::string& what) {
    for (const auto& x : ds) {
      try {
        validate(x, cfg.model.input_dims, static_cast<int>(cfg.model.n_speakers),
                 static_cast<int>(cfg.model.classes));
      } catch (const std::exception& e) {
        throw DataError(what + " dialogue '" + x.id + "': " + e.what());
      }
    }
  };
  check(d.train, cfg.uses_synth() ? "train" : cfg.train_path);
  check(d.val, cfg.uses_synth() ? "val" : cfg.val_path);
  check(d.test, cfg.uses_synth() ? "test" : cfg.test_path);
  return d;
}

std::filesystem::path output_root() {
  if (const char* env = std::getenv("DGERC_OUTPUT_ROOT"); env != nullptr && *env != '\0')
    return std::filesystem::path(env);
  return std::filesystem::path("runs");
}

}  // namespace dgerc
