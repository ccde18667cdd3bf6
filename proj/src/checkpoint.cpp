#include "dgerc/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace dgerc {

namespace {

constexpr char kMagic[8] = {'D', 'G', 'E', 'R', 'C', 'K', 'P', '1'};

nlohmann::json describe(const std::vector<NamedTensor>& ts) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : ts) out.push_back({{"name", t.name}, {"shape", t.shape}});
  return out;
}

std::size_t elements(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::vector<NamedTensor> read_section(const nlohmann::json& desc, std::ifstream& in,
                                      const std::string& path) {
  std::vector<NamedTensor> out;
  for (const auto& d : desc) {
    NamedTensor t;
    t.name = d.at("name").get<std::string>();
    t.shape = d.at("shape").get<Shape>();
    t.data.resize(elements(t.shape));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw DataError(path + ": truncated tensor data at " + t.name);
    out.push_back(std::move(t));
  }
  return out;
}

template <std::floating_point T>
NamedTensor to_named(const std::string& name, const Tensor<T>& t) {
  NamedTensor n{name, t.shape(), {}};
  n.data.assign(t.values().begin(), t.values().end());
  return n;
}

template <std::floating_point T>
Tensor<T> from_named(const NamedTensor& n) {
  std::vector<T> v(n.data.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(n.data[i]);
  return Tensor<T>(n.shape, std::move(v));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json h;
  h["epoch"] = ck.epoch;
  h["config_hash"] = ck.config_hash;
  h["config"] = ck.config_text;
  h["precision"] = ck.precision;
  h["adam_steps"] = ck.adam_steps;
  h["rng"] = ck.rng;
  h["best_epoch"] = ck.best_epoch;
  h["best_score"] = ck.best_score;
  h["params"] = describe(ck.params);
  h["adam_m"] = describe(ck.adam_m);
  h["adam_v"] = describe(ck.adam_v);
  h["best"] = describe(ck.best);
  const std::string header = h.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto* sec : {&ck.params, &ck.adam_m, &ck.adam_v, &ck.best})
      for (const auto& t : *sec)
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + p);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw DataError(p + ": not a checkpoint (bad magic)");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1ULL << 32)) throw DataError(p + ": corrupt header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError(p + ": truncated header");
  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(header);
    ck.epoch = h.at("epoch").get<int>();
    ck.config_hash = h.at("config_hash").get<std::string>();
    ck.config_text = h.at("config").get<std::string>();
    ck.precision = h.at("precision").get<std::string>();
    ck.adam_steps = h.at("adam_steps").get<std::uint64_t>();
    ck.rng = h.at("rng").get<std::map<std::string, std::string>>();
    ck.best_epoch = h.at("best_epoch").get<int>();
    ck.best_score = h.at("best_score").get<double>();
    ck.params = read_section(h.at("params"), in, p);
    ck.adam_m = read_section(h.at("adam_m"), in, p);
    ck.adam_v = read_section(h.at("adam_v"), in, p);
    ck.best = read_section(h.at("best"), in, p);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p + ": bad checkpoint header: " + e.what());
  }
  return ck;
}

template <std::floating_point T>
std::vector<NamedTensor> snapshot(const ParamStore<T>& store) {
  std::vector<NamedTensor> out;
  for (const auto* p : store.all()) out.push_back(to_named(p->name, p->value));
  return out;
}

template <std::floating_point T>
void restore(ParamStore<T>& store, const std::vector<NamedTensor>& tensors) {
  auto params = store.all();
  if (params.size() != tensors.size())
    throw ConfigError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(params.size()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->name != tensors[k].name)
      throw ConfigError("checkpoint tensor '" + tensors[k].name + "' where model expects '" +
                        params[k]->name + "'");
    if (params[k]->value.shape() != tensors[k].shape)
      throw ConfigError("shape mismatch for " + params[k]->name + ": checkpoint " +
                        shape_str(tensors[k].shape) + ", model " + shape_str(params[k]->value.shape()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = from_named<T>(tensors[k]);
}

template <std::floating_point T>
void store_optimizer(Checkpoint& ck, const ParamStore<T>& store, const Adam<T>& adam) {
  const auto names = store.names();
  ck.adam_steps = adam.steps();
  ck.adam_m.clear();
  ck.adam_v.clear();
  for (std::size_t k = 0; k < names.size(); ++k) {
    ck.adam_m.push_back(to_named(names[k], adam.first_moments()[k]));
    ck.adam_v.push_back(to_named(names[k], adam.second_moments()[k]));
  }
}

template <std::floating_point T>
void restore_optimizer(Adam<T>& adam, const ParamStore<T>& store, const Checkpoint& ck) {
  const auto names = store.names();
  if (ck.adam_m.size() != names.size() || ck.adam_v.size() != names.size())
    throw ConfigError("checkpoint optimizer state does not match the model");
  std::vector<Tensor<T>> m, v;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (ck.adam_m[k].name != names[k] || ck.adam_v[k].name != names[k])
      throw ConfigError("checkpoint optimizer tensor order differs at " + names[k]);
    m.push_back(from_named<T>(ck.adam_m[k]));
    v.push_back(from_named<T>(ck.adam_v[k]));
  }
  adam.restore(ck.adam_steps, std::move(m), std::move(v));
}

#define DGERC_CK(T)                                                                   \
  template std::vector<NamedTensor> snapshot(const ParamStore<T>&);                   \
  template void restore(ParamStore<T>&, const std::vector<NamedTensor>&);             \
  template void store_optimizer(Checkpoint&, const ParamStore<T>&, const Adam<T>&);   \
  template void restore_optimizer(Adam<T>&, const ParamStore<T>&, const Checkpoint&);
DGERC_CK(float)
DGERC_CK(double)
#undef DGERC_CK

}  // namespace dgerc
