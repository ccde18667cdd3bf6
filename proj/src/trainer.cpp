#include "dgerc/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dgerc/kernels.hpp"
#include "dgerc/log.hpp"

namespace dgerc {

namespace {

enum Stream : std::uint64_t { kInit = 0, kShuffle = 1, kDropout = 2, kModality = 3 };

std::string num(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

void append(const std::filesystem::path& path, const std::string& header, const std::string& row) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write " + path.string());
  if (fresh && !header.empty()) out << header << "\n";
  out << row << "\n";
}

std::vector<Dialogue> gather(const std::vector<Dialogue>& data, const std::vector<std::size_t>& idx,
                             std::size_t begin, std::size_t end) {
  std::vector<Dialogue> out;
  out.reserve(end - begin);
  for (std::size_t k = begin; k < end; ++k) out.push_back(data[idx[k]]);
  return out;
}

}  // namespace

template <std::floating_point T>
EvalReport evaluate_model(const Model<T>& model, const std::vector<Dialogue>& data,
                          std::size_t batch_size) {
  Confusion cm(model.config().classes);
  for (std::size_t b = 0; b < data.size(); b += batch_size) {
    const std::size_t e = std::min(data.size(), b + batch_size);
    const auto batch = collate<T>(std::span<const Dialogue>(data.data() + b, e - b),
                                  model.config().n_speakers);
    Tape<T> tape;
    StepOptions<T> opt;
    const auto r = model.forward(tape, batch, opt);
    accumulate(cm, r.fused.logits.value(), batch.labels, batch.mask);
  }
  return evaluate(cm);
}

template <std::floating_point T>
Trainer<T>::Trainer(RunConfig cfg, DataSplits data, std::filesystem::path run_dir)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      dir_(std::move(run_dir)),
      model_((cfg_.validate(), cfg_.model), Rng::derive(cfg_.seed, kInit)),
      adam_(model_.params(), AdamOptions{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps,
                                         cfg_.weight_decay}),
      shuffle_rng_(Rng::derive(cfg_.seed, kShuffle)),
      dropout_rng_(Rng::derive(cfg_.seed, kDropout)),
      modality_rng_(Rng::derive(cfg_.seed, kModality)) {
  if (cfg_.precision != (std::is_same_v<T, float> ? "f32" : "f64"))
    throw ConfigError("trainer precision does not match config precision " + cfg_.precision);
  if (data_.train.empty()) throw DataError("training split is empty");
  kernels::set_num_threads(cfg_.threads);
  if (!dir_.empty()) {
    std::filesystem::create_directories(dir_);
    std::ofstream(dir_ / "config.txt") << cfg_.to_text();
  }
}

template <std::floating_point T>
void Trainer<T>::resume(const std::filesystem::path& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.config_hash != cfg_.hash())
    throw ConfigError(path.string() + ": config hash " + ck.config_hash + " does not match " +
                      cfg_.hash());
  if (ck.precision != cfg_.precision)
    throw ConfigError(path.string() + ": checkpoint precision " + ck.precision);
  restore(model_.params(), ck.params);
  restore_optimizer(adam_, model_.params(), ck);
  shuffle_rng_.restore(ck.rng.at("shuffle"));
  dropout_rng_.restore(ck.rng.at("dropout"));
  modality_rng_.restore(ck.rng.at("modality"));
  start_epoch_ = ck.epoch;
  best_epoch_ = ck.best_epoch;
  best_score_ = ck.best_score;
  best_ = ck.best;
  if (!dir_.empty())
    for (const char* f : {"metrics.jsonl", "losses.csv", "balance.csv", "lambda.csv"})
      truncate_log(dir_ / f, start_epoch_);
}

template <std::floating_point T>
std::filesystem::path Trainer<T>::last_good() const {
  if (dir_.empty() || !std::filesystem::exists(dir_ / "last.ckpt")) return {};
  return dir_ / "last.ckpt";
}

template <std::floating_point T>
EpochStats Trainer<T>::train_epoch(int epoch) {
  EpochStats s;
  s.epoch = epoch;
  std::vector<std::size_t> order(data_.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng_.shuffle(order);
  for (std::size_t b = 0; b < order.size(); b += cfg_.batch_size) {
    const auto dialogues = gather(data_.train, order, b, std::min(order.size(), b + cfg_.batch_size));
    const auto batch = collate<T>(dialogues, cfg_.model.n_speakers);
    Tape<T> tape;
    StepOptions<T> opt;
    opt.training = true;
    opt.epoch = epoch;
    opt.dropout_rng = &dropout_rng_;
    opt.modality_rng = &modality_rng_;
    auto r = model_.forward(tape, batch, opt);
    ++s.batches;
    if (r.balance_active) {
      ++s.balance_active;
      if (r.balance.applied) ++s.balance_applied;
      for (std::size_t m = 0; m < kModalities; ++m) {
        s.p[m] += r.balance.p[m];
        s.q[m] += r.balance.q[m];
      }
      s.theta += r.balance.applied ? r.balance.theta : 0.0;
    }
    last_lambdas_.clear();
    for (const auto& [name, v] : r.lambdas)
      last_lambdas_.emplace_back(name, static_cast<double>(v.value()[0]));
    if (!r.loss) continue;
    const double loss = r.loss->value();
    if (!std::isfinite(loss)) {
      const auto last = last_good();
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(s.batches - 1) + "; last good checkpoint: " +
                              (last.empty() ? std::string("none") : last.string()),
                          last);
    }
    tape.backward(r.loss->total);
    for (const auto* p : model_.params().all())
      for (T g : p->grad.values())
        if (!std::isfinite(g)) {
          const auto last = last_good();
          throw TrainingError("non-finite gradient for " + p->name + " at epoch " +
                                  std::to_string(epoch) + "; last good checkpoint: " +
                                  (last.empty() ? std::string("none") : last.string()),
                              last);
        }
    adam_.step();
    model_.params().zero_grad();
    ++s.scored;
    s.total += loss;
    s.fusion += r.loss->fusion;
    for (std::size_t m = 0; m < kModalities; ++m) s.unimodal[m] += r.loss->unimodal[m];
  }
  if (s.scored > 0) {
    const double n = static_cast<double>(s.scored);
    s.total /= n;
    s.fusion /= n;
    for (auto& u : s.unimodal) u /= n;
  }
  if (s.balance_active > 0) {
    const double n = static_cast<double>(s.balance_active);
    for (std::size_t m = 0; m < kModalities; ++m) {
      s.p[m] /= n;
      s.q[m] /= n;
    }
    if (s.balance_applied > 0) s.theta /= static_cast<double>(s.balance_applied);
  }
  return s;
}

template <std::floating_point T>
Checkpoint Trainer<T>::make_checkpoint(int completed) const {
  Checkpoint ck;
  ck.epoch = completed;
  ck.config_hash = cfg_.hash();
  ck.config_text = cfg_.to_text();
  ck.precision = cfg_.precision;
  ck.rng = {{"shuffle", shuffle_rng_.state()},
            {"dropout", dropout_rng_.state()},
            {"modality", modality_rng_.state()}};
  ck.best_epoch = best_epoch_;
  ck.best_score = best_score_;
  ck.params = snapshot(model_.params());
  store_optimizer(ck, model_.params(), adam_);
  ck.best = best_;
  return ck;
}

template <std::floating_point T>
void Trainer<T>::write_logs(const EpochStats& s) {
  if (dir_.empty()) return;
  append(dir_ / "losses.csv", "epoch,batches,scored,total,fusion,text,visual,audio",
         std::to_string(s.epoch) + "," + std::to_string(s.batches) + "," + std::to_string(s.scored) +
             "," + num(s.total) + "," + num(s.fusion) + "," + num(s.unimodal[0]) + "," +
             num(s.unimodal[1]) + "," + num(s.unimodal[2]));
  append(dir_ / "balance.csv", "epoch,active_batches,applied_batches,p_t,p_v,p_a,q_t,q_v,q_a,theta",
         std::to_string(s.epoch) + "," + std::to_string(s.balance_active) + "," +
             std::to_string(s.balance_applied) + "," + num(s.p[0]) + "," + num(s.p[1]) + "," +
             num(s.p[2]) + "," + num(s.q[0]) + "," + num(s.q[1]) + "," + num(s.q[2]) + "," +
             num(s.theta));
  for (const auto& [name, v] : last_lambdas_)
    append(dir_ / "lambda.csv", "epoch,layer,lambda_full",
           std::to_string(s.epoch) + "," + name + "," + num(v));
  if (s.train) append(dir_ / "metrics.jsonl", "", metrics_json(*s.train, s.epoch, "train"));
  if (s.val) append(dir_ / "metrics.jsonl", "", metrics_json(*s.val, s.epoch, "val"));
}

template <std::floating_point T>
TrainSummary Trainer<T>::run() {
  TrainSummary out;
  const bool has_val = !data_.val.empty();
  for (int epoch = start_epoch_; epoch < cfg_.epochs; ++epoch) {
    EpochStats s = train_epoch(epoch);
    if (cfg_.eval_train) s.train = evaluate_model(model_, data_.train, cfg_.batch_size);
    if (has_val) {
      s.val = evaluate_model(model_, data_.val, cfg_.batch_size);
      if (s.val->wa_f1 > best_score_) {
        best_score_ = s.val->wa_f1;
        best_epoch_ = epoch;
        best_ = snapshot(model_.params());
      }
    } else {
      best_epoch_ = epoch;
      best_.clear();
    }
    write_logs(s);
    if (!dir_.empty()) save_checkpoint(dir_ / "last.ckpt", make_checkpoint(epoch + 1));
    log::debug("epoch " + std::to_string(epoch) + " loss " + num(s.total) +
               (s.val ? " val wa_f1 " + num(s.val->wa_f1) : std::string()));
    out.history.push_back(std::move(s));
    ++out.epochs_run;
  }
  if (!best_.empty()) restore(model_.params(), best_);
  out.best_epoch = best_epoch_;
  out.best_val_f1 = best_score_;
  out.train = evaluate_model(model_, data_.train, cfg_.batch_size);
  out.has_val = has_val;
  out.has_test = !data_.test.empty();
  if (out.has_val) out.val = evaluate_model(model_, data_.val, cfg_.batch_size);
  if (out.has_test) out.test = evaluate_model(model_, data_.test, cfg_.batch_size);
  if (!dir_.empty()) {
    nlohmann::json j;
    j["config_hash"] = cfg_.hash();
    j["epochs"] = cfg_.epochs;
    j["best_epoch"] = out.best_epoch;
    j["train"] = nlohmann::json::parse(metrics_json(out.train, out.best_epoch, "train"));
    if (out.has_val) j["val"] = nlohmann::json::parse(metrics_json(out.val, out.best_epoch, "val"));
    if (out.has_test)
      j["test"] = nlohmann::json::parse(metrics_json(out.test, out.best_epoch, "test"));
    std::ofstream(dir_ / "summary.json") << j.dump(2) << "\n";
  }
  return out;
}

template <std::floating_point T>
std::vector<NoiseRow> noise_grid_eval(const Model<T>& model, const std::vector<Dialogue>& data,
                                      const std::vector<double>& grid, std::size_t batch_size,
                                      std::uint64_t noise_seed) {
  std::vector<NoiseRow> rows;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    Rng rng(Rng::derive(noise_seed, k));
    const auto noisy = inject_noise(data, {grid[k], grid[k], grid[k]}, rng);
    rows.push_back({grid[k], evaluate_model(model, noisy, batch_size)});
  }
  return rows;
}

void truncate_log(const std::filesystem::path& path, int epochs) {
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> keep;
  std::string line;
  bool first = true;
  const bool jsonl = path.extension() == ".jsonl";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!jsonl && first) {
      keep.push_back(line);
      first = false;
      continue;
    }
    first = false;
    int e = 0;
    if (jsonl) {
      e = nlohmann::json::parse(line).at("epoch").get<int>();
    } else {
      e = std::stoi(line.substr(0, line.find(',')));
    }
    if (e < epochs) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << "\n";
}

template EvalReport evaluate_model<float>(const Model<float>&, const std::vector<Dialogue>&, std::size_t);
template EvalReport evaluate_model<double>(const Model<double>&, const std::vector<Dialogue>&, std::size_t);
template std::vector<NoiseRow> noise_grid_eval<float>(const Model<float>&, const std::vector<Dialogue>&,
                                                      const std::vector<double>&, std::size_t, std::uint64_t);
template std::vector<NoiseRow> noise_grid_eval<double>(const Model<double>&, const std::vector<Dialogue>&,
                                                       const std::vector<double>&, std::size_t, std::uint64_t);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace dgerc
