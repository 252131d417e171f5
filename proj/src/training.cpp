#include "hyperg/training.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "hyperg/error.hpp"
#include "hyperg/ops.hpp"

namespace hyperg {

Tensor sequence_nll(Tape& tape, const std::vector<Tensor>& logit_steps, const std::vector<std::size_t>& targets) {
  if (logit_steps.size() != targets.size() || logit_steps.empty()) {
    throw Error(Errc::LengthMismatch, "sequence_nll needs equal, nonzero step counts");
  }
  Tensor total = ops::cross_entropy(tape, logit_steps[0], targets[0]);
  for (std::size_t t = 1; t < targets.size(); ++t) total = ops::add(tape, total, ops::cross_entropy(tape, logit_steps[t], targets[t]));
  return total;
}

void adam_step(std::vector<Tensor>& params, AdamState& state, const std::vector<double>& lrs, double beta1,
               double beta2, double eps) {
  if (lrs.size() != params.size()) throw Error(Errc::ShapeMismatch, "one learning rate per parameter expected");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw Error(Errc::ShapeMismatch, "optimizer state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.size() != m.size()) throw Error(Errc::ShapeMismatch, "gradient size differs from optimizer state");
    auto w = p.mutable_values();
    const bool f32 = p.dtype() == Dtype::F32;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (g[j] == 0.0 && m[j] == 0.0 && v[j] == 0.0) continue;
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      const double update = lrs[i] * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
      w[j] -= update;
      if (f32) w[j] = static_cast<double>(static_cast<float>(w[j]));
    }
  }
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error(Errc::InvalidConfig, "lr must be positive");
  if (!(module_lr_scale > 0.0)) throw Error(Errc::InvalidConfig, "module_lr_scale must be positive");
  if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
  if (max_epochs < 1) throw Error(Errc::InvalidConfig, "max_epochs must be >= 1");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw Error(Errc::InvalidConfig, "val_fraction must be in [0, 1)");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"module_lr_scale", module_lr_scale},
          {"batch_size", batch_size},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"val_fraction", val_fraction},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.module_lr_scale = j.value("module_lr_scale", c.module_lr_scale);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json Metrics::to_json() const {
  return {{"accuracy", accuracy},
          {"weighted_precision", weighted_precision},
          {"weighted_recall", weighted_recall},
          {"weighted_f1", weighted_f1},
          {"denotation_accuracy", denotation_accuracy},
          {"confusion", confusion},
          {"count", count}};
}

Metrics metrics_from_confusion(const std::vector<std::vector<std::size_t>>& confusion) {
  Metrics m;
  m.confusion = confusion;
  const std::size_t C = confusion.size();
  std::size_t total = 0, correct = 0;
  std::vector<std::size_t> support(C, 0), predicted(C, 0);
  for (std::size_t g = 0; g < C; ++g) {
    if (confusion[g].size() != C) throw Error(Errc::ShapeMismatch, "confusion matrix must be square");
    for (std::size_t p = 0; p < C; ++p) {
      total += confusion[g][p];
      support[g] += confusion[g][p];
      predicted[p] += confusion[g][p];
    }
    correct += confusion[g][g];
  }
  m.count = total;
  if (total == 0) return m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  for (std::size_t c = 0; c < C; ++c) {
    const double tp = static_cast<double>(confusion[c][c]);
    const double p = predicted[c] ? tp / static_cast<double>(predicted[c]) : 0.0;
    const double r = support[c] ? tp / static_cast<double>(support[c]) : 0.0;
    const double f = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    const double w = static_cast<double>(support[c]) / static_cast<double>(total);
    m.weighted_precision += w * p;
    m.weighted_recall += w * r;
    m.weighted_f1 += w * f;
  }
  return m;
}

bool EarlyStopping::update(double value) {
  ++epoch_;
  improved_ = value > best_;
  if (improved_) {
    best_ = value;
    best_epoch_ = epoch_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_ && patience_ > 0;
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch}, {"train_loss", train_loss}, {"val", val.to_json()}};
}

nlohmann::json TrainResult::to_json() const {
  nlohmann::json h = nlohmann::json::array();
  for (const auto& e : history) h.push_back(e.to_json());
  return {{"history", h},
          {"best_epoch", best_epoch},
          {"stopped_early", stopped_early},
          {"initial_loss", initial_loss},
          {"loss_warning", loss_warning}};
}

std::vector<PreparedInput> prepare_corpus(const HyperGModel& model, const std::vector<ExperimentRecord>& records,
                                          const Augmenter& augmenter) {
  std::vector<PreparedInput> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(prepare_input(r.table, r.inquiry, augmenter, model.prompt_template()));
  return out;
}

void split_validation(const std::vector<ExperimentRecord>& records, double fraction, std::uint64_t seed,
                      std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx) {
  train_idx.clear();
  val_idx.clear();
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto key = records[i].task == TaskKind::Tfv ? records[i].gold_label : std::string("cell");
    by_class[key].push_back(i);
  }
  auto rng = Rng::stream(seed, "train.split");
  for (auto& [key, idx] : by_class) {
    rng.shuffle(idx);
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
}

namespace {

std::size_t gold_index(const ExperimentRecord& r) {
  if (r.task == TaskKind::Tfv) return r.label();
  return r.gold_cell->row * r.table.col_count() + r.gold_cell->col;
}

Tensor loss_of(Tape& tape, const ForwardOutput& out, const ExperimentRecord& r) {
  const auto& logits = r.task == TaskKind::Tfv ? out.tfv_logits : out.tqa_scores;
  return sequence_nll(tape, {logits}, {gold_index(r)});
}

Prediction predict(const HyperGModel& model, const PreparedInput& in, const ExperimentRecord& r) {
  Tape tape(false);
  auto out = model_forward(tape, model, in, r.task, Mode::Eval, nullptr);
  Prediction p;
  p.id = r.id;
  if (r.task == TaskKind::Tfv) {
    const auto v = out.tfv_logits.values();
    p.predicted = v[1] > v[0] ? 1 : 0;
    p.answer = p.predicted ? "yes" : "no";
    p.correct = p.answer == r.gold_label;
  } else {
    p.predicted = select_answer_cell(out.tqa_scores.values(), in.graph.node_text());
    p.answer = in.graph.node_text()[p.predicted];
    p.correct = p.answer == r.gold_cell->text;
  }
  return p;
}

std::vector<std::vector<double>> snapshot(const std::vector<NamedTensor>& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void restore(std::vector<NamedTensor>& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_values();
    std::copy(values[i].begin(), values[i].end(), w.begin());
  }
}

}  // namespace

double example_loss(const HyperGModel& model, const PreparedInput& input, const ExperimentRecord& record) {
  Tape tape(false);
  auto out = model_forward(tape, model, input, record.task, Mode::Eval, nullptr);
  return loss_of(tape, out, record).item();
}

EvalResult evaluate_prepared(const HyperGModel& model, const std::vector<ExperimentRecord>& records,
                             const std::vector<PreparedInput>& inputs) {
  if (records.empty()) throw Error(Errc::EmptyCorpus, "nothing to evaluate");
  EvalResult res;
  std::vector<std::vector<std::size_t>> confusion(2, std::vector<std::size_t>(2, 0));
  std::size_t correct = 0;
  bool tfv = true;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto p = predict(model, inputs[i], records[i]);
    if (records[i].task == TaskKind::Tfv) {
      confusion[records[i].label()][p.predicted] += 1;
    } else {
      tfv = false;
    }
    correct += p.correct ? 1 : 0;
    res.predictions.push_back(std::move(p));
  }
  if (tfv) {
    res.metrics = metrics_from_confusion(confusion);
  } else {
    res.metrics.count = records.size();
    res.metrics.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  }
  res.metrics.denotation_accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  return res;
}

EvalResult evaluate(const HyperGModel& model, const std::vector<ExperimentRecord>& records) {
  if (records.empty()) throw Error(Errc::EmptyCorpus, "nothing to evaluate");
  RuleAugmenter rules;
  return evaluate_prepared(model, records, prepare_corpus(model, records, rules));
}

Trainer make_trainer(const HyperGModel& model, std::uint64_t seed) {
  (void)model;
  return {AdamState{}, Rng::stream(seed, "train.shuffle"), Rng::stream(seed, "train.dropout")};
}

TrainResult train(HyperGModel& model, const std::vector<ExperimentRecord>& records, const TrainConfig& cfg,
                  Trainer* trainer, const TrainLog& log) {
  cfg.validate();
  if (records.empty()) throw Error(Errc::EmptyCorpus, "training corpus is empty");
  Trainer local = make_trainer(model, cfg.seed);
  Trainer& tr = trainer ? *trainer : local;

  RuleAugmenter rules;
  const auto inputs = prepare_corpus(model, records, rules);
  std::vector<std::size_t> train_idx, val_idx;
  split_validation(records, cfg.val_fraction, cfg.seed, train_idx, val_idx);
  if (train_idx.empty()) throw Error(Errc::EmptyCorpus, "no training examples after the validation split");
  if (val_idx.empty()) val_idx = train_idx;

  std::vector<ExperimentRecord> val_records;
  std::vector<PreparedInput> val_inputs;
  for (auto i : val_idx) {
    val_records.push_back(records[i]);
    val_inputs.push_back(inputs[i]);
  }

  auto named = model.parameters();
  std::vector<Tensor> params;
  std::vector<double> lrs;
  for (const auto& p : named) {
    params.push_back(p.tensor);
    lrs.push_back(HyperGModel::uses_module_lr(p.name) ? cfg.lr * cfg.module_lr_scale : cfg.lr);
  }

  auto mean_eval_loss = [&] {
    double s = 0.0;
    for (auto i : train_idx) s += example_loss(model, inputs[i], records[i]);
    return s / static_cast<double>(train_idx.size());
  };

  TrainResult result;
  result.initial_loss = mean_eval_loss();
  EarlyStopping stopper(cfg.patience);
  auto best = snapshot(named);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto order = train_idx;
    tr.shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& p : params) p.zero_grad();
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const auto i = order[b];
        Tape tape;
        auto out = model_forward(tape, model, inputs[i], records[i].task, Mode::Train, &tr.dropout_rng);
        auto loss = loss_of(tape, out, records[i]);
        loss_sum += loss.item();
        tape.backward(ops::scale(tape, loss, inv));
      }
      adam_step(params, tr.adam, lrs);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val = evaluate_prepared(model, val_records, val_inputs).metrics;
    if (epoch == 1) result.loss_warning = !(mean_eval_loss() < result.initial_loss);
    const bool stop = stopper.update(rec.val.accuracy);
    if (stopper.improved()) best = snapshot(named);
    result.history.push_back(rec);
    if (log) log(rec);
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  restore(named, best);
  result.best_epoch = stopper.best_epoch();
  return result;
}

std::uint64_t config_hash(const ModelConfig& config) { return fnv1a64(config.to_json().dump()); }

namespace {

void put_le(std::string& buf, std::uint64_t bits, std::size_t bytes) {
  for (std::size_t b = 0; b < bytes; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

std::uint64_t get_le(const std::string& buf, std::size_t offset, std::size_t bytes) {
  std::uint64_t v = 0;
  for (std::size_t b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[offset + b])) << (8 * b);
  return v;
}

nlohmann::json append_tensor(std::string& bin, const std::string& name, const Shape& shape, Dtype dtype,
                             std::span<const double> values) {
  const std::size_t offset = bin.size();
  for (double v : values) {
    if (dtype == Dtype::F32) put_le(bin, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    else put_le(bin, std::bit_cast<std::uint64_t>(v), 8);
  }
  return {{"name", name}, {"shape", shape}, {"dtype", dtype_name(dtype)}, {"offset", offset}, {"bytes", bin.size() - offset}};
}

std::vector<double> read_tensor(const std::string& bin, const nlohmann::json& entry, std::size_t expect) {
  const auto dtype = parse_dtype(entry.at("dtype").get<std::string>());
  const auto offset = entry.at("offset").get<std::size_t>();
  const std::size_t width = dtype == Dtype::F32 ? 4 : 8;
  const auto shape = entry.at("shape").get<Shape>();
  if (shape_numel(shape) != expect || offset + expect * width > bin.size()) {
    throw Error(Errc::InvalidConfig, "checkpoint tensor " + entry.at("name").get<std::string>() + " has the wrong size");
  }
  std::vector<double> out(expect);
  for (std::size_t i = 0; i < expect; ++i) {
    const auto bits = get_le(bin, offset + i * width, width);
    out[i] = dtype == Dtype::F32 ? static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(bits)))
                                 : std::bit_cast<double>(bits);
  }
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void save_checkpoint(const std::string& dir, const HyperGModel& model, const Trainer* trainer,
                     const TrainConfig* train_config) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir);
  std::string bin;
  nlohmann::json tensors = nlohmann::json::array();
  const auto named = model.parameters();
  for (const auto& p : named) tensors.push_back(append_tensor(bin, p.name, p.tensor.shape(), p.tensor.dtype(), p.tensor.values()));
  nlohmann::json manifest = {{"format", "hyperg-checkpoint"},
                             {"version", 1},
                             {"config", model.config().to_json()},
                             {"config_hash", config_hash(model.config())}};
  if (trainer && !trainer->adam.m.empty()) {
    for (std::size_t i = 0; i < named.size(); ++i) {
      tensors.push_back(append_tensor(bin, "adam.m." + named[i].name, named[i].tensor.shape(), Dtype::F64, trainer->adam.m[i]));
      tensors.push_back(append_tensor(bin, "adam.v." + named[i].name, named[i].tensor.shape(), Dtype::F64, trainer->adam.v[i]));
    }
  }
  if (trainer) {
    manifest["optimizer"] = {{"step", trainer->adam.step}, {"has_moments", !trainer->adam.m.empty()}};
    manifest["rng"] = {{"shuffle", trainer->shuffle_rng.serialize()}, {"dropout", trainer->dropout_rng.serialize()}};
  }
  if (train_config) manifest["train_config"] = train_config->to_json();
  manifest["tensors"] = std::move(tensors);

  std::ofstream mf(fs::path(dir) / "model.manifest.json", std::ios::binary);
  std::ofstream bf(fs::path(dir) / "model.bin", std::ios::binary);
  if (!mf || !bf) throw Error(Errc::IoError, "cannot write checkpoint in " + dir);
  mf << manifest.dump(2) << "\n";
  bf.write(bin.data(), static_cast<std::streamsize>(bin.size()));
  if (!mf || !bf) throw Error(Errc::IoError, "checkpoint write failed in " + dir);
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(fs::path(dir) / "model.manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::IoError, std::string("bad checkpoint manifest: ") + e.what());
  }
  const std::string bin = read_file(fs::path(dir) / "model.bin");
  try {
    auto config = ModelConfig::from_json(manifest.at("config"));
    const auto hash = manifest.at("config_hash").get<std::uint64_t>();
    if (hash != config_hash(config)) throw Error(Errc::InvalidConfig, "checkpoint config hash mismatch");
    LoadedCheckpoint ck{HyperGModel(config), {}, TrainConfig{}, hash};
    if (manifest.contains("train_config")) ck.train_config = TrainConfig::from_json(manifest["train_config"]);
    ck.trainer = make_trainer(ck.model, ck.train_config.seed);

    std::map<std::string, nlohmann::json> entries;
    for (const auto& e : manifest.at("tensors")) entries[e.at("name").get<std::string>()] = e;
    auto named = ck.model.parameters();
    for (auto& p : named) {
      auto it = entries.find(p.name);
      if (it == entries.end()) throw Error(Errc::InvalidConfig, "checkpoint lacks " + p.name);
      auto values = read_tensor(bin, it->second, p.tensor.numel());
      auto w = p.tensor.mutable_values();
      std::copy(values.begin(), values.end(), w.begin());
    }
    if (manifest.contains("optimizer")) {
      ck.trainer.adam.step = manifest["optimizer"].at("step").get<std::uint64_t>();
      if (manifest["optimizer"].value("has_moments", false)) {
        for (auto& p : named) {
          ck.trainer.adam.m.push_back(read_tensor(bin, entries.at("adam.m." + p.name), p.tensor.numel()));
          ck.trainer.adam.v.push_back(read_tensor(bin, entries.at("adam.v." + p.name), p.tensor.numel()));
        }
      }
    }
    if (manifest.contains("rng")) {
      ck.trainer.shuffle_rng.deserialize(manifest["rng"].at("shuffle").get<std::string>());
      ck.trainer.dropout_rng.deserialize(manifest["rng"].at("dropout").get<std::string>());
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("bad checkpoint: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw Error(Errc::InvalidConfig, std::string("bad checkpoint: ") + e.what());
  }
}

}  // namespace hyperg
