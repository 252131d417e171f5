#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hyperg/corpus.hpp"
#include "hyperg/model.hpp"
#include "hyperg/tensor.hpp"
#include "json.hpp"

namespace hyperg {

/// Sum of per-step cross entropies. Throws Errc::LengthMismatch.
Tensor sequence_nll(Tape& tape, const std::vector<Tensor>& logit_steps, const std::vector<std::size_t>& targets);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One Adam update; `lrs` holds the learning rate of each parameter.
/// Throws Errc::ShapeMismatch when a gradient or moment has the wrong size.
void adam_step(std::vector<Tensor>& params, AdamState& state, const std::vector<double>& lrs, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

struct TrainConfig {
  double lr = 5e-5;
  double module_lr_scale = 20.0;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  double val_fraction = 0.1;
  std::uint64_t seed = 7;

  /// Throws Errc::InvalidConfig.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct Metrics {
  double accuracy = 0.0;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  double denotation_accuracy = 0.0;  // TqaLite only
  std::size_t count = 0;

  nlohmann::json to_json() const;
};

/// Weighted precision/recall/F1 from a square confusion matrix. Per-class
/// scores with a zero denominator count as 0.
Metrics metrics_from_confusion(const std::vector<std::vector<std::size_t>>& confusion);

/// Stops once the monitored value has failed to improve for `patience`
/// consecutive epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Records one epoch; returns true when training should stop.
  bool update(double value);
  bool improved() const { return improved_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t stale_ = 0;
  std::size_t best_epoch_ = 0;
  double best_ = -1.0;
  bool improved_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  Metrics val;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  /// Set when the first epoch's mean loss did not fall below the loss of
  /// the untrained model on the same data.
  bool loss_warning = false;
  double initial_loss = 0.0;

  nlohmann::json to_json() const;
};

/// Optimizer and shuffling state carried across train() calls and saved in checkpoints.
struct Trainer {
  AdamState adam;
  Rng shuffle_rng;
  Rng dropout_rng;
};

struct Prediction {
  std::string id;
  std::size_t predicted = 0;  // Tfv class or selected node id
  std::string answer;         // "yes"/"no" or cell text
  bool correct = false;
};

struct EvalResult {
  Metrics metrics;
  std::vector<Prediction> predictions;
};

using TrainLog = std::function<void(const EpochRecord&)>;

/// Prepares inputs once with the rule-based augmenter.
std::vector<PreparedInput> prepare_corpus(const HyperGModel& model, const std::vector<ExperimentRecord>& records,
                                          const Augmenter& augmenter);

/// Label-stratified split: `fraction` of each class (seeded) goes to validation.
void split_validation(const std::vector<ExperimentRecord>& records, double fraction, std::uint64_t seed,
                      std::vector<std::size_t>& train_idx, std::vector<std::size_t>& val_idx);

/// Trains in place and restores the best-validation parameters before
/// returning. Throws Errc::EmptyCorpus.
TrainResult train(HyperGModel& model, const std::vector<ExperimentRecord>& records, const TrainConfig& cfg,
                  Trainer* trainer = nullptr, const TrainLog& log = {});

/// Eval-mode loss of one example.
double example_loss(const HyperGModel& model, const PreparedInput& input, const ExperimentRecord& record);

/// Throws Errc::EmptyCorpus.
EvalResult evaluate(const HyperGModel& model, const std::vector<ExperimentRecord>& records);
EvalResult evaluate_prepared(const HyperGModel& model, const std::vector<ExperimentRecord>& records,
                             const std::vector<PreparedInput>& inputs);

Trainer make_trainer(const HyperGModel& model, std::uint64_t seed);

/// Writes <dir>/model.manifest.json and <dir>/model.bin.
void save_checkpoint(const std::string& dir, const HyperGModel& model, const Trainer* trainer = nullptr,
                     const TrainConfig* train_config = nullptr);

struct LoadedCheckpoint {
  HyperGModel model;
  Trainer trainer;
  TrainConfig train_config;
  std::uint64_t config_hash = 0;
};

/// Throws Errc::IoError or Errc::InvalidConfig (hash or shape mismatch).
LoadedCheckpoint load_checkpoint(const std::string& dir);

std::uint64_t config_hash(const ModelConfig& config);

}  // namespace hyperg
