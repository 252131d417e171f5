#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hyperg/corpus.hpp"
#include "hyperg/grad_check.hpp"
#include "hyperg/model.hpp"
#include "hyperg/training.hpp"
#include "json.hpp"

namespace hyperg {

struct PipelineResult {
  Prediction prediction;
  std::vector<double> logits;  // Tfv logits or TqaLite scores
  std::vector<double> table_embed;
  std::optional<nlohmann::json> attention;
};

/// augment -> build_hypergraph -> embed -> PHL -> project -> splice -> head, in Eval mode.
PipelineResult run_pipeline(const ExperimentRecord& record, const HyperGModel& model, const Augmenter& augmenter,
                            bool dump_attention = false);

enum class ShuffleAxis { Rows, Cols };

ShuffleAxis parse_axis(const std::string& name);
std::string axis_name(ShuffleAxis axis);

struct ShuffleRow {
  double ratio = 0.0;
  std::size_t shuffled_tables = 0;
  Metrics metrics;
  std::size_t flips = 0;  // predictions that differ from the unshuffled run
};

struct ShuffleReport {
  ShuffleAxis axis = ShuffleAxis::Rows;
  Metrics baseline;
  std::vector<ShuffleRow> rows;
  double accuracy_variance = 0.0;  // population variance across ratios
  std::size_t total_flips = 0;

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// For each ratio, round(ratio * n) tables (a seeded sample) have their rows
/// or columns fully permuted with a seeded permutation; everything is then
/// re-evaluated. Throws Errc::EmptyCorpus.
ShuffleReport shuffle_experiment(const std::vector<ExperimentRecord>& corpus, const HyperGModel& model,
                                 const std::vector<double>& ratios, ShuffleAxis axis, std::uint64_t seed,
                                 const Augmenter& augmenter);

/// Head-averaged beta statistics: variance of the node -> table-edge
/// weights versus the node -> column-edge weights (last layer).
struct SmoothnessStats {
  double table_edge_variance = 0.0;
  double column_edge_variance = 0.0;
  bool table_smoother = false;
};

SmoothnessStats attention_smoothness(const nlohmann::json& attention);

/// Writes the attention dump of one record to `out_path`. Throws Errc::IoError.
nlohmann::json dump_attention(const ExperimentRecord& record, const HyperGModel& model, const Augmenter& augmenter,
                              const std::string& out_path);

/// Copy of `model` (parameter values included) with the ablation switches replaced.
HyperGModel with_ablation(const HyperGModel& model, bool no_phl, bool no_inquiry);

/// Finite-difference check of the full TFV loss on a fixed 2 x 2 table
/// (d = 4, K = 2, L = 1, f64, Eval mode, small vocabulary) over every
/// parameter tensor the loss touches.
GradCheckReport full_model_grad_check(std::uint64_t seed, double h = 1e-5);

}  // namespace hyperg
