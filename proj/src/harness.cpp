#include "hyperg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hyperg/error.hpp"

namespace hyperg {

PipelineResult run_pipeline(const ExperimentRecord& record, const HyperGModel& model, const Augmenter& augmenter,
                            bool dump_attention) {
  auto input = prepare_input(record.table, record.inquiry, augmenter, model.prompt_template());
  Tape tape(false);
  auto out = model_forward(tape, model, input, record.task, Mode::Eval, nullptr, dump_attention);
  PipelineResult res;
  res.prediction.id = record.id;
  const auto& scores = record.task == TaskKind::Tfv ? out.tfv_logits : out.tqa_scores;
  res.logits.assign(scores.values().begin(), scores.values().end());
  res.table_embed.assign(out.table_embed.values().begin(), out.table_embed.values().end());
  if (record.task == TaskKind::Tfv) {
    res.prediction.predicted = res.logits[1] > res.logits[0] ? 1 : 0;
    res.prediction.answer = res.prediction.predicted ? "yes" : "no";
    res.prediction.correct = res.prediction.answer == record.gold_label;
  } else {
    res.prediction.predicted = select_answer_cell(res.logits, input.graph.node_text());
    res.prediction.answer = input.graph.node_text()[res.prediction.predicted];
    res.prediction.correct = record.gold_cell && res.prediction.answer == record.gold_cell->text;
  }
  if (dump_attention) res.attention = attention_to_json(*out.attention, input.graph);
  return res;
}

ShuffleAxis parse_axis(const std::string& name) {
  if (name == "rows") return ShuffleAxis::Rows;
  if (name == "cols" || name == "columns") return ShuffleAxis::Cols;
  throw Error(Errc::InvalidConfig, "axis must be rows or cols");
}

std::string axis_name(ShuffleAxis axis) { return axis == ShuffleAxis::Rows ? "rows" : "cols"; }

std::string ShuffleReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "axis,ratio,shuffled_tables,accuracy,weighted_precision,weighted_recall,weighted_f1,flips\n";
  for (const auto& r : rows) {
    os << axis_name(axis) << ',' << r.ratio << ',' << r.shuffled_tables << ',' << r.metrics.accuracy << ','
       << r.metrics.weighted_precision << ',' << r.metrics.weighted_recall << ',' << r.metrics.weighted_f1 << ','
       << r.flips << '\n';
  }
  return os.str();
}

nlohmann::json ShuffleReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const auto& r : rows) {
    rs.push_back({{"ratio", r.ratio}, {"shuffled_tables", r.shuffled_tables}, {"metrics", r.metrics.to_json()}, {"flips", r.flips}});
  }
  return {{"axis", axis_name(axis)},
          {"baseline", baseline.to_json()},
          {"ratios", rs},
          {"accuracy_variance", accuracy_variance},
          {"total_flips", total_flips}};
}

namespace {

ExperimentRecord permuted_record(const ExperimentRecord& r, ShuffleAxis axis, Rng& rng) {
  const std::size_t M = r.table.row_count(), N = r.table.col_count();
  std::vector<std::size_t> rp(M), cp(N);
  for (std::size_t i = 0; i < M; ++i) rp[i] = i;
  for (std::size_t i = 0; i < N; ++i) cp[i] = i;
  if (axis == ShuffleAxis::Rows) rp = rng.permutation(M);
  else cp = rng.permutation(N);
  ExperimentRecord out = r;
  out.table = permute_table(r.table, rp, cp);
  if (out.gold_cell) {
    const auto row = static_cast<std::size_t>(std::find(rp.begin(), rp.end(), r.gold_cell->row) - rp.begin());
    const auto col = static_cast<std::size_t>(std::find(cp.begin(), cp.end(), r.gold_cell->col) - cp.begin());
    out.gold_cell = GoldCell{row, col, r.gold_cell->text};
  }
  return out;
}

}  // namespace

ShuffleReport shuffle_experiment(const std::vector<ExperimentRecord>& corpus, const HyperGModel& model,
                                 const std::vector<double>& ratios, ShuffleAxis axis, std::uint64_t seed,
                                 const Augmenter& augmenter) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "shuffle experiment needs records");
  ShuffleReport report;
  report.axis = axis;
  const auto base = evaluate_prepared(model, corpus, prepare_corpus(model, corpus, augmenter));
  report.baseline = base.metrics;
  std::vector<double> accs;
  for (double ratio : ratios) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(Errc::InvalidConfig, "ratios must lie in [0, 1]");
    auto rng = Rng::stream(seed, "shuffle." + axis_name(axis) + "." + std::to_string(ratio));
    auto order = rng.permutation(corpus.size());
    const auto n = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(corpus.size())));
    std::vector<bool> chosen(corpus.size(), false);
    for (std::size_t i = 0; i < n; ++i) chosen[order[i]] = true;
    std::vector<ExperimentRecord> shuffled;
    shuffled.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      shuffled.push_back(chosen[i] ? permuted_record(corpus[i], axis, rng) : corpus[i]);
    }
    const auto res = evaluate_prepared(model, shuffled, prepare_corpus(model, shuffled, augmenter));
    ShuffleRow row;
    row.ratio = ratio;
    row.shuffled_tables = n;
    row.metrics = res.metrics;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (res.predictions[i].answer != base.predictions[i].answer) ++row.flips;
    }
    report.total_flips += row.flips;
    accs.push_back(row.metrics.accuracy);
    report.rows.push_back(std::move(row));
  }
  if (!accs.empty()) {
    // shifted by the first value so equal accuracies give exactly 0
    double mean = 0.0;
    for (double a : accs) mean += a - accs[0];
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - accs[0] - mean) * (a - accs[0] - mean);
    report.accuracy_variance = var / static_cast<double>(accs.size());
  }
  return report;
}

SmoothnessStats attention_smoothness(const nlohmann::json& attention) {
  SmoothnessStats s;
  const auto& layers = attention.at("layers");
  if (layers.empty()) return s;
  const auto& avg = layers.back().at("head_avg");
  auto variance = [](const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - mean) * (x - mean);
    return v / static_cast<double>(xs.size());
  };
  const auto table = avg.at("node_table").get<std::vector<double>>();
  std::vector<double> own_column;
  for (const auto& row : avg.at("node_column")) {
    double w = 0.0;
    for (const auto& x : row) w = std::max(w, x.get<double>());
    own_column.push_back(w);
  }
  s.table_edge_variance = variance(table);
  s.column_edge_variance = variance(own_column);
  s.table_smoother = s.table_edge_variance < s.column_edge_variance;
  return s;
}

nlohmann::json dump_attention(const ExperimentRecord& record, const HyperGModel& model, const Augmenter& augmenter,
                              const std::string& out_path) {
  auto res = run_pipeline(record, model, augmenter, true);
  auto j = *res.attention;
  const auto stats = attention_smoothness(j);
  j["record"] = record.id;
  j["smoothness"] = {{"table_edge_variance", stats.table_edge_variance},
                     {"column_edge_variance", stats.column_edge_variance},
                     {"table_smoother", stats.table_smoother}};
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + out_path);
  out << j.dump(2) << "\n";
  if (!out) throw Error(Errc::IoError, "write failed for " + out_path);
  return j;
}

HyperGModel with_ablation(const HyperGModel& model, bool no_phl, bool no_inquiry) {
  auto cfg = model.config();
  cfg.no_phl = no_phl;
  cfg.no_inquiry = no_inquiry;
  HyperGModel out(cfg);
  const auto src = model.parameters();
  auto dst = out.parameters();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    auto w = dst[i].tensor.mutable_values();
    std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(), w.begin());
  }
  return out;
}

GradCheckReport full_model_grad_check(std::uint64_t seed, double h) {
  ModelConfig cfg;
  cfg.dim = 4;
  cfg.heads = 2;
  cfg.layers = 1;
  cfg.vocab_size = 64;
  cfg.seed = seed;
  cfg.init = PhlInit::Random;
  HyperGModel model(cfg);
  const Table table = make_table("scores", {"name", "score"}, {{"alice", "12"}, {"bob", "N/A"}});
  RuleAugmenter rules;
  const auto input = prepare_input(table, "the score of alice is 12", rules, model.prompt_template());
  auto loss = [&](Tape& tape) {
    auto out = model_forward(tape, model, input, TaskKind::Tfv, Mode::Eval, nullptr);
    return sequence_nll(tape, {out.tfv_logits}, {1});
  };
  std::vector<NamedTensor> params;
  for (auto& p : model.parameters()) {
    if (p.name.rfind("head.tqa", 0) == 0 || p.name == "inquiry_constant") continue;
    params.push_back(p);
  }
  return grad_check(loss, params, h);
}

}  // namespace hyperg
