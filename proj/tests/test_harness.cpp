#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hyperg/error.hpp"
#include "hyperg/harness.hpp"

using namespace hyperg;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.dim = 8;
  c.heads = 2;
  c.layers = 1;
  c.vocab_size = 512;
  c.seed = 11;
  c.init = PhlInit::Random;
  return c;
}

std::vector<ExperimentRecord> corpus(std::size_t n, TaskKind task = TaskKind::Tfv) {
  auto spec = CorpusSpec::standard();
  spec.count = n;
  spec.task = task;
  return gen_corpus(spec);
}

}  // namespace

TEST_CASE("run_pipeline is deterministic and honors the ablations") {
  HyperGModel m(tiny_model());
  RuleAugmenter rules;
  auto recs = corpus(5);
  auto a = run_pipeline(recs[0], m, rules);
  auto b = run_pipeline(recs[0], m, rules);
  CHECK(a.logits == b.logits);
  CHECK(a.prediction.answer == b.prediction.answer);

  auto no_phl = with_ablation(m, true, false);
  auto c = run_pipeline(recs[0], no_phl, rules);
  CHECK(c.logits != a.logits);
  for (std::size_t i = 0; i < 8; ++i) CHECK(c.table_embed[i] == 0.0);
  CHECK_THROWS_AS(run_pipeline(recs[0], no_phl, rules, true), Error);

  auto no_inq = with_ablation(m, false, true);
  CHECK(run_pipeline(recs[0], no_inq, rules).logits != a.logits);
}

TEST_CASE("pipeline completes on a fully sparse table") {
  HyperGModel m(tiny_model());
  RuleAugmenter rules;
  ExperimentRecord r;
  r.id = "sparse";
  r.table = make_table("", {"a", "b"}, {{"N/A", "none"}, {"-", ""}});
  r.inquiry = "the a of x is 1";
  r.gold_label = "no";
  auto res = run_pipeline(r, m, rules);
  CHECK(res.logits.size() == 2);
  for (double x : res.logits) CHECK(std::isfinite(x));
}

TEST_CASE("shuffle experiment") {
  HyperGModel m(tiny_model());
  RuleAugmenter rules;
  auto recs = corpus(30);
  auto rep = shuffle_experiment(recs, m, {0.0, 0.5, 1.0}, ShuffleAxis::Rows, 3, rules);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.rows[0].shuffled_tables == 0);
  CHECK(rep.rows[0].metrics.to_json() == rep.baseline.to_json());
  CHECK(rep.rows[2].shuffled_tables == 30);
  CHECK(rep.total_flips == 0);
  CHECK(rep.accuracy_variance == 0.0);

  auto cols = shuffle_experiment(corpus(20, TaskKind::TqaLite), m, {0.2, 0.4, 0.6, 0.8, 1.0}, ShuffleAxis::Cols, 4, rules);
  CHECK(cols.total_flips == 0);
  CHECK(cols.accuracy_variance == 0.0);

  auto csv = rep.to_csv();
  CHECK(csv.rfind("axis,ratio,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(rep.to_json().at("ratios").size() == 3);

  CHECK_THROWS_AS(shuffle_experiment({}, m, {0.5}, ShuffleAxis::Rows, 1, rules), Error);
  CHECK_THROWS_AS(shuffle_experiment(recs, m, {1.5}, ShuffleAxis::Rows, 1, rules), Error);
  CHECK(parse_axis("cols") == ShuffleAxis::Cols);
  CHECK_THROWS_AS(parse_axis("diagonal"), Error);
}

TEST_CASE("attention dump") {
  auto cfg = tiny_model();
  cfg.layers = 2;
  HyperGModel m(cfg);
  RuleAugmenter rules;
  auto recs = corpus(3);
  const auto path = (std::filesystem::temp_directory_path() / "hyperg_attention.json").string();
  auto j = dump_attention(recs[1], m, rules, path);
  std::ifstream in(path);
  auto back = nlohmann::json::parse(in);
  CHECK(back == j);
  CHECK(back.at("record") == recs[1].id);
  CHECK(back.at("layers").size() == 2);
  for (const auto& layer : back.at("layers")) {
    for (auto& [node, list] : layer.at("beta").items()) {
      double s = 0.0;
      for (const auto& e : list) s += e.at("weight").get<double>();
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
    for (auto& [edge, list] : layer.at("alpha").items()) {
      double s = 0.0;
      for (const auto& e : list) s += e.at("weight").get<double>();
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
  CHECK(back.at("smoothness").contains("table_smoother"));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(dump_attention(recs[1], m, rules, "/nonexistent/dir/a.json"), Error);
}

TEST_CASE("full model gradient check") {
  auto report = full_model_grad_check(1);
  CHECK(report.max_rel_error < 1e-4);
  CHECK(report.per_tensor.size() > 10);
}
