#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "hyperg/corpus.hpp"
#include "hyperg/error.hpp"
#include "hyperg/harness.hpp"
#include "hyperg/hypergraph.hpp"
#include "hyperg/model.hpp"
#include "hyperg/table.hpp"
#include "hyperg/training.hpp"
#include "json.hpp"

using namespace hyperg;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(Errc::IoError, "write failed for " + path);
}

json read_json(const std::string& path) {
  auto j = json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw Error(Errc::MalformedJson, path);
  return j;
}

std::unique_ptr<Augmenter> make_augmenter(const std::string& kind) {
  if (kind == "rule") return std::make_unique<RuleAugmenter>();
  if (kind == "remote") {
    auto cfg = RemoteAugmenterConfig::from_env();
    if (cfg.url.empty()) throw Error(Errc::InvalidConfig, "--augmenter remote needs HYPERG_AUGMENT_URL");
    return std::make_unique<RemoteAugmenter>(cfg);
  }
  throw Error(Errc::InvalidConfig, "--augmenter must be rule or remote");
}

struct Ablation {
  bool no_phl = false;
  bool no_inquiry = false;
};

void add_ablation(CLI::App* cmd, Ablation& a) {
  cmd->add_flag("--no-phl", a.no_phl, "Bypass hypergraph learning (table token from the caption edge only)");
  cmd->add_flag("--no-inquiry", a.no_inquiry, "Replace the inquiry embedding with a learned constant");
}

HyperGModel load_model(const std::string& ckpt, const Ablation& a) {
  auto loaded = load_checkpoint(ckpt);
  const auto& cfg = loaded.model.config();
  if (a.no_phl == cfg.no_phl && a.no_inquiry == cfg.no_inquiry) return std::move(loaded.model);
  return with_ablation(loaded.model, a.no_phl || cfg.no_phl, a.no_inquiry || cfg.no_inquiry);
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error(Errc::InvalidConfig, "bad ratio '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HyperG: hypergraph table reasoning toolkit"};
  app.require_subcommand(1);

  // gen-data
  std::string spec_path, out_path;
  std::uint64_t seed = 7;
  std::size_t count = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus (JSONL)");
  gen->add_option("--spec", spec_path, "Corpus spec JSON (defaults when omitted)");
  gen->add_option("--out", out_path, "Output JSONL")->required();
  gen->add_option("--count", count, "Override the record count");
  auto* gen_seed = gen->add_option("--seed", seed, "Override the spec seed");

  // build-graph
  std::string table_path, caption, augmenter_kind = "rule";
  auto* build = app.add_subcommand("build-graph", "Augment a table and write its hypergraph JSON");
  build->add_option("--table", table_path, "Table JSON or CSV")->required();
  build->add_option("--caption", caption, "Caption for CSV input");
  build->add_option("--out", out_path, "Output JSON (stdout when omitted)");
  build->add_option("--augmenter", augmenter_kind, "rule or remote")->check(CLI::IsMember({"rule", "remote"}));

  // train
  std::string corpus_path, config_path, template_path, ckpt_dir;
  Ablation ablation;
  auto* trn = app.add_subcommand("train", "Train a model");
  trn->add_option("--corpus", corpus_path, "Training corpus JSONL")->required();
  trn->add_option("--config", config_path, "JSON with optional \"model\" and \"train\" objects");
  trn->add_option("--out", ckpt_dir, "Checkpoint directory")->required();
  trn->add_option("--template", template_path, "Prompt template file");
  auto* trn_seed = trn->add_option("--seed", seed, "Seed for initialization, split and shuffling");
  add_ablation(trn, ablation);

  // eval
  std::string ckpt;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  ev->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  ev->add_option("--out", out_path, "Metrics JSON (stdout when omitted)");
  ev->add_option("--augmenter", augmenter_kind, "rule or remote")->check(CLI::IsMember({"rule", "remote"}));
  add_ablation(ev, ablation);

  // shuffle-eval
  std::string axis = "rows", ratios = "0.2,0.4,0.6,0.8,1.0";
  auto* sh = app.add_subcommand("shuffle-eval", "Order-invariance experiment");
  sh->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  sh->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  sh->add_option("--axis", axis, "rows or cols")->check(CLI::IsMember({"rows", "cols"}));
  sh->add_option("--ratios", ratios, "Comma-separated sampling ratios");
  sh->add_option("--out", out_path, "Report CSV (stdout when omitted)");
  sh->add_option("--seed", seed, "Shuffle seed");
  sh->add_option("--augmenter", augmenter_kind, "rule or remote")->check(CLI::IsMember({"rule", "remote"}));
  add_ablation(sh, ablation);

  // dump-attention
  std::string record_id;
  auto* da = app.add_subcommand("dump-attention", "Write per-layer attention weights for one record");
  da->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  da->add_option("--ckpt", ckpt, "Checkpoint directory")->required();
  da->add_option("--record", record_id, "Record id")->required();
  da->add_option("--out", out_path, "Output JSON")->required();
  da->add_option("--augmenter", augmenter_kind, "rule or remote")->check(CLI::IsMember({"rule", "remote"}));

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full model gradient");
  gc->add_option("--seed", seed, "Parameter seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      auto spec = spec_path.empty() ? CorpusSpec::standard() : CorpusSpec::from_json(read_json(spec_path));
      if (*gen_seed) spec.seed = seed;
      if (count > 0) spec.count = count;
      auto records = gen_corpus(spec);
      save_corpus(out_path, records);
      std::cerr << "wrote " << records.size() << " records to " << out_path << "\n";
    } else if (build->parsed()) {
      const auto text = read_text(table_path);
      const bool csv = std::filesystem::path(table_path).extension() == ".csv";
      const Table table = csv ? parse_table_csv(text, caption) : parse_table_json(text);
      auto aug = make_augmenter(augmenter_kind);
      const auto graph = build_hypergraph(augment(table, *aug, table.row_count() + table.col_count() + 1));
      write_text(out_path, graph.to_json().dump(2) + "\n");
    } else if (trn->parsed()) {
      json cfg = config_path.empty() ? json::object() : read_json(config_path);
      auto mcfg = ModelConfig::from_json(cfg.value("model", json::object()));
      auto tcfg = TrainConfig::from_json(cfg.value("train", json::object()));
      if (*trn_seed) {
        mcfg.seed = seed;
        tcfg.seed = seed;
      }
      mcfg.no_phl = mcfg.no_phl || ablation.no_phl;
      mcfg.no_inquiry = mcfg.no_inquiry || ablation.no_inquiry;
      if (!template_path.empty()) mcfg.prompt_template = PromptTemplate::load(template_path).text();
      HyperGModel model(mcfg);
      const auto records = load_corpus(corpus_path);
      auto trainer = make_trainer(model, tcfg.seed);
      auto result = train(model, records, tcfg, &trainer, [](const EpochRecord& e) {
        std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " val_acc " << e.val.accuracy << "\n";
      });
      if (result.loss_warning) std::cerr << "warning: loss did not decrease over the first epoch\n";
      save_checkpoint(ckpt_dir, model, &trainer, &tcfg);
      write_text((std::filesystem::path(ckpt_dir) / "history.json").string(), result.to_json().dump(2) + "\n");
    } else if (ev->parsed()) {
      auto model = load_model(ckpt, ablation);
      auto aug = make_augmenter(augmenter_kind);
      const auto records = load_corpus(corpus_path);
      auto res = evaluate_prepared(model, records, prepare_corpus(model, records, *aug));
      json preds = json::array();
      for (const auto& p : res.predictions) preds.push_back({{"id", p.id}, {"answer", p.answer}, {"correct", p.correct}});
      write_text(out_path, json{{"metrics", res.metrics.to_json()}, {"predictions", preds}}.dump(2) + "\n");
    } else if (sh->parsed()) {
      auto model = load_model(ckpt, ablation);
      auto aug = make_augmenter(augmenter_kind);
      const auto records = load_corpus(corpus_path);
      auto report = shuffle_experiment(records, model, parse_ratios(ratios), parse_axis(axis), seed, *aug);
      write_text(out_path, report.to_csv());
      std::cerr << "accuracy variance " << report.accuracy_variance << ", flips " << report.total_flips << "\n";
    } else if (da->parsed()) {
      auto model = load_model(ckpt, {});
      auto aug = make_augmenter(augmenter_kind);
      const auto records = load_corpus(corpus_path);
      auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == record_id; });
      if (it == records.end()) throw Error(Errc::IndexOutOfRange, "no record " + record_id);
      dump_attention(*it, model, *aug, out_path);
    } else if (gc->parsed()) {
      auto report = full_model_grad_check(seed);
      for (const auto& t : report.per_tensor) std::cout << t.name << " " << t.max_rel_error << "\n";
      std::cout << "max_rel_error " << report.max_rel_error << "\n";
      return report.max_rel_error < 1e-4 ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
