#include "hyperg/model.hpp"

#include "hyperg/error.hpp"
#include "hyperg/ops.hpp"

namespace hyperg {

std::string task_name(TaskKind task) { return task == TaskKind::Tfv ? "tfv" : "tqa"; }

TaskKind parse_task(const std::string& name) {
  if (name == "tfv") return TaskKind::Tfv;
  if (name == "tqa" || name == "tqa_lite") return TaskKind::TqaLite;
  throw Error(Errc::InvalidConfig, "unknown task '" + name + "'");
}

EmbeddingConfig ModelConfig::embedding() const {
  EmbeddingConfig e;
  e.dim = dim;
  e.dropout_rate = dropout_rate;
  e.vocab_size = vocab_size;
  e.seed = seed;
  e.dtype = dtype;
  return e;
}

PhlConfig ModelConfig::phl() const {
  PhlConfig p;
  p.heads = heads;
  p.layers = layers;
  p.dim = dim;
  p.ff_hidden = ff_hidden;
  p.leaky_slope = leaky_slope;
  p.dropout_rate = dropout_rate;
  p.init = init;
  p.seed = seed;
  p.dtype = dtype;
  return p;
}

PromptTemplate ModelConfig::prompt() const {
  return prompt_template.empty() ? PromptTemplate::standard() : PromptTemplate(prompt_template);
}

void ModelConfig::validate() const {
  embedding().validate();
  phl().validate();
  (void)prompt();
}

nlohmann::json ModelConfig::to_json() const {
  return {{"dim", dim},
          {"heads", heads},
          {"layers", layers},
          {"token_dim", token_dim},
          {"ff_hidden", ff_hidden},
          {"vocab_size", vocab_size},
          {"dropout_rate", dropout_rate},
          {"leaky_slope", leaky_slope},
          {"init", phl_init_name(init)},
          {"no_phl", no_phl},
          {"no_inquiry", no_inquiry},
          {"prompt_template", prompt_template},
          {"seed", seed},
          {"dtype", dtype_name(dtype)}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.dim = j.value("dim", c.dim);
    c.heads = j.value("heads", c.heads);
    c.layers = j.value("layers", c.layers);
    c.token_dim = j.value("token_dim", c.token_dim);
    c.ff_hidden = j.value("ff_hidden", c.ff_hidden);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    if (j.contains("init")) c.init = parse_phl_init(j.at("init").get<std::string>());
    c.no_phl = j.value("no_phl", c.no_phl);
    c.no_inquiry = j.value("no_inquiry", c.no_inquiry);
    c.prompt_template = j.value("prompt_template", c.prompt_template);
    c.seed = j.value("seed", c.seed);
    if (j.contains("dtype")) c.dtype = parse_dtype(j.at("dtype").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidConfig, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

HyperGModel::HyperGModel(const ModelConfig& config)
    : config_((config.validate(), config)),
      embedder_(config.embedding()),
      phl_(config.phl()),
      template_(config.prompt()) {
  const std::size_t d = config_.dim, dt = config_.token_dimension();
  auto rng = Rng::stream(config_.seed, "integration.init");
  projector_ = Projector::init(d, dt, rng, config_.dtype);
  tfv_ = TfvHead::init(d, dt, rng, config_.dtype);
  tqa_ = TqaHead::init(d, dt, rng, config_.dtype);
  std::vector<double> c(d);
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);
  inquiry_const_ = Tensor::parameter({1, d}, std::move(c), config_.dtype);
}

std::vector<NamedTensor> HyperGModel::parameters() const {
  auto out = embedder_.parameters();
  for (auto& p : phl_.parameters()) out.push_back(std::move(p));
  projector_.collect("projector", out);
  tfv_.collect("head.tfv", out);
  tqa_.collect("head.tqa", out);
  out.push_back({"inquiry_constant", inquiry_const_});
  return out;
}

bool HyperGModel::uses_module_lr(const std::string& name) { return name.rfind("head.", 0) != 0; }

PreparedInput prepare_input(const Table& table, const std::string& inquiry, const Augmenter& augmenter,
                            const PromptTemplate& tpl) {
  PreparedInput in;
  in.table = table;
  in.augmented = augment(table, augmenter);
  in.graph = build_hypergraph(in.augmented);
  in.inquiry = inquiry;
  in.prompt = render_prompt(tpl, table, inquiry);
  return in;
}

ForwardOutput model_forward(Tape& tape, const HyperGModel& model, const PreparedInput& input, TaskKind task,
                            Mode mode, Rng* rng, bool log_attention) {
  const auto& cfg = model.config();
  const auto& emb = model.embedder();
  ForwardOutput out;
  auto nodes = emb.embed_texts(tape, input.graph.node_text(), mode, rng);
  auto edges = emb.embed_texts(tape, input.graph.edge_text(), mode, rng);
  Tensor inquiry = cfg.no_inquiry ? model.inquiry_constant() : emb.embed_text(tape, input.inquiry, mode, rng);

  if (cfg.no_phl) {
    if (log_attention) throw Error(Errc::LogNotEnabled, "attention is not computed with PHL disabled");
    out.table_embed = phl_bypass(tape, input.graph, edges);
    out.node_h = nodes;
  } else {
    auto phl = phl_forward(tape, model.phl(), input.graph, nodes, edges, inquiry, mode, rng, log_attention);
    out.table_embed = phl.table_embed;
    out.node_h = phl.node_h;
    out.attention = std::move(phl.log);
  }

  if (task == TaskKind::Tfv) {
    out.token = model.projector().forward(tape, out.table_embed);
    auto prompt = prompt_tokens(tape, emb, input.prompt, out.table_position);
    out.sequence = splice(tape, prompt, out.token, out.table_position);
    out.tfv_logits = model.tfv_head().forward(tape, out.sequence, inquiry);
  } else {
    out.tqa_scores = model.tqa_head().forward(tape, out.node_h, inquiry);
  }
  return out;
}

}  // namespace hyperg
