#include "hyperg/phl.hpp"

#include <cmath>

#include "hyperg/error.hpp"
#include "hyperg/ops.hpp"

namespace hyperg {

namespace {

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Per-head identity blocks on top of 0.1-scaled uniform noise; `blocks` lists
// the input-row offsets at which each head's d x d identity is placed.
Linear near_identity(std::size_t in, std::size_t heads, std::size_t d, const std::vector<std::size_t>& blocks,
                     double gain, Rng& rng, Dtype dtype) {
  Linear l = Linear::uniform(in, heads * d, rng, dtype);
  auto w = l.weight.mutable_values();
  const std::size_t out = heads * d;
  for (auto& v : w) v *= 0.1;
  for (std::size_t k = 0; k < heads; ++k)
    for (auto off : blocks)
      for (std::size_t i = 0; i < d; ++i) w[(off + i) * out + k * d + i] += gain;
  for (auto& v : l.bias.mutable_values()) v = 0.0;
  l.weight = Tensor::parameter(l.weight.shape(), {w.begin(), w.end()}, dtype);
  return l;
}

// Kd -> d merge that starts as the mean over heads.
Linear head_mean(std::size_t heads, std::size_t d, Rng& rng, Dtype dtype) {
  Linear l = Linear::uniform(heads * d, d, rng, dtype);
  auto w = l.weight.mutable_values();
  for (auto& v : w) v *= 0.1;
  for (std::size_t k = 0; k < heads; ++k)
    for (std::size_t i = 0; i < d; ++i) w[(k * d + i) * d + i] += 1.0 / static_cast<double>(heads);
  for (auto& v : l.bias.mutable_values()) v = 0.0;
  l.weight = Tensor::parameter(l.weight.shape(), {w.begin(), w.end()}, dtype);
  return l;
}

Tensor query_bank_init(std::size_t heads, std::size_t d, Rng& rng, Dtype dtype) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> w(heads * d);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  return Tensor::parameter({heads, d}, std::move(w), dtype);
}

// Heads side by side [n x K*d] -> block over [n*K x d] -> back -> merge.
Tensor block_and_merge(Tape& tape, const Tensor& h, const TransformerBlock& block, const Linear& merge,
                       const PhlConfig& cfg, Mode mode, Rng* rng) {
  const std::size_t n = h.rows(), d = cfg.dim, k = cfg.heads;
  auto rows = ops::reshape(tape, h, {n * k, d});
  auto out = block.forward(tape, rows, cfg.dropout_rate, mode, rng);
  return merge.forward(tape, ops::reshape(tape, out, {n, k * d}));
}

}  // namespace

std::string phl_init_name(PhlInit init) { return init == PhlInit::Random ? "random" : "near_identity"; }

PhlInit parse_phl_init(const std::string& name) {
  if (name == "random") return PhlInit::Random;
  if (name == "near_identity") return PhlInit::NearIdentity;
  throw Error(Errc::InvalidConfig, "unknown PHL init '" + name + "'");
}

void PhlConfig::validate() const {
  if (heads < 1) throw Error(Errc::InvalidConfig, "heads must be >= 1");
  if (layers < 1) throw Error(Errc::InvalidConfig, "layers must be >= 1");
  if (dim < 1) throw Error(Errc::InvalidConfig, "dim must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error(Errc::InvalidConfig, "dropout_rate must be in [0, 1)");
  if (!(leaky_slope >= 0.0)) throw Error(Errc::InvalidConfig, "leaky_slope must be >= 0");
}

PhlModel::PhlModel(const PhlConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.dim, K = config_.heads;
  const Dtype dt = config_.dtype;
  auto rng = Rng::stream(config_.seed, "phl.init");
  const bool ident = config_.init == PhlInit::NearIdentity;
  // Logit scale d^-1/2 split evenly between query and key maps.
  const double qk_gain = std::pow(static_cast<double>(d), -0.25);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    PhlLayerParams p;
    auto& a = p.node_to_edge;
    a.query_bank = query_bank_init(K, d, rng, dt);
    a.key = ident ? near_identity(d, K, d, {0}, 1.0, rng, dt) : Linear::uniform(d, K * d, rng, dt);
    a.value = ident ? near_identity(d, K, d, {0}, 1.0, rng, dt) : Linear::uniform(d, K * d, rng, dt);
    a.block = TransformerBlock::init(d, config_.hidden(), rng, dt);
    a.merge = ident ? head_mean(K, d, rng, dt) : Linear::uniform(K * d, d, rng, dt);

    auto& b = p.edge_to_node;
    b.query = ident ? near_identity(d, K, d, {0}, qk_gain, rng, dt) : Linear::uniform(d, K * d, rng, dt);
    b.key = ident ? near_identity(2 * d, K, d, {0, d}, 0.5 * qk_gain, rng, dt) : Linear::uniform(2 * d, K * d, rng, dt);
    b.value = ident ? near_identity(2 * d, K, d, {0, d}, 0.5, rng, dt) : Linear::uniform(2 * d, K * d, rng, dt);
    b.block = TransformerBlock::init(d, config_.hidden(), rng, dt);
    b.merge = ident ? head_mean(K, d, rng, dt) : Linear::uniform(K * d, d, rng, dt);
    layers_.push_back(std::move(p));
  }
}

std::vector<NamedTensor> PhlModel::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string pre = "phl.layer" + std::to_string(l);
    const auto& a = layers_[l].node_to_edge;
    out.push_back({pre + ".n2e.query_bank", a.query_bank});
    a.key.collect(pre + ".n2e.key", out);
    a.value.collect(pre + ".n2e.value", out);
    a.block.collect(pre + ".n2e.block", out);
    a.merge.collect(pre + ".n2e.merge", out);
    const auto& b = layers_[l].edge_to_node;
    b.query.collect(pre + ".e2n.query", out);
    b.key.collect(pre + ".e2n.key", out);
    b.value.collect(pre + ".e2n.value", out);
    b.block.collect(pre + ".e2n.block", out);
    b.merge.collect(pre + ".e2n.merge", out);
  }
  return out;
}

Tensor node_to_edge(Tape& tape, const NodeToEdgeParams& p, const PhlConfig& cfg, const Tensor& node_h,
                    const Tensor& edge_base, const IncidenceLists& pairs, Mode mode, Rng* rng, LayerAttention* log) {
  const std::size_t d = cfg.dim, K = cfg.heads, E = edge_base.rows();
  if (node_h.rank() != 2 || node_h.cols() != d || edge_base.rank() != 2 || edge_base.cols() != d) {
    throw Error(Errc::ShapeMismatch, "node_to_edge expects [|V| x d] nodes and [|E| x d] edges");
  }
  auto keys = p.key.forward(tape, node_h);
  auto values = p.value.forward(tape, node_h);
  std::vector<Tensor> heads;
  heads.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto key_k = ops::slice_cols(tape, keys, k * d, (k + 1) * d);
    auto q_k = ops::reshape(tape, ops::slice_rows(tape, p.query_bank, k, k + 1), {d, 1});
    auto logits = ops::leaky_relu(tape, ops::reshape(tape, ops::matmul(tape, key_k, q_k), {node_h.rows()}),
                                  cfg.leaky_slope);
    auto weights = ops::segment_softmax(tape, ops::gather_rows(tape, logits, pairs.by_edge_node), pairs.by_edge_edge);
    auto vals = ops::gather_rows(tape, ops::slice_cols(tape, values, k * d, (k + 1) * d), pairs.by_edge_node);
    heads.push_back(ops::segment_weighted_sum(tape, weights, vals, pairs.by_edge_edge, E));
    if (log) {
      log->alpha_logits.push_back(to_vector(logits));
      log->alpha.push_back(to_vector(weights));
    }
  }
  auto h = ops::add_rowwise(tape, ops::concat_cols(tape, heads), p.query_bank);
  auto updated = block_and_merge(tape, h, p.block, p.merge, cfg, mode, rng);
  return ops::concat_cols(tape, {updated, edge_base});
}

Tensor edge_to_node(Tape& tape, const EdgeToNodeParams& p, const PhlConfig& cfg, const Tensor& edge_aug,
                    const Tensor& inquiry, const IncidenceLists& pairs, std::size_t node_count, Mode mode, Rng* rng,
                    LayerAttention* log) {
  const std::size_t d = cfg.dim, K = cfg.heads, E = edge_aug.rows();
  if (edge_aug.rank() != 2 || edge_aug.cols() != 2 * d || inquiry.numel() != d) {
    throw Error(Errc::ShapeMismatch, "edge_to_node expects [|E| x 2d] edges and a d-vector inquiry");
  }
  auto q = p.query.forward(tape, ops::reshape(tape, inquiry, {1, d}));
  auto keys = p.key.forward(tape, edge_aug);
  auto values = p.value.forward(tape, edge_aug);
  std::vector<Tensor> heads;
  heads.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    auto q_k = ops::reshape(tape, ops::slice_cols(tape, q, k * d, (k + 1) * d), {d, 1});
    auto key_k = ops::slice_cols(tape, keys, k * d, (k + 1) * d);
    auto logits = ops::leaky_relu(tape, ops::reshape(tape, ops::matmul(tape, key_k, q_k), {E}), cfg.leaky_slope);
    auto pair_logits = ops::gather_rows(tape, logits, pairs.by_node_edge);
    auto weights = ops::segment_softmax(tape, pair_logits, pairs.by_node_node);
    auto vals = ops::gather_rows(tape, ops::slice_cols(tape, values, k * d, (k + 1) * d), pairs.by_node_edge);
    heads.push_back(ops::segment_weighted_sum(tape, weights, vals, pairs.by_node_node, node_count));
    if (log) {
      log->beta_logits.push_back(to_vector(pair_logits));
      log->beta.push_back(to_vector(weights));
    }
  }
  auto h = ops::add_rowwise(tape, ops::concat_cols(tape, heads), q);
  return block_and_merge(tape, h, p.block, p.merge, cfg, mode, rng);
}

PhlOutput phl_forward(Tape& tape, const PhlModel& model, const SemanticHypergraph& graph, const Tensor& node_embeds,
                      const Tensor& edge_embeds, const Tensor& inquiry, Mode mode, Rng* rng, bool log_attention) {
  const auto& cfg = model.config();
  if (node_embeds.rows() != graph.node_count() || edge_embeds.rows() != graph.edge_count()) {
    throw Error(Errc::ShapeMismatch, "embeddings do not match the hypergraph");
  }
  PhlOutput out;
  const auto pairs = incidence_lists(graph);
  if (log_attention) {
    out.log = AttentionLog{pairs, graph.node_count(), graph.edge_count(), {}};
  }
  Tensor node_h = node_embeds;
  Tensor edge_aug;
  for (const auto& layer : model.layers()) {
    LayerAttention* rec = nullptr;
    if (out.log) rec = &out.log->layers.emplace_back();
    edge_aug = node_to_edge(tape, layer.node_to_edge, cfg, node_h, edge_embeds, pairs, mode, rng, rec);
    node_h = edge_to_node(tape, layer.edge_to_node, cfg, edge_aug, inquiry, pairs, graph.node_count(), mode, rng, rec);
  }
  out.node_h = node_h;
  out.edge_aug = edge_aug;
  out.table_embed = ops::slice_rows(tape, edge_aug, graph.table_edge(), graph.table_edge() + 1);
  return out;
}

Tensor phl_bypass(Tape& tape, const SemanticHypergraph& graph, const Tensor& edge_embeds) {
  const std::size_t d = edge_embeds.cols();
  auto base = ops::slice_rows(tape, edge_embeds, graph.table_edge(), graph.table_edge() + 1);
  return ops::concat_cols(tape, {Tensor::zeros({1, d}, edge_embeds.dtype()), base});
}

const AttentionLog& attention_weights(const PhlOutput& out) {
  if (!out.log) throw Error(Errc::LogNotEnabled, "forward pass ran without attention logging");
  return *out.log;
}

nlohmann::json attention_to_json(const AttentionLog& log, const SemanticHypergraph& graph) {
  using nlohmann::json;
  const auto& P = log.pairs;
  const std::size_t M = graph.rows(), N = graph.cols(), V = log.node_count;
  json layers = json::array();
  for (const auto& layer : log.layers) {
    const std::size_t K = layer.alpha.size();
    const std::size_t nnz = P.by_edge_node.size();
    std::vector<double> alpha_avg(nnz, 0.0), beta_avg(nnz, 0.0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < nnz; ++i) {
        alpha_avg[i] += layer.alpha[k][i] / static_cast<double>(K);
        beta_avg[i] += layer.beta[k][i] / static_cast<double>(K);
      }
    auto alpha_map = [&](const std::vector<double>& w) {
      json m = json::object();
      for (std::size_t i = 0; i < nnz; ++i)
        m[std::to_string(P.by_edge_edge[i])].push_back({{"node", P.by_edge_node[i]}, {"weight", w[i]}});
      return m;
    };
    auto beta_map = [&](const std::vector<double>& w) {
      json m = json::object();
      for (std::size_t i = 0; i < nnz; ++i)
        m[std::to_string(P.by_node_node[i])].push_back({{"edge", P.by_node_edge[i]}, {"weight", w[i]}});
      return m;
    };
    json per_head = json::array();
    for (std::size_t k = 0; k < K; ++k) per_head.push_back({{"alpha", alpha_map(layer.alpha[k])}, {"beta", beta_map(layer.beta[k])}});

    std::vector<std::vector<double>> node_column(V, std::vector<double>(N, 0.0));
    std::vector<std::vector<double>> node_row(V, std::vector<double>(M, 0.0));
    std::vector<double> node_table(V, 0.0);
    for (std::size_t i = 0; i < nnz; ++i) {
      const std::size_t v = P.by_node_node[i], e = P.by_node_edge[i];
      if (e == graph.table_edge()) node_table[v] = beta_avg[i];
      else if (e >= M) node_column[v][e - M] = beta_avg[i];
      else node_row[v][e] = beta_avg[i];
    }
    layers.push_back({{"alpha", alpha_map(alpha_avg)},
                      {"beta", beta_map(beta_avg)},
                      {"per_head", std::move(per_head)},
                      {"head_avg", {{"node_column", node_column}, {"node_row", node_row}, {"node_table", node_table}}}});
  }
  return {{"node_count", V}, {"edge_count", log.edge_count}, {"layers", std::move(layers)}};
}

}  // namespace hyperg
