#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hyperg/hypergraph.hpp"
#include "hyperg/layers.hpp"
#include "hyperg/random.hpp"
#include "hyperg/tensor.hpp"
#include "json.hpp"

namespace hyperg {

enum class PhlInit {
  Random,        // every map ~ Uniform(+-1/sqrt(fan_in))
  NearIdentity,  // per-head key/value/query maps start at (scaled) identity plus small noise
};

std::string phl_init_name(PhlInit init);
PhlInit parse_phl_init(const std::string& name);

struct PhlConfig {
  std::size_t heads = 12;
  std::size_t layers = 2;
  std::size_t dim = 64;
  std::size_t ff_hidden = 0;  // 0 means 4 * dim
  double leaky_slope = 0.01;
  double dropout_rate = 0.1;
  double ln_eps = 1e-5;
  PhlInit init = PhlInit::NearIdentity;
  std::uint64_t seed = 0;
  Dtype dtype = Dtype::F64;

  std::size_t hidden() const { return ff_hidden == 0 ? 4 * dim : ff_hidden; }
  /// Throws Errc::InvalidConfig.
  void validate() const;
};

/// Node-to-edge attention. Head k uses row k of `query_bank` and columns
/// [k*d, (k+1)*d) of the key and value maps.
struct NodeToEdgeParams {
  Tensor query_bank;  // [K x d]
  Linear key;         // d -> K*d
  Linear value;       // d -> K*d
  TransformerBlock block;
  Linear merge;  // K*d -> d
};

/// Inquiry-conditioned edge-to-node attention.
struct EdgeToNodeParams {
  Linear query;  // d -> K*d, applied to the inquiry embedding
  Linear key;    // 2d -> K*d
  Linear value;  // 2d -> K*d
  TransformerBlock block;
  Linear merge;  // K*d -> d
};

struct PhlLayerParams {
  NodeToEdgeParams node_to_edge;
  EdgeToNodeParams edge_to_node;
};

class PhlModel {
 public:
  explicit PhlModel(const PhlConfig& config);

  const PhlConfig& config() const { return config_; }
  const std::vector<PhlLayerParams>& layers() const { return layers_; }
  std::vector<PhlLayerParams>& layers() { return layers_; }
  std::vector<NamedTensor> parameters() const;

 private:
  PhlConfig config_;
  std::vector<PhlLayerParams> layers_;
};

/// Attention captured for one layer. Pair order follows IncidenceLists:
/// alpha over (edge-major) pairs, beta over (node-major) pairs.
struct LayerAttention {
  std::vector<std::vector<double>> alpha_logits;  // [K][|V|], one logit per node
  std::vector<std::vector<double>> alpha;         // [K][nnz], normalized per edge
  std::vector<std::vector<double>> beta_logits;   // [K][nnz]
  std::vector<std::vector<double>> beta;          // [K][nnz], normalized per node
};

struct AttentionLog {
  IncidenceLists pairs;
  std::size_t node_count = 0;
  std::size_t edge_count = 0;
  std::vector<LayerAttention> layers;
};

struct PhlOutput {
  Tensor node_h;       // [|V| x d]
  Tensor edge_aug;     // [|E| x 2d]
  Tensor table_embed;  // [1 x 2d]
  std::optional<AttentionLog> log;
};

/// One node-to-edge pass; returns edge_aug [|E| x 2d] = concat(edge update, edge_base).
Tensor node_to_edge(Tape& tape, const NodeToEdgeParams& p, const PhlConfig& cfg, const Tensor& node_h,
                    const Tensor& edge_base, const IncidenceLists& pairs, Mode mode, Rng* rng,
                    LayerAttention* log = nullptr);

/// One edge-to-node pass; returns the next node state [|V| x d].
Tensor edge_to_node(Tape& tape, const EdgeToNodeParams& p, const PhlConfig& cfg, const Tensor& edge_aug,
                    const Tensor& inquiry, const IncidenceLists& pairs, std::size_t node_count, Mode mode, Rng* rng,
                    LayerAttention* log = nullptr);

PhlOutput phl_forward(Tape& tape, const PhlModel& model, const SemanticHypergraph& graph, const Tensor& node_embeds,
                      const Tensor& edge_embeds, const Tensor& inquiry, Mode mode, Rng* rng, bool log_attention = false);

/// Ablation path: concat(zeros(d), edge_embeds[table edge]).
Tensor phl_bypass(Tape& tape, const SemanticHypergraph& graph, const Tensor& edge_embeds);

/// Throws Errc::LogNotEnabled when the forward pass did not capture attention.
const AttentionLog& attention_weights(const PhlOutput& out);

/// Head-averaged weights per edge (alpha) and per node (beta), plus per-head
/// lists and dense node x edge matrices of the final layer's beta.
nlohmann::json attention_to_json(const AttentionLog& log, const SemanticHypergraph& graph);

}  // namespace hyperg
