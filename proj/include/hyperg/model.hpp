#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hyperg/embedding.hpp"
#include "hyperg/hypergraph.hpp"
#include "hyperg/integration.hpp"
#include "hyperg/phl.hpp"
#include "hyperg/table.hpp"
#include "json.hpp"

namespace hyperg {

enum class TaskKind { Tfv, TqaLite };

std::string task_name(TaskKind task);
TaskKind parse_task(const std::string& name);

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t heads = 12;
  std::size_t layers = 2;
  std::size_t token_dim = 0;  // 0 means dim
  std::size_t ff_hidden = 0;  // 0 means 4 * dim
  std::size_t vocab_size = 32768;
  double dropout_rate = 0.1;
  double leaky_slope = 0.01;
  PhlInit init = PhlInit::NearIdentity;
  bool no_phl = false;
  bool no_inquiry = false;
  std::string prompt_template;  // empty means PromptTemplate::standard()
  std::uint64_t seed = 0;
  Dtype dtype = Dtype::F64;

  std::size_t token_dimension() const { return token_dim == 0 ? dim : token_dim; }
  EmbeddingConfig embedding() const;
  PhlConfig phl() const;
  PromptTemplate prompt() const;
  /// Throws Errc::InvalidConfig.
  void validate() const;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults. Throws Errc::InvalidConfig.
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Embedder, PHL stack, projector and both answer heads.
class HyperGModel {
 public:
  explicit HyperGModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const SemanticEmbedder& embedder() const { return embedder_; }
  const PhlModel& phl() const { return phl_; }
  const Projector& projector() const { return projector_; }
  const TfvHead& tfv_head() const { return tfv_; }
  const TqaHead& tqa_head() const { return tqa_; }
  /// Learned stand-in for the inquiry embedding under the no-inquiry ablation.
  const Tensor& inquiry_constant() const { return inquiry_const_; }
  const PromptTemplate& prompt_template() const { return template_; }

  /// Every trainable tensor under a stable, unique name.
  std::vector<NamedTensor> parameters() const;

  /// Parameters trained at lr * module_lr_scale: the hypergraph side
  /// (embedder, PHL, projector). The answer heads use the base lr.
  static bool uses_module_lr(const std::string& name);

 private:
  ModelConfig config_;
  SemanticEmbedder embedder_;
  PhlModel phl_;
  Projector projector_;
  TfvHead tfv_;
  TqaHead tqa_;
  Tensor inquiry_const_;
  PromptTemplate template_;
};

/// Everything about one example that does not depend on parameters.
struct PreparedInput {
  Table table;
  AugmentedTable augmented;
  SemanticHypergraph graph;
  std::string inquiry;
  RenderedPrompt prompt;
};

PreparedInput prepare_input(const Table& table, const std::string& inquiry, const Augmenter& augmenter,
                            const PromptTemplate& tpl);

struct ForwardOutput {
  Tensor table_embed;  // [1 x 2d]
  Tensor token;        // projected table token [1 x d']
  Tensor node_h;       // [|V| x d]
  Tensor tfv_logits;   // [2] for Tfv
  Tensor tqa_scores;   // [|V|] for TqaLite
  TokenSequence sequence;
  std::size_t table_position = 0;
  std::optional<AttentionLog> attention;
};

/// augment/build (already in `input`) -> embed -> PHL (or bypass) -> project
/// -> splice -> head.
ForwardOutput model_forward(Tape& tape, const HyperGModel& model, const PreparedInput& input, TaskKind task,
                            Mode mode, Rng* rng, bool log_attention = false);

}  // namespace hyperg
