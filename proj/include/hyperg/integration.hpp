#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyperg/embedding.hpp"
#include "hyperg/layers.hpp"
#include "hyperg/table.hpp"
#include "hyperg/tensor.hpp"

namespace hyperg {

/// Two-layer map from the 2d table readout into token space: Linear -> ReLU -> Linear.
struct Projector {
  Linear first;   // 2d -> d'
  Linear second;  // d' -> d'

  static Projector init(std::size_t d, std::size_t token_dim, Rng& rng, Dtype dtype);
  /// x holds 2d values; returns [1 x d']. Throws Errc::ShapeMismatch.
  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

inline constexpr std::string_view kTableMarker = "<TABLE_HYPEREDGE>";
inline constexpr std::string_view kInquirySlot = "<INQUIRY>";
inline constexpr std::string_view kTableSlot = "<TABLE_MD>";

class PromptTemplate {
 public:
  /// Throws Errc::MissingMarker or Errc::DuplicateMarker.
  explicit PromptTemplate(std::string text);

  static PromptTemplate standard();
  /// Throws Errc::IoError plus the marker errors.
  static PromptTemplate load(const std::string& path);

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

struct RenderedPrompt {
  std::string text;
  std::size_t marker_begin = 0;  // byte span of the marker inside `text`
  std::size_t marker_end = 0;

  std::string_view prefix() const { return std::string_view(text).substr(0, marker_begin); }
  std::string_view suffix() const { return std::string_view(text).substr(marker_end); }
};

/// Fills <TABLE_MD> and <INQUIRY>; the marker stays in place. Slots are
/// filled separately on each side of the marker so inserted text can never
/// create or hide a marker.
RenderedPrompt render_prompt(const PromptTemplate& tpl, const Table& table, std::string_view inquiry);

enum class TokenSource { PromptToken, TableEmbed };

struct TokenSequence {
  Tensor vectors;  // [n x d']
  std::vector<TokenSource> tags;

  std::size_t size() const { return tags.size(); }
};

/// Raw embedding rows of the prompt tokens around the marker. `position`
/// receives the number of prefix tokens.
TokenSequence prompt_tokens(Tape& tape, const SemanticEmbedder& embedder, const RenderedPrompt& prompt,
                            std::size_t& position);

/// Inserts `table_vec` (d' values) before index `position`. Throws
/// Errc::IndexOutOfRange or Errc::ShapeMismatch.
TokenSequence splice(Tape& tape, const TokenSequence& prompt, const Tensor& table_vec, std::size_t position);

/// Drops every TableEmbed position.
TokenSequence remove_table_embed(Tape& tape, const TokenSequence& seq);

/// Binary verification head: Linear(2d' -> 2) over
/// concat(mean of the spliced sequence, Linear(d -> d')(inquiry)).
struct TfvHead {
  Linear inquiry_proj;  // d -> d'
  Linear out;           // 2d' -> 2

  static TfvHead init(std::size_t d, std::size_t token_dim, Rng& rng, Dtype dtype);
  /// Logits [2]: index 0 = "no", 1 = "yes".
  Tensor forward(Tape& tape, const TokenSequence& seq, const Tensor& inquiry) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Cell scorer: score_i = (node_h[i] W_s) . MLP(inquiry).
struct TqaHead {
  Tensor scorer;  // [d x d']
  Linear mlp1;    // d -> d'
  Linear mlp2;    // d' -> d'

  static TqaHead init(std::size_t d, std::size_t token_dim, Rng& rng, Dtype dtype);
  /// Scores [|V|].
  Tensor forward(Tape& tape, const Tensor& node_h, const Tensor& inquiry) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Highest-scoring node. Scores within 1e-9 of the maximum tie; ties go to
/// the smallest cell text, then the lowest node id, so the chosen content is
/// stable when the table is permuted.
std::size_t select_answer_cell(std::span<const double> scores, const std::vector<std::string>& node_text);

}  // namespace hyperg
