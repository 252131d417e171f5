#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hyperg/hypergraph.hpp"
#include "hyperg/random.hpp"
#include "hyperg/tensor.hpp"

namespace hyperg {

/// Deterministic hashing tokenizer.
///
/// Text is split on Unicode whitespace; ASCII punctuation characters split
/// words and are emitted as single-character tokens. Tokens are lowercased
/// (ASCII) and mapped to (FNV-1a-64(token) mod (vocab_size - 3)) + 3, leaving
/// ids 0..2 for PAD, EMPTY and UNK. Text without tokens yields [EMPTY].
class HashTokenizer {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kEmpty = 1;
  static constexpr std::int32_t kUnk = 2;

  explicit HashTokenizer(std::size_t vocab_size = 32768);

  std::size_t vocab_size() const { return vocab_size_; }
  std::vector<std::int32_t> tokenize(std::string_view text) const;
  /// Like tokenize() but returns no ids (rather than [EMPTY]) for blank text.
  std::vector<std::int32_t> tokenize_span(std::string_view text) const;
  std::vector<std::string> split(std::string_view text) const;

 private:
  std::size_t vocab_size_;
};

struct EmbeddingConfig {
  std::size_t dim = 64;
  double dropout_rate = 0.1;
  std::size_t vocab_size = 32768;
  std::uint64_t seed = 0;
  double ln_eps = 1e-5;
  Dtype dtype = Dtype::F64;

  /// Throws Errc::InvalidConfig.
  void validate() const;
};

/// Shared token embedding table followed by layer norm and dropout:
/// mean-pool token rows -> LN -> dropout.
class SemanticEmbedder {
 public:
  explicit SemanticEmbedder(const EmbeddingConfig& config);

  const EmbeddingConfig& config() const { return config_; }
  const HashTokenizer& tokenizer() const { return tokenizer_; }
  std::size_t dim() const { return config_.dim; }

  /// [1 x d]
  Tensor embed_text(Tape& tape, std::string_view text, Mode mode, Rng* rng) const;
  /// [n x d], one row per text.
  Tensor embed_texts(Tape& tape, const std::vector<std::string>& texts, Mode mode, Rng* rng) const;
  /// Raw table rows for a token sequence, [n x d]. No LN or dropout.
  Tensor token_embeddings(Tape& tape, std::span<const std::int32_t> ids) const;

  Tensor& table() { return table_; }
  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  std::vector<NamedTensor> parameters() const;

 private:
  EmbeddingConfig config_;
  HashTokenizer tokenizer_;
  Tensor table_;
  Tensor gamma_;
  Tensor beta_;
};

struct HypergraphEmbedding {
  Tensor nodes;    // [|V| x d]
  Tensor edges;    // [|E| x d]
  Tensor inquiry;  // [1 x d]
};

HypergraphEmbedding embed_hypergraph(Tape& tape, const SemanticEmbedder& embedder, const SemanticHypergraph& graph,
                                     std::string_view inquiry, Mode mode, Rng* rng);

}  // namespace hyperg
