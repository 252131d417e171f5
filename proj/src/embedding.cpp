#include "hyperg/embedding.hpp"

#include <cmath>

#include "hyperg/error.hpp"
#include "hyperg/ops.hpp"

namespace hyperg {

namespace {

bool is_unicode_space(char32_t c) {
  switch (c) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return c >= 0x2000 && c <= 0x200A;
  }
}

bool is_ascii_punct(char32_t c) {
  return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
         (c >= 0x7B && c <= 0x7E);
}

// Decodes one code point starting at text[i]; returns its byte length.
// Malformed sequences decode as a single byte.
std::size_t decode(std::string_view text, std::size_t i, char32_t& out) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  std::size_t len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 0;
  if (len == 0 || i + len > text.size()) {
    out = b0;
    return 1;
  }
  char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b >> 6) != 0x2) {
      out = b0;
      return 1;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  out = cp;
  return len;
}

}  // namespace

HashTokenizer::HashTokenizer(std::size_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < 4) throw Error(Errc::InvalidConfig, "vocab_size must be at least 4");
}

std::vector<std::string> HashTokenizer::split(std::string_view text) const {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < text.size();) {
    char32_t cp = 0;
    const std::size_t len = decode(text, i, cp);
    if (is_unicode_space(cp)) {
      flush();
    } else if (is_ascii_punct(cp)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(cp));
    } else if (cp >= 'A' && cp <= 'Z') {
      current.push_back(static_cast<char>(cp - 'A' + 'a'));
    } else {
      current.append(text.substr(i, len));
    }
    i += len;
  }
  flush();
  return tokens;
}

std::vector<std::int32_t> HashTokenizer::tokenize_span(std::string_view text) const {
  std::vector<std::int32_t> ids;
  for (const auto& tok : split(text)) {
    ids.push_back(static_cast<std::int32_t>(fnv1a64(tok) % (vocab_size_ - 3) + 3));
  }
  return ids;
}

std::vector<std::int32_t> HashTokenizer::tokenize(std::string_view text) const {
  auto ids = tokenize_span(text);
  if (ids.empty()) ids.push_back(kEmpty);
  return ids;
}

void EmbeddingConfig::validate() const {
  if (dim < 1) throw Error(Errc::InvalidConfig, "embedding dim must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error(Errc::InvalidConfig, "dropout_rate must be in [0, 1)");
  if (vocab_size < 4) throw Error(Errc::InvalidConfig, "vocab_size must be at least 4");
  if (!(ln_eps > 0.0)) throw Error(Errc::InvalidConfig, "ln_eps must be positive");
}

SemanticEmbedder::SemanticEmbedder(const EmbeddingConfig& config)
    : config_((config.validate(), config)), tokenizer_(config.vocab_size) {
  const std::size_t d = config_.dim;
  auto rng = Rng::stream(config_.seed, "embedding.table");
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> table(config_.vocab_size * d);
  for (auto& v : table) v = rng.uniform(-bound, bound);
  table_ = Tensor::parameter({config_.vocab_size, d}, std::move(table), config_.dtype);
  gamma_ = Tensor::parameter({d}, std::vector<double>(d, 1.0), config_.dtype);
  beta_ = Tensor::parameter({d}, std::vector<double>(d, 0.0), config_.dtype);
}

Tensor SemanticEmbedder::embed_texts(Tape& tape, const std::vector<std::string>& texts, Mode mode, Rng* rng) const {
  std::vector<std::vector<std::int32_t>> ids;
  ids.reserve(texts.size());
  for (const auto& t : texts) ids.push_back(tokenizer_.tokenize(t));
  auto pooled = ops::embedding_bag_mean(tape, table_, ids);
  auto normed = ops::layer_norm(tape, pooled, gamma_, beta_, config_.ln_eps);
  return ops::dropout(tape, normed, config_.dropout_rate, mode, rng);
}

Tensor SemanticEmbedder::embed_text(Tape& tape, std::string_view text, Mode mode, Rng* rng) const {
  return embed_texts(tape, {std::string(text)}, mode, rng);
}

Tensor SemanticEmbedder::token_embeddings(Tape& tape, std::span<const std::int32_t> ids) const {
  std::vector<std::vector<std::int32_t>> bags;
  bags.reserve(ids.size());
  for (auto id : ids) bags.push_back({id});
  return ops::embedding_bag_mean(tape, table_, bags);
}

std::vector<NamedTensor> SemanticEmbedder::parameters() const {
  return {{"embedding.table", table_}, {"embedding.ln.gamma", gamma_}, {"embedding.ln.beta", beta_}};
}

HypergraphEmbedding embed_hypergraph(Tape& tape, const SemanticEmbedder& embedder, const SemanticHypergraph& graph,
                                     std::string_view inquiry, Mode mode, Rng* rng) {
  HypergraphEmbedding out;
  out.nodes = embedder.embed_texts(tape, graph.node_text(), mode, rng);
  out.edges = embedder.embed_texts(tape, graph.edge_text(), mode, rng);
  out.inquiry = embedder.embed_text(tape, inquiry, mode, rng);
  return out;
}

}  // namespace hyperg
