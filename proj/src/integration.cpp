#include "hyperg/integration.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hyperg/error.hpp"
#include "hyperg/ops.hpp"

namespace hyperg {

namespace {

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
  return n;
}

void replace_all(std::string& text, std::string_view from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
}

}  // namespace

Projector Projector::init(std::size_t d, std::size_t token_dim, Rng& rng, Dtype dtype) {
  return {Linear::uniform(2 * d, token_dim, rng, dtype), Linear::uniform(token_dim, token_dim, rng, dtype)};
}

Tensor Projector::forward(Tape& tape, const Tensor& x) const {
  if (x.numel() != first.in()) throw Error(Errc::ShapeMismatch, "projector input must hold 2d values");
  auto row = ops::reshape(tape, x, {1, x.numel()});
  return second.forward(tape, ops::relu(tape, first.forward(tape, row)));
}

void Projector::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  first.collect(prefix + ".first", out);
  second.collect(prefix + ".second", out);
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  const auto n = count_occurrences(text_, kTableMarker);
  if (n == 0) throw Error(Errc::MissingMarker, "template has no " + std::string(kTableMarker));
  if (n > 1) throw Error(Errc::DuplicateMarker, "template repeats " + std::string(kTableMarker));
}

PromptTemplate PromptTemplate::standard() {
  return PromptTemplate("claim: <INQUIRY> table: <TABLE_HYPEREDGE>");
}

PromptTemplate PromptTemplate::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read template " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return PromptTemplate(ss.str());
}

RenderedPrompt render_prompt(const PromptTemplate& tpl, const Table& table, std::string_view inquiry) {
  const auto& t = tpl.text();
  const auto at = t.find(kTableMarker);
  std::string before = t.substr(0, at);
  std::string after = t.substr(at + kTableMarker.size());
  const std::string md = serialize_markdown(table);
  const std::string q(inquiry);
  for (auto* part : {&before, &after}) {
    // Inquiry first: a table cell that happens to read "<INQUIRY>" stays literal.
    replace_all(*part, kTableSlot, "\x01");
    replace_all(*part, kInquirySlot, q);
    replace_all(*part, "\x01", md);
  }
  RenderedPrompt r;
  r.marker_begin = before.size();
  r.marker_end = before.size() + kTableMarker.size();
  r.text = before + std::string(kTableMarker) + after;
  return r;
}

TokenSequence prompt_tokens(Tape& tape, const SemanticEmbedder& embedder, const RenderedPrompt& prompt,
                            std::size_t& position) {
  auto ids = embedder.tokenizer().tokenize_span(prompt.prefix());
  position = ids.size();
  const auto tail = embedder.tokenizer().tokenize_span(prompt.suffix());
  ids.insert(ids.end(), tail.begin(), tail.end());
  TokenSequence seq;
  seq.tags.assign(ids.size(), TokenSource::PromptToken);
  if (ids.empty()) {
    seq.vectors = Tensor::zeros({0, embedder.dim()}, embedder.config().dtype);
  } else {
    seq.vectors = embedder.token_embeddings(tape, ids);
  }
  return seq;
}

TokenSequence splice(Tape& tape, const TokenSequence& prompt, const Tensor& table_vec, std::size_t position) {
  const std::size_t n = prompt.size();
  if (position > n) throw Error(Errc::IndexOutOfRange, "splice position " + std::to_string(position));
  const std::size_t d = prompt.vectors.cols();
  if (table_vec.numel() != d) throw Error(Errc::ShapeMismatch, "table vector does not match token dim");
  std::vector<Tensor> parts;
  if (position > 0) parts.push_back(ops::slice_rows(tape, prompt.vectors, 0, position));
  parts.push_back(ops::reshape(tape, table_vec, {1, d}));
  if (position < n) parts.push_back(ops::slice_rows(tape, prompt.vectors, position, n));
  TokenSequence out;
  out.vectors = parts.size() == 1 ? parts[0] : ops::concat_rows(tape, parts);
  out.tags = prompt.tags;
  out.tags.insert(out.tags.begin() + static_cast<std::ptrdiff_t>(position), TokenSource::TableEmbed);
  return out;
}

TokenSequence remove_table_embed(Tape& tape, const TokenSequence& seq) {
  std::vector<std::size_t> keep;
  TokenSequence out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.tags[i] == TokenSource::PromptToken) {
      keep.push_back(i);
      out.tags.push_back(TokenSource::PromptToken);
    }
  }
  if (keep.empty()) {
    out.vectors = Tensor::zeros({0, seq.vectors.cols()}, seq.vectors.dtype());
  } else {
    out.vectors = ops::gather_rows(tape, seq.vectors, keep);
  }
  return out;
}

TfvHead TfvHead::init(std::size_t d, std::size_t token_dim, Rng& rng, Dtype dtype) {
  return {Linear::uniform(d, token_dim, rng, dtype), Linear::uniform(2 * token_dim, 2, rng, dtype)};
}

Tensor TfvHead::forward(Tape& tape, const TokenSequence& seq, const Tensor& inquiry) const {
  if (seq.size() == 0) throw Error(Errc::ShapeMismatch, "empty token sequence");
  auto pooled = ops::mean_rows(tape, seq.vectors);
  auto q = inquiry_proj.forward(tape, ops::reshape(tape, inquiry, {1, inquiry.numel()}));
  return ops::reshape(tape, out.forward(tape, ops::concat_cols(tape, {pooled, q})), {2});
}

void TfvHead::collect(const std::string& prefix, std::vector<NamedTensor>& out_params) const {
  inquiry_proj.collect(prefix + ".inquiry_proj", out_params);
  out.collect(prefix + ".out", out_params);
}

TqaHead TqaHead::init(std::size_t d, std::size_t token_dim, Rng& rng, Dtype dtype) {
  TqaHead h;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> w(d * token_dim);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  h.scorer = Tensor::parameter({d, token_dim}, std::move(w), dtype);
  h.mlp1 = Linear::uniform(d, token_dim, rng, dtype);
  h.mlp2 = Linear::uniform(token_dim, token_dim, rng, dtype);
  return h;
}

Tensor TqaHead::forward(Tape& tape, const Tensor& node_h, const Tensor& inquiry) const {
  auto q = ops::reshape(tape, inquiry, {1, inquiry.numel()});
  auto m = mlp2.forward(tape, ops::relu(tape, mlp1.forward(tape, q)));
  auto keys = ops::matmul(tape, node_h, scorer);
  return ops::reshape(tape, ops::matmul(tape, keys, ops::transpose(tape, m)), {node_h.rows()});
}

void TqaHead::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".scorer", scorer});
  mlp1.collect(prefix + ".mlp1", out);
  mlp2.collect(prefix + ".mlp2", out);
}

std::size_t select_answer_cell(std::span<const double> scores, const std::vector<std::string>& node_text) {
  if (scores.empty()) throw Error(Errc::IndexOutOfRange, "no cells to select from");
  if (node_text.size() != scores.size()) throw Error(Errc::LengthMismatch, "scores and cell texts differ in length");
  double best = scores[0];
  for (double s : scores) best = std::max(best, s);
  std::size_t pick = scores.size();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] < best - 1e-9) continue;
    if (pick == scores.size() || node_text[i] < node_text[pick]) pick = i;
  }
  return pick;
}

}  // namespace hyperg
