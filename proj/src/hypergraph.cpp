#include "hyperg/hypergraph.hpp"

#include <algorithm>

#include "hyperg/error.hpp"

namespace hyperg {

namespace {

void check_permutation(const std::vector<std::size_t>& perm, std::size_t n, const char* what) {
  if (perm.size() != n) throw Error(Errc::NotAPermutation, std::string(what) + " permutation has wrong length");
  std::vector<bool> seen(n, false);
  for (auto p : perm) {
    if (p >= n || seen[p]) throw Error(Errc::NotAPermutation, std::string(what) + " permutation is not a bijection");
    seen[p] = true;
  }
}

std::vector<std::size_t> inverse(const std::vector<std::size_t>& perm) {
  std::vector<std::size_t> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
  return inv;
}

}  // namespace

std::string edge_kind_name(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::Row:
      return "row";
    case EdgeKind::Column:
      return "col";
    case EdgeKind::Table:
      return "table";
  }
  return "table";
}

std::vector<std::size_t> IncidenceMatrix::row_sums() const {
  std::vector<std::size_t> out(nodes_, 0);
  for (std::size_t i = 0; i < nodes_; ++i)
    for (std::size_t j = 0; j < edges_; ++j) out[i] += data_[i * edges_ + j];
  return out;
}

std::vector<std::size_t> IncidenceMatrix::column_sums() const {
  std::vector<std::size_t> out(edges_, 0);
  for (std::size_t i = 0; i < nodes_; ++i)
    for (std::size_t j = 0; j < edges_; ++j) out[j] += data_[i * edges_ + j];
  return out;
}

SemanticHypergraph build_hypergraph(const AugmentedTable& at) {
  const Table& t = at.base;
  SemanticHypergraph g;
  g.rows_ = t.row_count();
  g.cols_ = t.col_count();
  const std::size_t M = g.rows_, N = g.cols_;
  g.node_text_.reserve(M * N);
  for (const auto& row : t.cells)
    for (const auto& c : row) g.node_text_.push_back(c);

  g.edges_.reserve(M + N + 1);
  for (std::size_t m = 0; m < M; ++m) {
    Hyperedge e{EdgeKind::Row, m, {}, at.row_descriptions.at(m)};
    for (std::size_t n = 0; n < N; ++n) e.members.push_back(m * N + n);
    g.edges_.push_back(std::move(e));
  }
  for (std::size_t n = 0; n < N; ++n) {
    Hyperedge e{EdgeKind::Column, n, {}, at.col_descriptions.at(n)};
    for (std::size_t m = 0; m < M; ++m) e.members.push_back(m * N + n);
    g.edges_.push_back(std::move(e));
  }
  Hyperedge table{EdgeKind::Table, std::nullopt, {}, at.caption};
  for (std::size_t v = 0; v < M * N; ++v) table.members.push_back(v);
  g.edges_.push_back(std::move(table));
  return g;
}

const Hyperedge& SemanticHypergraph::edge(std::size_t edge_id) const {
  if (edge_id >= edges_.size()) throw Error(Errc::IndexOutOfRange, "edge id " + std::to_string(edge_id));
  return edges_[edge_id];
}

std::vector<std::string> SemanticHypergraph::edge_text() const {
  std::vector<std::string> out;
  out.reserve(edges_.size());
  for (const auto& e : edges_) out.push_back(e.text);
  return out;
}

const std::vector<std::size_t>& SemanticHypergraph::edge_members(std::size_t edge_id) const {
  return edge(edge_id).members;
}

std::vector<std::size_t> SemanticHypergraph::node_edges(std::size_t node_id) const {
  if (node_id >= node_count()) throw Error(Errc::IndexOutOfRange, "node id " + std::to_string(node_id));
  return {row_edge(node_id / cols_), column_edge(node_id % cols_), table_edge()};
}

IncidenceMatrix SemanticHypergraph::incidence() const {
  IncidenceMatrix h(node_count(), edge_count());
  for (std::size_t j = 0; j < edges_.size(); ++j)
    for (auto v : edges_[j].members) h.set(v, j);
  return h;
}

SemanticHypergraph SemanticHypergraph::permute(const std::vector<std::size_t>& row_perm,
                                               const std::vector<std::size_t>& col_perm) const {
  check_permutation(row_perm, rows_, "row");
  check_permutation(col_perm, cols_, "column");
  const std::size_t M = rows_, N = cols_;
  const auto row_inv = inverse(row_perm);
  const auto col_inv = inverse(col_perm);
  auto relabel = [&](std::size_t v) { return row_inv[v / N] * N + col_inv[v % N]; };

  SemanticHypergraph g;
  g.rows_ = M;
  g.cols_ = N;
  g.node_text_.resize(M * N);
  for (std::size_t v = 0; v < M * N; ++v) g.node_text_[relabel(v)] = node_text_[v];

  g.edges_.reserve(edges_.size());
  auto moved = [&](const Hyperedge& e, std::optional<std::size_t> index) {
    Hyperedge out{e.kind, index, {}, e.text};
    for (auto v : e.members) out.members.push_back(relabel(v));
    std::sort(out.members.begin(), out.members.end());
    return out;
  };
  for (std::size_t i = 0; i < M; ++i) g.edges_.push_back(moved(edges_[row_edge(row_perm[i])], i));
  for (std::size_t j = 0; j < N; ++j) g.edges_.push_back(moved(edges_[column_edge(col_perm[j])], j));
  g.edges_.push_back(moved(edges_[table_edge()], std::nullopt));
  return g;
}

nlohmann::json SemanticHypergraph::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : edges_) {
    edges.push_back({{"kind", edge_kind_name(e.kind)},
                     {"index", e.index ? nlohmann::json(*e.index) : nlohmann::json(nullptr)},
                     {"members", e.members},
                     {"text", e.text}});
  }
  return {{"nodes", node_text_}, {"edges", std::move(edges)}};
}

IncidenceLists incidence_lists(const SemanticHypergraph& g) {
  IncidenceLists lists;
  for (std::size_t j = 0; j < g.edge_count(); ++j) {
    for (auto v : g.edge_members(j)) {
      lists.by_edge_node.push_back(v);
      lists.by_edge_edge.push_back(j);
    }
  }
  for (std::size_t v = 0; v < g.node_count(); ++v) {
    for (auto e : g.node_edges(v)) {
      lists.by_node_node.push_back(v);
      lists.by_node_edge.push_back(e);
    }
  }
  return lists;
}

}  // namespace hyperg
