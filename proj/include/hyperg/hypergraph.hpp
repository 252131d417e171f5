#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hyperg/table.hpp"
#include "json.hpp"

namespace hyperg {

enum class EdgeKind { Row, Column, Table };

std::string edge_kind_name(EdgeKind kind);

struct Hyperedge {
  EdgeKind kind = EdgeKind::Table;
  std::optional<std::size_t> index;  // row or column index; empty for the table edge
  std::vector<std::size_t> members;  // sorted node ids
  std::string text;

  bool operator==(const Hyperedge&) const = default;
};

/// Dense |V| x |E| 0/1 incidence matrix.
class IncidenceMatrix {
 public:
  IncidenceMatrix() = default;
  IncidenceMatrix(std::size_t nodes, std::size_t edges) : nodes_(nodes), edges_(edges), data_(nodes * edges, 0) {}

  std::size_t node_count() const { return nodes_; }
  std::size_t edge_count() const { return edges_; }
  std::uint8_t at(std::size_t node, std::size_t edge) const { return data_.at(node * edges_ + edge); }
  void set(std::size_t node, std::size_t edge) { data_.at(node * edges_ + edge) = 1; }

  std::vector<std::size_t> row_sums() const;
  std::vector<std::size_t> column_sums() const;

  bool operator==(const IncidenceMatrix&) const = default;

 private:
  std::size_t nodes_ = 0;
  std::size_t edges_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Semantic hypergraph of an M x N table.
///
/// Node id m*N + n is cell (m, n). Edges are ordered Row(0..M), Column(0..N),
/// then the single Table edge; every node lies in exactly three edges.
/// Member lists are the source of truth; the incidence matrix is derived.
class SemanticHypergraph {
 public:
  SemanticHypergraph() = default;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t node_count() const { return node_text_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t table_edge() const { return rows_ + cols_; }
  std::size_t row_edge(std::size_t m) const { return m; }
  std::size_t column_edge(std::size_t n) const { return rows_ + n; }

  const std::vector<std::string>& node_text() const { return node_text_; }
  const std::vector<Hyperedge>& edges() const { return edges_; }
  const Hyperedge& edge(std::size_t edge_id) const;
  std::vector<std::string> edge_text() const;

  /// Throws Errc::IndexOutOfRange.
  const std::vector<std::size_t>& edge_members(std::size_t edge_id) const;
  /// Sorted edge ids containing the node. Throws Errc::IndexOutOfRange.
  std::vector<std::size_t> node_edges(std::size_t node_id) const;

  IncidenceMatrix incidence() const;

  /// Relabels the graph as if the table's rows and columns were reordered:
  /// new row i is old row row_perm[i], new column j is old column col_perm[j].
  /// Throws Errc::NotAPermutation.
  SemanticHypergraph permute(const std::vector<std::size_t>& row_perm, const std::vector<std::size_t>& col_perm) const;

  nlohmann::json to_json() const;

  bool operator==(const SemanticHypergraph&) const = default;

  friend SemanticHypergraph build_hypergraph(const AugmentedTable& table);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::string> node_text_;
  std::vector<Hyperedge> edges_;
};

SemanticHypergraph build_hypergraph(const AugmentedTable& table);

inline IncidenceMatrix incidence(const SemanticHypergraph& g) { return g.incidence(); }

/// Flattened (node, edge) incidence pairs in the two orders message passing
/// reduces over: grouped by edge (ascending node within an edge) and grouped
/// by node (ascending edge within a node).
struct IncidenceLists {
  std::vector<std::size_t> by_edge_node;
  std::vector<std::size_t> by_edge_edge;
  std::vector<std::size_t> by_node_node;
  std::vector<std::size_t> by_node_edge;
};

IncidenceLists incidence_lists(const SemanticHypergraph& g);

}  // namespace hyperg
