#pragma once

#include <compare>
#include <cstddef>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace hyperg {

/// A captioned M x N grid of text cells with one header per column.
struct Table {
  std::string caption;
  std::vector<std::string> headers;
  std::vector<std::vector<std::string>> cells;  // row-major, M rows of N cells

  std::size_t row_count() const { return cells.size(); }
  std::size_t col_count() const { return headers.size(); }
  const std::string& cell(std::size_t row, std::size_t col) const { return cells.at(row).at(col); }

  bool operator==(const Table&) const = default;
};

/// Trims surrounding whitespace and collapses internal runs to one space.
std::string normalize_whitespace(std::string_view text);

/// Builds a validated, whitespace-normalized table.
/// Throws Errc::EmptyTable or Errc::RaggedRows.
Table make_table(std::string caption, std::vector<std::string> headers,
                 std::vector<std::vector<std::string>> rows);

/// {"caption": string, "headers": [string...], "rows": [[string...]...]}
Table parse_table_json(std::string_view bytes);
Table table_from_json(const nlohmann::json& j);
nlohmann::json table_to_json(const Table& table);
std::string emit_table_json(const Table& table);

/// RFC-4180 style CSV whose first record is the header row.
Table parse_table_csv(std::string_view bytes, std::string caption);

/// Caption line, header row, `---` separator row, one line per data row.
/// Pipes inside cells are escaped as `\|`. No trailing newline.
std::string serialize_markdown(const Table& table);

/// Reorders rows and columns: output row i is input row row_perm[i], and
/// likewise for columns. Throws Errc::NotAPermutation.
Table permute_table(const Table& table, const std::vector<std::size_t>& row_perm,
                    const std::vector<std::size_t>& col_perm);

struct CellIndex {
  std::size_t row = 0;
  std::size_t col = 0;
  auto operator<=>(const CellIndex&) const = default;
};

struct SparsityReport {
  std::set<CellIndex> sparse_cells;
  double sparse_fraction = 0.0;
};

/// True when the trimmed, lowercased text is a missing-value marker
/// ("", "n/a", "na", "none", "-", "--", "null", "nan").
bool is_sparse_text(std::string_view text);
SparsityReport detect_sparse_cells(const Table& table);

// ---------------------------------------------------------------------------
// Contextual augmentation

enum class DescriptionKind { Caption, Row, Column };
enum class Provenance { RuleBased, Remote };

std::string provenance_name(Provenance p);

/// Everything an augmenter may look at. Row/column position is deliberately
/// absent: descriptions depend on content only.
struct AugmentRequest {
  DescriptionKind kind = DescriptionKind::Caption;
  std::string caption;
  std::vector<std::string> headers;  // all table headers
  std::string column_header;         // Column requests only
  std::vector<std::string> cells;    // the row or column being described
};

struct Description {
  std::string text;
  Provenance provenance = Provenance::RuleBased;
};

class Augmenter {
 public:
  virtual ~Augmenter() = default;
  /// Must be safe to call concurrently.
  virtual Description describe(const AugmentRequest& request) const = 0;
};

/// Deterministic template augmenter.
///   Row:     "Row with h1: v1; ...; hN: vN."
///   Column:  "Column h: v1, ..., vM."
///   Caption: "Table: <caption>. Columns: h1, ..., hN."
/// Sparse cells render as "(unknown)".
class RuleAugmenter final : public Augmenter {
 public:
  Description describe(const AugmentRequest& request) const override;
};

struct RemoteAugmenterConfig {
  std::string url;  // e.g. http://localhost:8080/generate
  std::string model = "default";
  double timeout_seconds = 30.0;
  int max_retries = 2;
  bool fallback_to_rules = true;

  /// Reads HYPERG_AUGMENT_URL; empty url when unset.
  static RemoteAugmenterConfig from_env();
};

/// The P0 instruction followed by the serialized context for one request.
std::string augmentation_prompt(const AugmentRequest& request);

/// First non-empty line, trimmed, capped at 512 characters (UTF-8 safe).
std::string clean_completion(std::string_view raw);

/// One remote description with retries: POST {"model","prompt"} and read
/// {"text"}. Throws Errc::Timeout, Errc::HttpStatus or Errc::EmptyCompletion
/// from the final attempt once 1 + max_retries attempts have failed.
std::string remote_augment_request(const AugmentRequest& request, const RemoteAugmenterConfig& config);

/// Remote augmenter; falls back to RuleAugmenter after exhausted retries
/// unless fallback is disabled (then Errc::AugmenterUnavailable).
class RemoteAugmenter final : public Augmenter {
 public:
  explicit RemoteAugmenter(RemoteAugmenterConfig config) : config_(std::move(config)) {}
  Description describe(const AugmentRequest& request) const override;

 private:
  RemoteAugmenterConfig config_;
  RuleAugmenter rules_;
};

struct AugmentedTable {
  Table base;
  std::string caption;  // augmented caption
  std::vector<std::string> row_descriptions;
  std::vector<std::string> col_descriptions;
  Provenance caption_provenance = Provenance::RuleBased;
  std::vector<Provenance> row_provenance;
  std::vector<Provenance> col_provenance;
};

/// Produces all M + N + 1 descriptions. With concurrency > 1 the requests run
/// on up to that many threads; results are assembled by index.
AugmentedTable augment(const Table& table, const Augmenter& augmenter, std::size_t concurrency = 1);

}  // namespace hyperg
