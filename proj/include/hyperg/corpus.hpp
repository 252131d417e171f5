#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyperg/model.hpp"
#include "hyperg/table.hpp"
#include "json.hpp"

namespace hyperg {

struct GoldCell {
  std::size_t row = 0;
  std::size_t col = 0;
  std::string text;
  bool operator==(const GoldCell&) const = default;
};

/// One (table, inquiry, gold) example.
struct ExperimentRecord {
  std::string id;
  TaskKind task = TaskKind::Tfv;
  Table table;
  std::string inquiry;
  std::string gold_label;         // "yes" / "no" for Tfv
  std::optional<GoldCell> gold_cell;  // TqaLite
  std::uint64_t seed = 0;
  std::string template_id;

  /// 1 for "yes", 0 for "no".
  std::size_t label() const { return gold_label == "yes" ? 1 : 0; }
  bool operator==(const ExperimentRecord&) const = default;
};

nlohmann::json record_to_json(const ExperimentRecord& r);
/// Throws Errc::MalformedJson or Errc::InvalidSpec when the gold is invalid.
ExperimentRecord record_from_json(const nlohmann::json& j);

std::string write_jsonl(const std::vector<ExperimentRecord>& records);
std::vector<ExperimentRecord> read_jsonl(std::string_view text);
std::vector<ExperimentRecord> load_corpus(const std::string& path);
void save_corpus(const std::string& path, const std::vector<ExperimentRecord>& records);

struct CorpusSpec {
  std::size_t count = 600;
  std::size_t min_rows = 3;
  std::size_t max_rows = 6;
  std::size_t min_cols = 3;  // includes the entity column
  std::size_t max_cols = 4;
  std::string caption = "player records";
  std::string entity_header = "name";
  std::vector<std::string> entities;
  /// Attribute name -> value vocabulary. Values of numeric attributes must
  /// parse as numbers.
  std::map<std::string, std::vector<std::string>> attributes;
  double sparsity = 0.2;
  /// Any of "lookup", "superlative".
  std::vector<std::string> templates = {"lookup"};
  TaskKind task = TaskKind::Tfv;
  double label_balance = 0.5;
  std::uint64_t seed = 7;

  /// Defaults used when a spec file leaves vocabularies out.
  static CorpusSpec standard();
  /// Throws Errc::InvalidSpec.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep the standard() values. Throws Errc::InvalidSpec.
  static CorpusSpec from_json(const nlohmann::json& j);
};

/// Deterministic template corpus. Tfv labels alternate yes/no around the
/// requested balance; a negative claim changes exactly one value. Cells are
/// replaced by missing-value markers with probability `sparsity`, except
/// that every claim targets a row whose entity and target cell are present.
std::vector<ExperimentRecord> gen_corpus(const CorpusSpec& spec);

/// Re-reads the table and re-evaluates the claim or answer from scratch.
/// Returns false when the stored gold disagrees.
bool check_record(const ExperimentRecord& record);

}  // namespace hyperg
