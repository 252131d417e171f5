#include "hyperg/table.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "hyperg/error.hpp"

namespace hyperg {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

void validate_shape(const std::vector<std::string>& headers, const std::vector<std::vector<std::string>>& rows) {
  if (headers.empty() || rows.empty()) {
    throw Error(Errc::EmptyTable, "table has " + std::to_string(rows.size()) + " rows and " +
                                      std::to_string(headers.size()) + " columns");
  }
  for (std::size_t m = 0; m < rows.size(); ++m) {
    if (rows[m].size() != headers.size()) {
      throw Error(Errc::RaggedRows, "row " + std::to_string(m) + " has " + std::to_string(rows[m].size()) +
                                        " cells, expected " + std::to_string(headers.size()));
    }
  }
}

void check_permutation(const std::vector<std::size_t>& perm, std::size_t n, const char* what) {
  if (perm.size() != n) throw Error(Errc::NotAPermutation, std::string(what) + " permutation has wrong length");
  std::vector<bool> seen(n, false);
  for (auto p : perm) {
    if (p >= n || seen[p]) throw Error(Errc::NotAPermutation, std::string(what) + " permutation is not a bijection");
    seen[p] = true;
  }
}

std::string escape_pipes(const std::string& cell) {
  std::string out;
  out.reserve(cell.size());
  for (char c : cell) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(c);
  }
  return out;
}

Table make_table(std::string caption, std::vector<std::string> headers, std::vector<std::vector<std::string>> rows) {
  validate_shape(headers, rows);
  Table t;
  t.caption = normalize_whitespace(caption);
  for (auto& h : headers) t.headers.push_back(normalize_whitespace(h));
  t.cells.reserve(rows.size());
  for (auto& row : rows) {
    std::vector<std::string> r;
    r.reserve(row.size());
    for (auto& c : row) r.push_back(normalize_whitespace(c));
    t.cells.push_back(std::move(r));
  }
  return t;
}

Table table_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw Error(Errc::MalformedJson, "table must be a JSON object");
    std::string caption = j.value("caption", std::string{});
    if (!j.contains("headers") || !j.at("headers").is_array()) {
      throw Error(Errc::MalformedJson, "\"headers\" must be an array of strings");
    }
    if (!j.contains("rows") || !j.at("rows").is_array()) {
      throw Error(Errc::MalformedJson, "\"rows\" must be an array of arrays");
    }
    auto headers = j.at("headers").get<std::vector<std::string>>();
    auto rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
    return make_table(std::move(caption), std::move(headers), std::move(rows));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedJson, e.what());
  }
}

Table parse_table_json(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::MalformedJson, e.what());
  }
  return table_from_json(j);
}

nlohmann::json table_to_json(const Table& table) {
  return nlohmann::json{{"caption", table.caption}, {"headers", table.headers}, {"rows", table.cells}};
}

std::string emit_table_json(const Table& table) { return table_to_json(table).dump(); }

Table parse_table_csv(std::string_view bytes, std::string caption) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool after_quote = false;  // closing quote seen; only a delimiter may follow
  bool record_has_content = false;

  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
    after_quote = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
    record_has_content = false;
  };

  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const char c = bytes[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < bytes.size() && bytes[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == ',') {
      end_field();
      record_has_content = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < bytes.size() && bytes[i + 1] == '\n') ++i;
      if (record_has_content || !field.empty() || field_was_quoted) {
        end_record();
      } else {
        // blank line
        field.clear();
      }
    } else if (c == '"') {
      if (!field.empty() || field_was_quoted) {
        throw Error(Errc::MalformedCsv, "unexpected quote inside an unquoted field");
      }
      in_quotes = true;
      field_was_quoted = true;
      record_has_content = true;
    } else {
      if (after_quote) throw Error(Errc::MalformedCsv, "text after a closing quote");
      field += c;
      record_has_content = true;
    }
  }
  if (in_quotes) throw Error(Errc::MalformedCsv, "unterminated quoted field");
  if (record_has_content || !field.empty() || field_was_quoted) end_record();

  if (records.empty()) throw Error(Errc::EmptyTable, "CSV has no header record");
  std::vector<std::string> headers = std::move(records.front());
  records.erase(records.begin());
  return make_table(std::move(caption), std::move(headers), std::move(records));
}

std::string serialize_markdown(const Table& table) {
  std::string out = table.caption;
  out += "\n|";
  for (const auto& h : table.headers) out += " " + escape_pipes(h) + " |";
  out += "\n|";
  for (std::size_t n = 0; n < table.col_count(); ++n) out += " --- |";
  for (const auto& row : table.cells) {
    out += "\n|";
    for (const auto& c : row) out += " " + escape_pipes(c) + " |";
  }
  return out;
}

Table permute_table(const Table& table, const std::vector<std::size_t>& row_perm,
                    const std::vector<std::size_t>& col_perm) {
  check_permutation(row_perm, table.row_count(), "row");
  check_permutation(col_perm, table.col_count(), "column");
  Table out;
  out.caption = table.caption;
  for (auto c : col_perm) out.headers.push_back(table.headers[c]);
  for (auto r : row_perm) {
    std::vector<std::string> row;
    for (auto c : col_perm) row.push_back(table.cells[r][c]);
    out.cells.push_back(std::move(row));
  }
  return out;
}

bool is_sparse_text(std::string_view text) {
  static const std::array<std::string_view, 8> kMarkers = {"", "n/a", "na", "none", "-", "--", "null", "nan"};
  std::string lowered = normalize_whitespace(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::find(kMarkers.begin(), kMarkers.end(), lowered) != kMarkers.end();
}

SparsityReport detect_sparse_cells(const Table& table) {
  SparsityReport report;
  for (std::size_t m = 0; m < table.row_count(); ++m)
    for (std::size_t n = 0; n < table.col_count(); ++n)
      if (is_sparse_text(table.cells[m][n])) report.sparse_cells.insert({m, n});
  const double total = static_cast<double>(table.row_count() * table.col_count());
  report.sparse_fraction = total > 0 ? static_cast<double>(report.sparse_cells.size()) / total : 0.0;
  return report;
}

}  // namespace hyperg
