#include "hyperg/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "hyperg/error.hpp"
#include "hyperg/random.hpp"

namespace hyperg {

namespace {

const std::vector<std::string> kMarkers = {"N/A", "none", "-"};

std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

bool numeric_vocab(const std::vector<std::string>& values) {
  return !values.empty() && std::all_of(values.begin(), values.end(), [](const auto& v) { return parse_number(v).has_value(); });
}

std::string lookup_claim(const std::string& attr, const std::string& entity, const std::string& value) {
  return "the " + attr + " of " + entity + " is " + value;
}
std::string superlative_claim(const std::string& attr, const std::string& entity) {
  return "the highest " + attr + " is at " + entity;
}
std::string lookup_question(const std::string& attr, const std::string& entity) {
  return "what is the " + attr + " of " + entity + "?";
}
std::string superlative_question(const std::string& entity_header, const std::string& attr) {
  return "which " + entity_header + " has the highest " + attr + "?";
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[static_cast<std::size_t>(rng.below(items.size()))];
}

// Row holding `entity` in column 0 when exactly one does.
std::optional<std::size_t> entity_row(const Table& t, const std::string& entity) {
  std::optional<std::size_t> found;
  for (std::size_t m = 0; m < t.row_count(); ++m) {
    if (t.cell(m, 0) != entity) continue;
    if (found) return std::nullopt;
    found = m;
  }
  return found;
}

std::optional<std::size_t> header_col(const Table& t, const std::string& header) {
  for (std::size_t n = 1; n < t.col_count(); ++n)
    if (t.headers[n] == header) return n;
  return std::nullopt;
}

// Row of the unique maximum among present numeric cells of column `col`.
std::optional<std::size_t> unique_max_row(const Table& t, std::size_t col) {
  std::optional<std::size_t> best;
  double best_v = 0.0;
  bool tie = false;
  for (std::size_t m = 0; m < t.row_count(); ++m) {
    if (is_sparse_text(t.cell(m, col))) continue;
    auto v = parse_number(t.cell(m, col));
    if (!v) return std::nullopt;
    if (!best || *v > best_v) {
      best = m;
      best_v = *v;
      tie = false;
    } else if (*v == best_v) {
      tie = true;
    }
  }
  if (tie) return std::nullopt;
  return best;
}

struct Draft {
  Table table;
  std::vector<std::string> attrs;  // headers[1..]
};

Draft draft_table(const CorpusSpec& spec, Rng& rng, const std::vector<std::string>& attr_pool) {
  const std::size_t M = spec.min_rows + static_cast<std::size_t>(rng.below(spec.max_rows - spec.min_rows + 1));
  const std::size_t N = spec.min_cols + static_cast<std::size_t>(rng.below(spec.max_cols - spec.min_cols + 1));
  auto attrs = attr_pool;
  rng.shuffle(attrs);
  attrs.resize(N - 1);
  auto ents = spec.entities;
  rng.shuffle(ents);
  ents.resize(M);
  std::vector<std::string> headers{spec.entity_header};
  headers.insert(headers.end(), attrs.begin(), attrs.end());
  std::vector<std::vector<std::string>> rows(M);
  for (std::size_t m = 0; m < M; ++m) {
    rows[m].push_back(ents[m]);
    for (const auto& a : attrs) rows[m].push_back(pick(rng, spec.attributes.at(a)));
  }
  for (auto& row : rows)
    for (auto& cell : row)
      if (rng.bernoulli(spec.sparsity)) cell = pick(rng, kMarkers);
  return {make_table(spec.caption, std::move(headers), std::move(rows)), std::move(attrs)};
}

}  // namespace

nlohmann::json record_to_json(const ExperimentRecord& r) {
  nlohmann::json j = {{"id", r.id}, {"task", task_name(r.task)}, {"table", table_to_json(r.table)}, {"inquiry", r.inquiry}};
  if (r.task == TaskKind::Tfv) {
    j["gold"] = r.gold_label;
  } else {
    j["gold"] = {{"row", r.gold_cell->row}, {"col", r.gold_cell->col}, {"text", r.gold_cell->text}};
  }
  j["meta"] = {{"seed", r.seed}, {"template", r.template_id}};
  return j;
}

ExperimentRecord record_from_json(const nlohmann::json& j) {
  ExperimentRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.task = parse_task(j.at("task").get<std::string>());
    r.table = table_from_json(j.at("table"));
    r.inquiry = j.at("inquiry").get<std::string>();
    const auto& gold = j.at("gold");
    if (r.task == TaskKind::Tfv) {
      r.gold_label = gold.get<std::string>();
      if (r.gold_label != "yes" && r.gold_label != "no") throw Error(Errc::InvalidSpec, "tfv gold must be yes or no");
    } else {
      GoldCell c{gold.at("row").get<std::size_t>(), gold.at("col").get<std::size_t>(), gold.at("text").get<std::string>()};
      if (c.row >= r.table.row_count() || c.col >= r.table.col_count()) {
        throw Error(Errc::InvalidSpec, "gold cell out of range in record " + r.id);
      }
      r.gold_cell = c;
    }
    if (j.contains("meta")) {
      r.seed = j["meta"].value("seed", std::uint64_t{0});
      r.template_id = j["meta"].value("template", std::string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedJson, std::string("record: ") + e.what());
  }
  return r;
}

std::string write_jsonl(const std::vector<ExperimentRecord>& records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  return out;
}

std::vector<ExperimentRecord> read_jsonl(std::string_view text) {
  std::vector<ExperimentRecord> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = normalize_whitespace(text.substr(start, end - start));
    if (!line.empty()) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw Error(Errc::MalformedJson, "corpus line " + std::to_string(out.size() + 1));
      out.push_back(record_from_json(j));
    }
    start = end + 1;
  }
  return out;
}

std::vector<ExperimentRecord> load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot read corpus " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return read_jsonl(ss.str());
}

void save_corpus(const std::string& path, const std::vector<ExperimentRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write corpus " + path);
  out << write_jsonl(records);
  if (!out) throw Error(Errc::IoError, "write failed for " + path);
}

CorpusSpec CorpusSpec::standard() {
  CorpusSpec s;
  s.entities = {"alice", "bob",   "carol",  "dave",   "erin",   "frank",  "grace",   "heidi", "ivan",   "judy",
                "mallory", "nina", "oscar", "peggy",  "quinn",  "rupert", "sybil",   "trent", "ursula", "victor",
                "wendy", "xavier", "yolanda", "zane", "amber",  "bruno",  "cedric",  "delia", "edgar",  "fiona"};
  auto numbers = [](int lo, int hi) {
    std::vector<std::string> v;
    for (int i = lo; i <= hi; ++i) v.push_back(std::to_string(i));
    return v;
  };
  s.attributes = {{"score", numbers(100, 299)},
                  {"age", numbers(100, 299)},
                  {"rank", numbers(100, 299)},
                  {"wins", numbers(100, 299)}};
  return s;
}

void CorpusSpec::validate() const {
  auto bad = [](const std::string& why) { throw Error(Errc::InvalidSpec, why); };
  if (count == 0) bad("count must be positive");
  if (min_rows < 1 || max_rows < min_rows) bad("row range is empty");
  if (min_cols < 2 || max_cols < min_cols) bad("column range must allow an entity column plus attributes");
  if (entities.size() < max_rows) bad("need at least max_rows distinct entities");
  std::set<std::string> ent_set(entities.begin(), entities.end());
  if (ent_set.size() != entities.size()) bad("entities must be distinct");
  if (attributes.size() < max_cols - 1) bad("need at least max_cols - 1 attributes");
  for (const auto& [name, values] : attributes) {
    if (values.size() < 2) bad("attribute " + name + " needs at least two values");
    for (const auto& v : values)
      if (is_sparse_text(v) || normalize_whitespace(v) != v) bad("attribute " + name + " has an unusable value");
  }
  for (const auto& e : entities)
    if (is_sparse_text(e) || normalize_whitespace(e) != e) bad("unusable entity name");
  if (!(sparsity >= 0.0 && sparsity < 1.0)) bad("sparsity must be in [0, 1)");
  if (!(label_balance >= 0.0 && label_balance <= 1.0)) bad("label_balance must be in [0, 1]");
  if (templates.empty()) bad("no claim templates");
  for (const auto& t : templates) {
    if (t != "lookup" && t != "superlative") bad("unknown template " + t);
    if (t == "superlative") {
      std::size_t numeric = 0;
      for (const auto& [name, values] : attributes) numeric += numeric_vocab(values) ? 1 : 0;
      if (numeric == 0) bad("superlative claims need a numeric attribute");
    }
  }
}

nlohmann::json CorpusSpec::to_json() const {
  return {{"count", count},           {"rows", {min_rows, max_rows}},   {"cols", {min_cols, max_cols}},
          {"caption", caption},       {"entity_header", entity_header}, {"entities", entities},
          {"attributes", attributes}, {"sparsity", sparsity},           {"templates", templates},
          {"task", task_name(task)},  {"label_balance", label_balance}, {"seed", seed}};
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
  CorpusSpec s = standard();
  try {
    s.count = j.value("count", s.count);
    if (j.contains("rows")) {
      s.min_rows = j["rows"].at(0).get<std::size_t>();
      s.max_rows = j["rows"].at(1).get<std::size_t>();
    }
    if (j.contains("cols")) {
      s.min_cols = j["cols"].at(0).get<std::size_t>();
      s.max_cols = j["cols"].at(1).get<std::size_t>();
    }
    s.caption = j.value("caption", s.caption);
    s.entity_header = j.value("entity_header", s.entity_header);
    if (j.contains("entities")) s.entities = j["entities"].get<std::vector<std::string>>();
    if (j.contains("attributes")) s.attributes = j["attributes"].get<std::map<std::string, std::vector<std::string>>>();
    s.sparsity = j.value("sparsity", s.sparsity);
    if (j.contains("templates")) s.templates = j["templates"].get<std::vector<std::string>>();
    if (j.contains("task")) s.task = parse_task(j["task"].get<std::string>());
    s.label_balance = j.value("label_balance", s.label_balance);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidSpec, std::string("corpus spec: ") + e.what());
  } catch (const Error& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
  s.validate();
  return s;
}

std::vector<ExperimentRecord> gen_corpus(const CorpusSpec& spec) {
  spec.validate();
  auto rng = Rng::stream(spec.seed, "corpus");
  std::vector<std::string> attr_pool;
  for (const auto& [name, values] : spec.attributes) attr_pool.push_back(name);

  std::vector<ExperimentRecord> out;
  out.reserve(spec.count);
  std::size_t width = std::to_string(spec.count - 1).size();
  while (out.size() < spec.count) {
    const std::size_t i = out.size();
    const auto& tmpl = spec.templates[i % spec.templates.size()];
    // Labels follow the running target: yes when floor((i+1)b) steps up.
    const auto b = spec.label_balance;
    const bool yes = static_cast<long long>((static_cast<double>(i) + 1) * b) >
                     static_cast<long long>(static_cast<double>(i) * b);

    auto draft = draft_table(spec, rng, attr_pool);
    const Table& t = draft.table;
    ExperimentRecord r;
    r.task = spec.task;
    r.seed = spec.seed;
    r.template_id = tmpl;

    if (tmpl == "lookup") {
      std::vector<CellIndex> targets;
      for (std::size_t m = 0; m < t.row_count(); ++m)
        for (std::size_t n = 1; n < t.col_count(); ++n)
          if (!is_sparse_text(t.cell(m, 0)) && !is_sparse_text(t.cell(m, n))) targets.push_back({m, n});
      if (targets.empty()) continue;
      const auto target = pick(rng, targets);
      const auto& attr = t.headers[target.col];
      const auto& entity = t.cell(target.row, 0);
      if (spec.task == TaskKind::Tfv) {
        std::string value = t.cell(target.row, target.col);
        if (!yes) {
          std::vector<std::string> others;
          for (const auto& v : spec.attributes.at(attr))
            if (v != value) others.push_back(v);
          value = pick(rng, others);
        }
        r.inquiry = lookup_claim(attr, entity, value);
        r.gold_label = yes ? "yes" : "no";
      } else {
        r.inquiry = lookup_question(attr, entity);
        r.gold_cell = GoldCell{target.row, target.col, t.cell(target.row, target.col)};
      }
    } else {
      std::vector<std::size_t> cols;
      for (std::size_t n = 1; n < t.col_count(); ++n)
        if (numeric_vocab(spec.attributes.at(t.headers[n]))) cols.push_back(n);
      if (cols.empty()) continue;
      const std::size_t col = pick(rng, cols);
      const auto top = unique_max_row(t, col);
      if (!top || is_sparse_text(t.cell(*top, 0))) continue;
      const auto& attr = t.headers[col];
      if (spec.task == TaskKind::Tfv) {
        std::string entity = t.cell(*top, 0);
        if (!yes) {
          std::vector<std::string> others;
          for (std::size_t m = 0; m < t.row_count(); ++m)
            if (m != *top && !is_sparse_text(t.cell(m, 0))) others.push_back(t.cell(m, 0));
          if (others.empty()) continue;
          entity = pick(rng, others);
        }
        r.inquiry = superlative_claim(attr, entity);
        r.gold_label = yes ? "yes" : "no";
      } else {
        r.inquiry = superlative_question(spec.entity_header, attr);
        r.gold_cell = GoldCell{*top, 0, t.cell(*top, 0)};
      }
    }
    std::string id = std::to_string(i);
    r.id = "r" + std::string(width - id.size(), '0') + id;
    r.table = t;
    out.push_back(std::move(r));
  }
  return out;
}

bool check_record(const ExperimentRecord& record) {
  const Table& t = record.table;
  if (t.col_count() < 2) return false;
  const auto& q = record.inquiry;
  for (std::size_t n = 1; n < t.col_count(); ++n) {
    const auto& h = t.headers[n];
    if (record.task == TaskKind::Tfv) {
      const std::string sup = "the highest " + h + " is at ";
      if (q.rfind(sup, 0) == 0) {
        const auto entity = q.substr(sup.size());
        const auto top = unique_max_row(t, n);
        if (!top) return false;
        const bool truth = t.cell(*top, 0) == entity;
        return truth == (record.gold_label == "yes");
      }
      const std::string lead = "the " + h + " of ";
      if (q.rfind(lead, 0) != 0) continue;
      for (std::size_t m = 0; m < t.row_count(); ++m) {
        const auto& e = t.cell(m, 0);
        const std::string head = lead + e + " is ";
        if (is_sparse_text(e) || q.rfind(head, 0) != 0) continue;
        const auto row = entity_row(t, e);
        if (!row) return false;
        const auto value = q.substr(head.size());
        const bool truth = !is_sparse_text(t.cell(*row, n)) && t.cell(*row, n) == value;
        return truth == (record.gold_label == "yes");
      }
    } else {
      if (!record.gold_cell) return false;
      const auto& g = *record.gold_cell;
      if (g.row >= t.row_count() || g.col >= t.col_count() || t.cell(g.row, g.col) != g.text) return false;
      if (q == "which " + t.headers[0] + " has the highest " + h + "?") {
        const auto top = unique_max_row(t, n);
        return top && *top == g.row && g.col == 0;
      }
      for (std::size_t m = 0; m < t.row_count(); ++m) {
        const auto& e = t.cell(m, 0);
        if (is_sparse_text(e) || q != "what is the " + h + " of " + e + "?") continue;
        const auto row = entity_row(t, e);
        return row && *row == g.row && g.col == n && !is_sparse_text(g.text);
      }
    }
  }
  return false;
}

}  // namespace hyperg
