#include <algorithm>
#include <cstdlib>
#include <future>

#include "httplib.h"
#include "hyperg/error.hpp"
#include "hyperg/table.hpp"

namespace hyperg {

namespace {

constexpr std::size_t kCompletionCap = 512;

// Augmentation instruction sent ahead of every request's context.
constexpr std::string_view kAugmentInstruction =
    "You will be given with the table caption and headers. Please enhance the caption/describe the given "
    "row/column corresponding to the table content.";

std::string render_value(const std::string& cell) { return is_sparse_text(cell) ? "(unknown)" : cell; }

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string_view kind_name(DescriptionKind kind) {
  switch (kind) {
    case DescriptionKind::Caption:
      return "caption";
    case DescriptionKind::Row:
      return "row";
    case DescriptionKind::Column:
      return "column";
  }
  return "caption";
}

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(Errc::InvalidConfig, "augmenter URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::string attempt_once(const AugmentRequest& request, const RemoteAugmenterConfig& config) {
  const Endpoint ep = split_url(config.url);
  httplib::Client client(ep.origin);
  const auto whole = static_cast<time_t>(config.timeout_seconds);
  const auto micros = static_cast<time_t>((config.timeout_seconds - static_cast<double>(whole)) * 1e6);
  client.set_connection_timeout(whole, micros);
  client.set_read_timeout(whole, micros);
  client.set_write_timeout(whole, micros);

  const nlohmann::json body{{"model", config.model}, {"prompt", augmentation_prompt(request)}};
  auto res = client.Post(ep.path, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::Timeout, "request to " + config.url + " failed: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw Error(Errc::HttpStatus, "status " + std::to_string(res->status));
  }
  std::string text;
  try {
    auto reply = nlohmann::json::parse(res->body);
    if (reply.is_object() && reply.contains("text") && reply["text"].is_string()) text = reply["text"];
  } catch (const nlohmann::json::exception&) {
    // an unparseable body counts as an empty completion
  }
  text = clean_completion(text);
  if (text.empty()) throw Error(Errc::EmptyCompletion, "no text in completion");
  return text;
}

}  // namespace

std::string provenance_name(Provenance p) { return p == Provenance::Remote ? "remote" : "rule"; }

Description RuleAugmenter::describe(const AugmentRequest& request) const {
  switch (request.kind) {
    case DescriptionKind::Row: {
      std::vector<std::string> pairs;
      for (std::size_t i = 0; i < request.cells.size() && i < request.headers.size(); ++i) {
        pairs.push_back(request.headers[i] + ": " + render_value(request.cells[i]));
      }
      return {"Row with " + join(pairs, "; ") + ".", Provenance::RuleBased};
    }
    case DescriptionKind::Column: {
      std::vector<std::string> values;
      for (const auto& c : request.cells) values.push_back(render_value(c));
      return {"Column " + request.column_header + ": " + join(values, ", ") + ".", Provenance::RuleBased};
    }
    case DescriptionKind::Caption:
      return {"Table: " + request.caption + ". Columns: " + join(request.headers, ", ") + ".", Provenance::RuleBased};
  }
  return {};
}

RemoteAugmenterConfig RemoteAugmenterConfig::from_env() {
  RemoteAugmenterConfig config;
  if (const char* url = std::getenv("HYPERG_AUGMENT_URL")) config.url = url;
  return config;
}

std::string augmentation_prompt(const AugmentRequest& request) {
  std::string prompt(kAugmentInstruction);
  prompt += "\nTarget: ";
  prompt += kind_name(request.kind);
  prompt += "\nCaption: " + request.caption;
  prompt += "\nHeaders: " + join(request.headers, " | ");
  if (request.kind == DescriptionKind::Column) prompt += "\nColumn: " + request.column_header;
  if (request.kind != DescriptionKind::Caption) prompt += "\nCells: " + join(request.cells, " | ");
  return prompt;
}

std::string clean_completion(std::string_view raw) {
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    const auto nl = raw.find('\n', pos);
    const auto line = raw.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    std::string trimmed = normalize_whitespace(line);
    if (!trimmed.empty()) {
      if (trimmed.size() > kCompletionCap) {
        std::size_t cut = kCompletionCap;
        // back off to a UTF-8 lead byte
        while (cut > 0 && (static_cast<unsigned char>(trimmed[cut]) & 0xC0) == 0x80) --cut;
        trimmed.resize(cut);
      }
      return trimmed;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return {};
}

std::string remote_augment_request(const AugmentRequest& request, const RemoteAugmenterConfig& config) {
  if (config.url.empty()) throw Error(Errc::InvalidConfig, "no augmenter URL (set HYPERG_AUGMENT_URL)");
  const int attempts = 1 + std::max(0, config.max_retries);
  for (int i = 0;; ++i) {
    try {
      return attempt_once(request, config);
    } catch (const Error& e) {
      const bool retryable =
          e.code() == Errc::Timeout || e.code() == Errc::HttpStatus || e.code() == Errc::EmptyCompletion;
      if (!retryable || i + 1 >= attempts) throw;
    }
  }
}

Description RemoteAugmenter::describe(const AugmentRequest& request) const {
  try {
    return {remote_augment_request(request, config_), Provenance::Remote};
  } catch (const Error& e) {
    if (!config_.fallback_to_rules) {
      throw Error(Errc::AugmenterUnavailable, std::string("remote augmenter exhausted retries: ") + e.what());
    }
    return rules_.describe(request);
  }
}

AugmentedTable augment(const Table& table, const Augmenter& augmenter, std::size_t concurrency) {
  const std::size_t m_rows = table.row_count(), n_cols = table.col_count();
  std::vector<AugmentRequest> requests;
  requests.reserve(m_rows + n_cols + 1);
  for (std::size_t m = 0; m < m_rows; ++m) {
    requests.push_back({DescriptionKind::Row, table.caption, table.headers, {}, table.cells[m]});
  }
  for (std::size_t n = 0; n < n_cols; ++n) {
    std::vector<std::string> column;
    for (std::size_t m = 0; m < m_rows; ++m) column.push_back(table.cells[m][n]);
    requests.push_back({DescriptionKind::Column, table.caption, table.headers, table.headers[n], std::move(column)});
  }
  requests.push_back({DescriptionKind::Caption, table.caption, table.headers, {}, {}});

  std::vector<Description> results(requests.size());
  if (concurrency <= 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) results[i] = augmenter.describe(requests[i]);
  } else {
    for (std::size_t start = 0; start < requests.size(); start += concurrency) {
      const std::size_t stop = std::min(requests.size(), start + concurrency);
      std::vector<std::future<Description>> pending;
      for (std::size_t i = start; i < stop; ++i) {
        pending.push_back(std::async(std::launch::async, [&, i] { return augmenter.describe(requests[i]); }));
      }
      for (std::size_t i = start; i < stop; ++i) results[i] = pending[i - start].get();
    }
  }

  RuleAugmenter rules;
  auto ensure_text = [&](std::size_t i) {
    // Augmenters may return blank text; rule templates are never blank.
    if (normalize_whitespace(results[i].text).empty()) results[i] = rules.describe(requests[i]);
  };

  AugmentedTable out;
  out.base = table;
  for (std::size_t m = 0; m < m_rows; ++m) {
    ensure_text(m);
    out.row_descriptions.push_back(results[m].text);
    out.row_provenance.push_back(results[m].provenance);
  }
  for (std::size_t n = 0; n < n_cols; ++n) {
    ensure_text(m_rows + n);
    out.col_descriptions.push_back(results[m_rows + n].text);
    out.col_provenance.push_back(results[m_rows + n].provenance);
  }
  const std::size_t cap = m_rows + n_cols;
  out.caption = normalize_whitespace(results[cap].text);
  out.caption_provenance = results[cap].provenance;
  if (out.caption.empty()) {
    out.caption = table.caption.empty() ? rules.describe(requests[cap]).text : table.caption;
    out.caption_provenance = Provenance::RuleBased;
  }
  return out;
}

}  // namespace hyperg
