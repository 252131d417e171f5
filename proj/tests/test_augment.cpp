#include <atomic>
#include <string>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "hyperg/error.hpp"
#include "hyperg/random.hpp"
#include "hyperg/table.hpp"
#include "json.hpp"

using namespace hyperg;

namespace {

// Small local completion server; `reply` decides the body for each call.
class FakeServer {
 public:
  explicit FakeServer(std::function<std::pair<int, std::string>(const nlohmann::json&)> reply)
      : reply_(std::move(reply)) {
    server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
      ++calls;
      auto [status, text] = reply_(nlohmann::json::parse(req.body));
      res.status = status;
      res.set_content(nlohmann::json{{"text", text}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/generate"; }
  std::atomic<int> calls{0};

 private:
  std::function<std::pair<int, std::string>(const nlohmann::json&)> reply_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

RemoteAugmenterConfig config_for(const FakeServer& s, int retries = 2) {
  RemoteAugmenterConfig c;
  c.url = s.url();
  c.timeout_seconds = 5.0;
  c.max_retries = retries;
  return c;
}

}  // namespace

TEST_CASE("rule augmenter templates") {
  RuleAugmenter rules;
  AugmentRequest row{DescriptionKind::Row, "cap", {"district", "incumbent"}, "", {"california 3", "john moss"}};
  CHECK(rules.describe(row).text == "Row with district: california 3; incumbent: john moss.");

  AugmentRequest col{DescriptionKind::Column, "cap", {"a", "b"}, "b", {"1", "N/A", "3"}};
  CHECK(rules.describe(col).text == "Column b: 1, (unknown), 3.");

  AugmentRequest cap{DescriptionKind::Caption, "elections", {"a", "b"}, "", {}};
  CHECK(rules.describe(cap).text == "Table: elections. Columns: a, b.");

  AugmentRequest sparse_row{DescriptionKind::Row, "cap", {"a", "b"}, "", {"none", ""}};
  CHECK(rules.describe(sparse_row).text == "Row with a: (unknown); b: (unknown).");
}

TEST_CASE("augment produces every description, non-empty even when all cells are sparse") {
  RuleAugmenter rules;
  auto t = make_table("", {"a", "b", "c"}, {{"N/A", "-", ""}, {"none", "null", "nan"}});
  auto at = augment(t, rules);
  CHECK(at.row_descriptions.size() == 2);
  CHECK(at.col_descriptions.size() == 3);
  CHECK_FALSE(at.caption.empty());
  for (const auto& d : at.row_descriptions) CHECK_FALSE(d.empty());
  for (const auto& d : at.col_descriptions) CHECK_FALSE(d.empty());
}

TEST_CASE("property: rule descriptions depend on content, not position") {
  RuleAugmenter rules;
  auto rng = Rng::stream(3, "test.augment");
  for (int i = 0; i < 50; ++i) {
    const std::size_t M = 2 + rng.below(4), N = 1 + rng.below(4);
    std::vector<std::string> headers;
    for (std::size_t n = 0; n < N; ++n) headers.push_back("h" + std::to_string(n));
    std::vector<std::vector<std::string>> rows(M);
    for (auto& r : rows) {
      for (std::size_t n = 0; n < N; ++n) r.push_back(std::to_string(rng.below(3)));
    }
    rows[M - 1] = rows[0];
    auto at = augment(make_table("t", headers, rows), rules);
    CHECK(at.row_descriptions[0] == at.row_descriptions[M - 1]);
    std::vector<std::size_t> rid(M), cid(N);
    for (std::size_t m = 0; m < M; ++m) rid[m] = m;
    for (std::size_t n = 0; n < N; ++n) cid[n] = n;
    auto rp = rng.permutation(M);
    auto cp = rng.permutation(N);
    auto by_rows = augment(permute_table(make_table("t", headers, rows), rp, cid), rules);
    for (std::size_t r = 0; r < M; ++r) CHECK(by_rows.row_descriptions[r] == at.row_descriptions[rp[r]]);
    auto by_cols = augment(permute_table(make_table("t", headers, rows), rid, cp), rules);
    for (std::size_t c = 0; c < N; ++c) CHECK(by_cols.col_descriptions[c] == at.col_descriptions[cp[c]]);
  }
}

TEST_CASE("concurrent augmentation assembles by index") {
  RuleAugmenter rules;
  auto t = make_table("t", {"a", "b"}, {{"1", "2"}, {"3", "4"}, {"5", "6"}});
  auto serial = augment(t, rules, 1);
  auto parallel = augment(t, rules, 6);
  CHECK(serial.row_descriptions == parallel.row_descriptions);
  CHECK(serial.col_descriptions == parallel.col_descriptions);
  CHECK(serial.caption == parallel.caption);
}

TEST_CASE("clean_completion trims and caps") {
  CHECK(clean_completion("  A table of races.\n") == "A table of races.");
  CHECK(clean_completion("\n\n  second line\nthird") == "second line");
  CHECK(clean_completion(std::string(600, 'x')).size() == 512);
  CHECK(clean_completion("   \n  ").empty());
}

TEST_CASE("remote augmenter against a local server") {
  FakeServer server([](const nlohmann::json& body) {
    CHECK(body.contains("model"));
    CHECK(body.at("prompt").get<std::string>().find("elections") != std::string::npos);
    return std::pair<int, std::string>{200, "  Results of the 1972 elections\nignored"};
  });
  AugmentRequest cap{DescriptionKind::Caption, "elections", {"district"}, "", {}};
  CHECK(remote_augment_request(cap, config_for(server)) == "Results of the 1972 elections");

  RemoteAugmenter remote(config_for(server));
  auto at = augment(make_table("elections", {"district"}, {{"ca 3"}}), remote, 3);
  CHECK(at.caption_provenance == Provenance::Remote);
  CHECK(at.caption == "Results of the 1972 elections");
}

TEST_CASE("remote retries exhaust to EmptyCompletion") {
  FakeServer server([](const nlohmann::json&) { return std::pair<int, std::string>{200, ""}; });
  AugmentRequest cap{DescriptionKind::Caption, "c", {"a"}, "", {}};
  try {
    remote_augment_request(cap, config_for(server, 2));
    FAIL("expected EmptyCompletion");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyCompletion);
  }
  CHECK(server.calls == 3);
}

TEST_CASE("remote HTTP errors, fallback and unavailability") {
  FakeServer server([](const nlohmann::json&) { return std::pair<int, std::string>{503, "busy"}; });
  AugmentRequest cap{DescriptionKind::Caption, "c", {"a"}, "", {}};
  try {
    remote_augment_request(cap, config_for(server, 0));
    FAIL("expected HttpStatus");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::HttpStatus);
  }

  RemoteAugmenter with_fallback(config_for(server, 1));
  auto d = with_fallback.describe(cap);
  CHECK(d.provenance == Provenance::RuleBased);
  CHECK(d.text == RuleAugmenter().describe(cap).text);

  auto strict = config_for(server, 1);
  strict.fallback_to_rules = false;
  try {
    RemoteAugmenter(strict).describe(cap);
    FAIL("expected AugmenterUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::AugmenterUnavailable);
  }
}

TEST_CASE("unreachable endpoint reports Timeout") {
  RemoteAugmenterConfig c;
  c.url = "http://127.0.0.1:1/generate";
  c.timeout_seconds = 1.0;
  c.max_retries = 0;
  AugmentRequest cap{DescriptionKind::Caption, "c", {"a"}, "", {}};
  try {
    remote_augment_request(cap, c);
    FAIL("expected Timeout");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Timeout);
  }
}
