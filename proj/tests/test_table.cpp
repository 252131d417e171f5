#include <string>

#include "doctest.h"
#include "hyperg/error.hpp"
#include "hyperg/random.hpp"
#include "hyperg/table.hpp"

using namespace hyperg;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::IoError;
}

Table random_table(Rng& rng) {
  const std::size_t M = 1 + rng.below(6), N = 1 + rng.below(5);
  std::vector<std::string> headers;
  for (std::size_t n = 0; n < N; ++n) headers.push_back("h" + std::to_string(rng.below(100)));
  std::vector<std::vector<std::string>> rows(M);
  const char* pool[] = {"x", "N/A", "none", "a b", "q|r", "\"quoted\"", "42", "-"};
  for (auto& r : rows) {
    for (std::size_t n = 0; n < N; ++n) r.push_back(pool[rng.below(8)]);
  }
  return make_table("cap " + std::to_string(rng.below(10)), headers, rows);
}

}  // namespace

TEST_CASE("parse_table_json accepts the basic schema") {
  auto t = parse_table_json(R"({"caption":"c","headers":["a","b"],"rows":[["1","2"]]})");
  CHECK(t.row_count() == 1);
  CHECK(t.col_count() == 2);
  CHECK(t.caption == "c");
  CHECK(t.cell(0, 1) == "2");
}

TEST_CASE("parse_table_json errors") {
  CHECK(code_of([] { parse_table_json(R"({"caption":"c","headers":["a"],"rows":[["1","2"]]})"); }) ==
        Errc::RaggedRows);
  CHECK(code_of([] { parse_table_json(R"({"caption":"c","headers":[],"rows":[]})"); }) == Errc::EmptyTable);
  CHECK(code_of([] { parse_table_json("{not json"); }) == Errc::MalformedJson);
  CHECK(code_of([] { parse_table_json(R"({"caption":"c","headers":["a"]})"); }) == Errc::MalformedJson);
}

TEST_CASE("cell whitespace is normalized") {
  auto t = parse_table_json(R"({"caption":"  c  ","headers":[" a "],"rows":[["  x \t  y  "]]})");
  CHECK(t.cell(0, 0) == "x y");
  CHECK(t.headers[0] == "a");
}

TEST_CASE("parse_table_csv") {
  auto t = parse_table_csv("a,b\n1,2\n", "t");
  CHECK(t.row_count() == 1);
  CHECK(t.col_count() == 2);
  CHECK(t.caption == "t");

  auto q = parse_table_csv("a,b\n\"x,y\",2\n", "t");
  CHECK(q.cell(0, 0) == "x,y");

  auto esc = parse_table_csv("a\n\"say \"\"hi\"\"\"\n", "t");
  CHECK(esc.cell(0, 0) == "say \"hi\"");

  auto crlf = parse_table_csv("a,b\r\n1,2\r\n", "t");
  CHECK(crlf.cell(0, 1) == "2");

  CHECK(code_of([] { parse_table_csv("a,b\n1\n", "t"); }) == Errc::RaggedRows);
  CHECK(code_of([] { parse_table_csv("a,b\n\"open,2\n", "t"); }) == Errc::MalformedCsv);
  CHECK(code_of([] { parse_table_csv("a,b\n", "t"); }) == Errc::EmptyTable);
}

TEST_CASE("serialize_markdown format") {
  auto t = make_table("t", {"a", "b"}, {{"1", "2"}});
  CHECK(serialize_markdown(t) == "t\n| a | b |\n| --- | --- |\n| 1 | 2 |");
  auto p = make_table("t", {"a"}, {{"x|y"}});
  CHECK(serialize_markdown(p).find("x\\|y") != std::string::npos);
  CHECK(serialize_markdown(t) == serialize_markdown(t));
}

TEST_CASE("detect_sparse_cells") {
  auto a = detect_sparse_cells(make_table("t", {"a", "b"}, {{"x", "N/A"}}));
  CHECK(a.sparse_cells == std::set<CellIndex>{{0, 1}});
  CHECK(a.sparse_fraction == doctest::Approx(0.5));

  auto b = detect_sparse_cells(make_table("t", {"a", "b"}, {{"a", "b"}}));
  CHECK(b.sparse_cells.empty());
  CHECK(b.sparse_fraction == 0.0);

  auto c = detect_sparse_cells(make_table("t", {"a", "b"}, {{"", "none"}, {"c", "d"}}));
  CHECK(c.sparse_fraction == doctest::Approx(0.5));

  for (const char* s : {"", "n/a", "NA", " None ", "-", "--", "NULL", "NaN"}) CHECK(is_sparse_text(s));
  for (const char* s : {"0", "nil", "n", "---"}) CHECK_FALSE(is_sparse_text(s));
}

TEST_CASE("property: json round trip over random tables") {
  auto rng = Rng::stream(11, "test.table");
  for (int i = 0; i < 200; ++i) {
    auto t = random_table(rng);
    CHECK(parse_table_json(emit_table_json(t)) == t);
  }
}

TEST_CASE("property: sparsity is idempotent and permutation covariant") {
  auto rng = Rng::stream(12, "test.table");
  for (int i = 0; i < 100; ++i) {
    auto t = random_table(rng);
    auto rep = detect_sparse_cells(t);
    CHECK(detect_sparse_cells(t).sparse_cells == rep.sparse_cells);
    auto rp = rng.permutation(t.row_count());
    auto cp = rng.permutation(t.col_count());
    auto pt = permute_table(t, rp, cp);
    std::set<CellIndex> expected;
    for (std::size_t r = 0; r < rp.size(); ++r) {
      for (std::size_t c = 0; c < cp.size(); ++c) {
        if (rep.sparse_cells.count({rp[r], cp[c]})) expected.insert({r, c});
      }
    }
    CHECK(detect_sparse_cells(pt).sparse_cells == expected);
  }
}

TEST_CASE("permute_table rejects non-permutations") {
  auto t = make_table("t", {"a", "b"}, {{"1", "2"}, {"3", "4"}});
  CHECK(code_of([&] { permute_table(t, {0, 0}, {0, 1}); }) == Errc::NotAPermutation);
  CHECK(code_of([&] { permute_table(t, {0}, {0, 1}); }) == Errc::NotAPermutation);
  CHECK(permute_table(t, {1, 0}, {0, 1}).cell(0, 0) == "3");
}
