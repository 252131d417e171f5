#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "hyperg/embedding.hpp"
#include "hyperg/error.hpp"
#include "hyperg/grad_check.hpp"
#include "hyperg/ops.hpp"
#include "hyperg/phl.hpp"

using namespace hyperg;

namespace {

SemanticHypergraph graph_of(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::string> headers;
  for (std::size_t n = 0; n < rows[0].size(); ++n) headers.push_back("h" + std::to_string(n));
  RuleAugmenter rules;
  return build_hypergraph(augment(make_table("t", headers, rows), rules));
}

SemanticHypergraph random_graph(Rng& rng, std::size_t max_m = 6, std::size_t max_n = 5) {
  const std::size_t M = 1 + rng.below(max_m), N = 1 + rng.below(max_n);
  std::vector<std::vector<std::string>> rows(M);
  for (auto& r : rows) {
    for (std::size_t n = 0; n < N; ++n) r.push_back("w" + std::to_string(rng.below(12)));
  }
  return graph_of(rows);
}

void set(const Tensor& t, std::vector<double> v) {
  REQUIRE(t.numel() == v.size());
  std::copy(v.begin(), v.end(), t.mutable_values().begin());
}

struct Fixture {
  SemanticEmbedder embedder;
  PhlModel phl;
  Fixture(std::size_t d, std::size_t K, std::size_t L, PhlInit init, std::uint64_t seed = 1)
      : embedder([&] {
          EmbeddingConfig c;
          c.dim = d;
          c.vocab_size = 512;
          c.seed = seed;
          return c;
        }()),
        phl([&] {
          PhlConfig c;
          c.dim = d;
          c.heads = K;
          c.layers = L;
          c.init = init;
          c.seed = seed;
          return c;
        }()) {}

  PhlOutput run(Tape& tape, const SemanticHypergraph& g, const std::string& inquiry, bool log = true) const {
    auto h = embed_hypergraph(tape, embedder, g, inquiry, Mode::Eval, nullptr);
    return phl_forward(tape, phl, g, h.nodes, h.edges, h.inquiry, Mode::Eval, nullptr, log);
  }
};

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST_CASE("node_to_edge hand example: identity maps") {
  // K=1, d=2; one edge holding nodes (1,0) and (0,1)
  auto g = graph_of({{"a", "b"}});
  PhlConfig cfg;
  cfg.dim = 2;
  cfg.heads = 1;
  cfg.layers = 1;
  PhlModel model(cfg);
  auto p = model.layers()[0].node_to_edge;
  set(p.query_bank, {1, 0});
  set(p.key.weight, {1, 0, 0, 1});
  set(p.key.bias, {0, 0});
  set(p.value.weight, {1, 0, 0, 1});
  set(p.value.bias, {0, 0});
  Tape tape(false);
  auto nodes = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto edges = Tensor::zeros({4, 2});
  LayerAttention log;
  const auto pairs = incidence_lists(g);
  auto aug = node_to_edge(tape, p, cfg, nodes, edges, pairs, Mode::Eval, nullptr, &log);
  CHECK(aug.shape() == Shape{4, 4});
  CHECK(log.alpha_logits[0] == std::vector<double>{1.0, 0.0});
  // row edge 0 holds both nodes
  CHECK(log.alpha[0][0] == doctest::Approx(0.73106).epsilon(1e-4));
  CHECK(log.alpha[0][1] == doctest::Approx(0.26894).epsilon(1e-4));

  // the aggregated message, composed from the same primitives
  std::vector<std::size_t> seg{0, 0};
  auto w = ops::segment_softmax(tape, Tensor::from({2}, {1.0, 0.0}), seg);
  auto msg = ops::segment_weighted_sum(tape, w, nodes, seg, 1);
  CHECK(msg.values()[0] == doctest::Approx(0.73106).epsilon(1e-4));
  CHECK(msg.values()[1] == doctest::Approx(0.26894).epsilon(1e-4));
}

TEST_CASE("node_to_edge: single members and identical embeddings") {
  Fixture f(4, 2, 1, PhlInit::Random);
  Tape tape(false);
  auto single = f.run(tape, graph_of({{"x"}}), "q");
  for (const auto& head : attention_weights(single).layers[0].alpha) {
    for (double w : head) CHECK(w == 1.0);
  }
  auto twin = f.run(tape, graph_of({{"same", "same"}}), "q");
  const auto& log = attention_weights(twin);
  // pairs are edge-major: row edge (0,1), column edges, table edge (0,1)
  for (const auto& head : log.layers[0].alpha) {
    CHECK(head[0] == doctest::Approx(0.5));
    CHECK(head[1] == doctest::Approx(0.5));
  }
}

TEST_CASE("edge_to_node hand example") {
  // K=1, d=1, one node in three edges, edge states (1,0), (0,0), (0,0)
  auto g = graph_of({{"x"}});
  PhlConfig cfg;
  cfg.dim = 1;
  cfg.heads = 1;
  cfg.layers = 1;
  PhlModel model(cfg);
  auto p = model.layers()[0].edge_to_node;
  set(p.query.weight, {1});
  set(p.query.bias, {0});
  set(p.key.weight, {1, 1});
  set(p.key.bias, {0});
  Tape tape(false);
  LayerAttention log;
  auto edges = Tensor::from({3, 2}, {1, 0, 0, 0, 0, 0});
  edge_to_node(tape, p, cfg, edges, Tensor::from({1, 1}, {1.0}), incidence_lists(g), 1, Mode::Eval, nullptr, &log);
  CHECK(log.beta[0][0] == doctest::Approx(0.5761).epsilon(1e-4));
  CHECK(log.beta[0][1] == doctest::Approx(0.2119).epsilon(1e-4));
  CHECK(log.beta[0][2] == doctest::Approx(0.2119).epsilon(1e-4));
}

TEST_CASE("edge_to_node: zero inquiry and zero query bias give uniform weights") {
  Fixture f(4, 3, 1, PhlInit::Random);
  auto g = graph_of({{"a", "b"}, {"c", "d"}});
  auto p = f.phl.layers()[0].edge_to_node;
  for (auto& x : p.query.bias.mutable_values()) x = 0.0;
  Tape tape(false);
  auto h = embed_hypergraph(tape, f.embedder, g, "q", Mode::Eval, nullptr);
  LayerAttention log;
  const auto pairs = incidence_lists(g);
  auto aug = node_to_edge(tape, f.phl.layers()[0].node_to_edge, f.phl.config(), h.nodes, h.edges, pairs, Mode::Eval,
                          nullptr, &log);
  edge_to_node(tape, p, f.phl.config(), aug, Tensor::zeros({1, 4}), pairs, 4, Mode::Eval, nullptr, &log);
  for (const auto& head : log.beta) {
    for (double w : head) CHECK(w == doctest::Approx(1.0 / 3.0));
  }
}

TEST_CASE("phl_forward shapes, bypass and logging errors") {
  Fixture f(4, 2, 1, PhlInit::NearIdentity);
  Tape tape(false);
  auto g = graph_of({{"x"}});
  auto out = f.run(tape, g, "q", false);
  CHECK(out.table_embed.shape() == Shape{1, 8});
  for (double x : out.table_embed.values()) CHECK(std::isfinite(x));
  CHECK_THROWS_AS(attention_weights(out), Error);

  auto h = embed_hypergraph(tape, f.embedder, g, "q", Mode::Eval, nullptr);
  auto by = phl_bypass(tape, g, h.edges);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(by.values()[i] == 0.0);
    CHECK(by.values()[4 + i] == h.edges.at(g.table_edge(), i));
  }

  PhlConfig bad;
  bad.layers = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.layers = 1;
  bad.heads = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("edge_aug keeps the base semantics in its trailing half") {
  Fixture f(4, 2, 2, PhlInit::NearIdentity);
  Tape tape(false);
  auto g = graph_of({{"a", "b"}, {"c", "d"}, {"e", "f"}});
  auto h = embed_hypergraph(tape, f.embedder, g, "q", Mode::Eval, nullptr);
  auto out = phl_forward(tape, f.phl, g, h.nodes, h.edges, h.inquiry, Mode::Eval, nullptr);
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    for (std::size_t i = 0; i < 4; ++i) CHECK(out.edge_aug.at(e, 4 + i) == h.edges.at(e, i));
  }
}

TEST_CASE("property: attention rows are distributions on random graphs") {
  auto rng = Rng::stream(31, "test.phl");
  for (auto init : {PhlInit::Random, PhlInit::NearIdentity}) {
    Fixture f(8, 3, 2, init, 4);
    for (int i = 0; i < 40; ++i) {
      auto g = random_graph(rng);
      Tape tape(false);
      const auto out = f.run(tape, g, "claim " + std::to_string(i));
      const auto& log = attention_weights(out);
      for (const auto& layer : log.layers) {
        for (const auto& head : layer.alpha) {
          std::vector<double> sums(g.edge_count(), 0.0);
          for (std::size_t j = 0; j < head.size(); ++j) {
            CHECK(head[j] >= 0.0);
            sums[log.pairs.by_edge_edge[j]] += head[j];
          }
          for (double s : sums) CHECK(std::abs(s - 1.0) <= 1e-9);
        }
        for (const auto& head : layer.beta) {
          std::vector<double> sums(g.node_count(), 0.0);
          for (std::size_t j = 0; j < head.size(); ++j) sums[log.pairs.by_node_node[j]] += head[j];
          for (double s : sums) CHECK(std::abs(s - 1.0) <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("property: row and column permutations leave table_embed unchanged") {
  auto rng = Rng::stream(32, "test.phl");
  Fixture f(8, 3, 2, PhlInit::Random, 5);
  for (int i = 0; i < 30; ++i) {
    auto g = random_graph(rng);
    auto rp = rng.permutation(g.rows());
    auto cp = rng.permutation(g.cols());
    auto p = g.permute(rp, cp);
    Tape tape(false);
    auto a = f.run(tape, g, "claim", false);
    auto b = f.run(tape, p, "claim", false);
    CHECK(max_abs_diff(a.table_embed, b.table_embed) <= 1e-9);
    // node states follow the relabeling
    for (std::size_t m = 0; m < g.rows(); ++m) {
      for (std::size_t n = 0; n < g.cols(); ++n) {
        const std::size_t nv = m * g.cols() + n, ov = rp[m] * g.cols() + cp[n];
        for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(b.node_h.at(nv, k) - a.node_h.at(ov, k)) <= 1e-9);
      }
    }
    for (std::size_t m = 0; m < g.rows(); ++m) {
      for (std::size_t k = 0; k < 16; ++k) {
        CHECK(std::abs(b.edge_aug.at(g.row_edge(m), k) - a.edge_aug.at(g.row_edge(rp[m]), k)) <= 1e-9);
      }
    }
  }
}

TEST_CASE("property: alpha depends on the node alone; the inquiry moves beta only") {
  Fixture f(8, 2, 1, PhlInit::Random, 6);
  auto g = graph_of({{"a", "b", "c"}, {"d", "e", "f"}});
  Tape tape(false);
  const auto one = attention_weights(f.run(tape, g, "the score of a is 1"));
  const auto two = attention_weights(f.run(tape, g, "completely different words"));
  CHECK(one.layers[0].alpha_logits == two.layers[0].alpha_logits);
  CHECK(one.layers[0].alpha == two.layers[0].alpha);
  CHECK(one.layers[0].beta_logits != two.layers[0].beta_logits);
  // one logit per node, so every edge sees the same unnormalized score for that node
  CHECK(one.layers[0].alpha_logits[0].size() == g.node_count());
}

TEST_CASE("property: identical columns receive identical beta from symmetric nodes") {
  Fixture f(8, 2, 1, PhlInit::Random, 7);
  RuleAugmenter rules;
  auto g = build_hypergraph(augment(make_table("t", {"h", "h"}, {{"x", "x"}, {"y", "y"}}), rules));
  Tape tape(false);
  const auto log = attention_weights(f.run(tape, g, "claim"));
  // node-major pairs: node v owns entries 3v..3v+2 ordered (row, col, table)
  for (const auto& head : log.layers[0].beta) {
    CHECK(std::abs(head[1] - head[4]) <= 1e-12);
    CHECK(std::abs(head[7] - head[10]) <= 1e-12);
  }
}

TEST_CASE("PHL parameters pass grad_check") {
  Fixture f(4, 2, 1, PhlInit::Random, 8);
  auto g = graph_of({{"alice", "12"}, {"bob", "N/A"}});
  Tape setup(false);
  auto h = embed_hypergraph(setup, f.embedder, g, "the score of alice is 12", Mode::Eval, nullptr);
  auto target = Tensor::from({1, 8}, {0.3, -0.1, 0.2, 0.5, -0.4, 0.1, 0.0, 0.2});
  auto loss = [&](Tape& tape) {
    auto out = phl_forward(tape, f.phl, g, h.nodes, h.edges, h.inquiry, Mode::Eval, nullptr);
    auto diff = ops::sub(tape, out.table_embed, target);
    auto node_term = ops::sum(tape, ops::mul(tape, out.node_h, out.node_h));
    return ops::add(tape, ops::sum(tape, ops::mul(tape, diff, diff)), ops::scale(tape, node_term, 0.1));
  };
  auto report = grad_check(loss, f.phl.parameters());
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("attention JSON matches the dump schema") {
  Fixture f(4, 2, 2, PhlInit::NearIdentity);
  auto g = graph_of({{"a", "b"}, {"c", "d"}});
  Tape tape(false);
  auto j = attention_to_json(attention_weights(f.run(tape, g, "q")), g);
  REQUIRE(j.at("layers").size() == 2);
  const auto& l0 = j.at("layers")[0];
  CHECK(l0.at("alpha").size() == g.edge_count());
  CHECK(l0.at("beta").size() == g.node_count());
  for (auto& [node, list] : l0.at("beta").items()) {
    double s = 0.0;
    for (const auto& e : list) s += e.at("weight").get<double>();
    CHECK(std::abs(s - 1.0) <= 1e-9);
    CHECK(list.size() == 3);
  }
  CHECK(l0.at("head_avg").at("node_table").size() == g.node_count());
  CHECK(l0.at("head_avg").at("node_column").size() == g.node_count());
  CHECK(l0.at("head_avg").at("node_column")[0].size() == g.cols());
  CHECK(l0.at("per_head").size() == 2);
}

TEST_CASE("near-identity and random inits are both deterministic per seed") {
  for (auto init : {PhlInit::Random, PhlInit::NearIdentity}) {
    Fixture a(4, 2, 2, init, 9), b(4, 2, 2, init, 9);
    auto pa = a.phl.parameters(), pb = b.phl.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].name == pb[i].name);
      CHECK(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(), pb[i].tensor.values().begin()));
    }
  }
  CHECK(parse_phl_init(phl_init_name(PhlInit::NearIdentity)) == PhlInit::NearIdentity);
  CHECK_THROWS_AS(parse_phl_init("bogus"), Error);
}
