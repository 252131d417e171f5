#include <cmath>
#include <limits>

#include "doctest.h"
#include "hyperg/error.hpp"
#include "hyperg/grad_check.hpp"
#include "hyperg/ops.hpp"

using namespace hyperg;

namespace {

Tensor param(Shape s, std::vector<double> v) { return Tensor::parameter(std::move(s), std::move(v)); }

Tensor random_param(Shape s, Rng& rng) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return param(std::move(s), std::move(v));
}

void check_vals(const Tensor& t, std::vector<double> expected, double tol = 1e-12) {
  REQUIRE(t.numel() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(t.values()[i] == doctest::Approx(expected[i]).epsilon(tol));
}

double max_err(const std::function<Tensor(Tape&)>& f, std::vector<NamedTensor> ps) {
  return grad_check(f, std::move(ps)).max_rel_error;
}

}  // namespace

TEST_CASE("matmul examples") {
  Tape tape;
  auto a = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  check_vals(ops::matmul(tape, a, eye), {1, 2, 3, 4});
  check_vals(ops::matmul(tape, Tensor::from({1, 2}, {1, 0}), Tensor::from({2, 1}, {2, 5})), {2});

  auto x = param({1, 2}, {1, 1});
  auto b = Tensor::from({2, 1}, {3, 4});
  tape.backward(ops::sum(tape, ops::matmul(tape, x, b)));
  check_vals(x, {1, 1});
  CHECK(x.grad()[0] == 3.0);
  CHECK(x.grad()[1] == 4.0);

  CHECK_THROWS_AS(ops::matmul(tape, a, Tensor::from({3, 1}, {1, 2, 3})), Error);
}

TEST_CASE("leaky_relu examples") {
  Tape tape;
  check_vals(ops::leaky_relu(tape, Tensor::from({1}, {2.0})), {2.0});
  check_vals(ops::leaky_relu(tape, Tensor::from({1}, {-1.0}), 0.01), {-0.01});
  auto x = param({1}, {-1.0});
  tape.backward(ops::leaky_relu(tape, x, 0.01));
  CHECK(x.grad()[0] == doctest::Approx(0.01));
}

TEST_CASE("segment_softmax examples") {
  Tape tape;
  std::vector<std::size_t> one{0, 0, 0};
  check_vals(ops::segment_softmax(tape, Tensor::from({3}, {0, 0, 0}), one), {1.0 / 3, 1.0 / 3, 1.0 / 3});
  std::vector<std::size_t> two{0, 0};
  check_vals(ops::segment_softmax(tape, Tensor::from({2}, {std::log(2.0), 0}), two), {2.0 / 3, 1.0 / 3});
  std::vector<std::size_t> seg{0, 0, 1};
  check_vals(ops::segment_softmax(tape, Tensor::from({3}, {5, 5, 1}), seg), {0.5, 0.5, 1.0});
  std::vector<std::size_t> gap{0, 2};
  CHECK_THROWS_AS(ops::segment_softmax(tape, Tensor::from({2}, {1, 1}), gap), Error);
  // large logits stay finite through max subtraction
  check_vals(ops::segment_softmax(tape, Tensor::from({2}, {1000, 1000}), two), {0.5, 0.5});
}

TEST_CASE("layer_norm examples") {
  Tape tape;
  auto ones = Tensor::from({3}, {1, 1, 1});
  auto zeros = Tensor::from({3}, {0, 0, 0});
  auto y = ops::layer_norm(tape, Tensor::from({1, 3}, {1, 2, 3}), ones, zeros);
  check_vals(y, {-1.22474, 0.0, 1.22474}, 1e-4);
  check_vals(ops::layer_norm(tape, Tensor::from({1, 3}, {7, 7, 7}), ones, zeros), {0, 0, 0});
  check_vals(ops::layer_norm(tape, Tensor::from({1, 3}, {1, -4, 9}), zeros, Tensor::from({3}, {5, 5, 5})), {5, 5, 5});
  CHECK_THROWS_AS(ops::layer_norm(tape, Tensor::from({1, 2}, {1, 2}), ones, zeros), Error);
}

TEST_CASE("dropout examples") {
  Tape tape;
  auto x = Tensor::from({1, 6}, {1, 2, 3, 4, 5, 6});
  Rng rng(1);
  check_vals(ops::dropout(tape, x, 0.0, Mode::Train, &rng), {1, 2, 3, 4, 5, 6});
  check_vals(ops::dropout(tape, x, 0.9, Mode::Eval, nullptr), {1, 2, 3, 4, 5, 6});
  Rng r1(42), r2(42);
  auto a = ops::dropout(tape, x, 0.5, Mode::Train, &r1);
  auto b = ops::dropout(tape, x, 0.5, Mode::Train, &r2);
  CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
  for (std::size_t i = 0; i < 6; ++i) CHECK((a.values()[i] == 0.0 || a.values()[i] == 2.0 * x.values()[i]));
}

TEST_CASE("cross_entropy examples") {
  Tape tape;
  CHECK(ops::cross_entropy(tape, Tensor::from({2}, {0, 0}), 0).item() == doctest::Approx(0.693147).epsilon(1e-6));
  const double tiny = ops::cross_entropy(tape, Tensor::from({2}, {10, -10}), 0).item();
  CHECK(tiny == doctest::Approx(-std::log1p(-1.0 / (1.0 + std::exp(20.0)))).epsilon(1e-6));
  CHECK(tiny == doctest::Approx(2.06e-9).epsilon(0.01));
  auto z = param({2}, {0, 0});
  tape.backward(ops::cross_entropy(tape, z, 0));
  CHECK(z.grad()[0] == doctest::Approx(-0.5));
  CHECK(z.grad()[1] == doctest::Approx(0.5));
  CHECK_THROWS_AS(ops::cross_entropy(tape, Tensor::from({2}, {0, 0}), 2), Error);
}

TEST_CASE("grad_check examples") {
  auto x = param({1}, {3.0});
  auto sq = [&](Tape& t) { return ops::mul(t, x, x); };
  Tape tape;
  tape.backward(sq(tape));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(max_err(sq, {{"x", x}}) < 1e-8);

  auto y = param({1}, {2.0});
  CHECK(max_err([&](Tape& t) { return ops::leaky_relu(t, y); }, {{"y", y}}) < 1e-8);
}

TEST_CASE("non-finite values are rejected") {
  Tape tape;
  auto big = Tensor::from({1}, {std::numeric_limits<double>::max()});
  CHECK_THROWS_AS(ops::scale(tape, big, 10.0), Error);
  auto nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ops::add(tape, Tensor::from({1}, {1.0}), Tensor::from({1}, {nan})), Error);
}

TEST_CASE("property: every differentiable op passes grad_check") {
  auto rng = Rng::stream(21, "test.tensor");
  for (int trial = 0; trial < 5; ++trial) {
    auto a = random_param({3, 4}, rng);
    auto b = random_param({4, 2}, rng);
    auto c = random_param({3, 4}, rng);
    auto v = random_param({4}, rng);
    auto g = random_param({4}, rng);
    auto w = random_param({6}, rng);
    auto t = random_param({5, 1}, rng);
    std::vector<std::size_t> seg{0, 0, 1, 1, 1, 2};
    std::vector<std::size_t> idx{2, 0, 2, 1};
    auto sumsq = [](Tape& tp, const Tensor& x) { return ops::sum(tp, ops::mul(tp, x, x)); };
    auto check = [](double e) { CHECK(e < 1e-4); };

    check(max_err([&](Tape& tp) { return sumsq(tp, ops::matmul(tp, a, b)); }, {{"a", a}, {"b", b}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::transpose(tp, a)); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::sub(tp, ops::add(tp, a, c), ops::mul(tp, a, c))); },
                  {{"a", a}, {"c", c}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::scale(tp, a, -1.5)); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::add_rowwise(tp, a, v)); }, {{"a", a}, {"v", v}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::linear(tp, c, b, Tensor::from({2}, {0.1, -0.2}))); },
                  {{"c", c}, {"b", b}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::reshape(tp, a, {2, 6})); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::concat_cols(tp, {a, c})); }, {{"a", a}, {"c", c}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::concat_rows(tp, {a, c})); }, {{"a", a}, {"c", c}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::slice_cols(tp, a, 1, 3)); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::slice_rows(tp, a, 1, 3)); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::gather_rows(tp, a, idx)); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::mean_rows(tp, a)); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::rowwise_dot(tp, a, c)); }, {{"a", a}, {"c", c}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::relu(tp, a)); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::leaky_relu(tp, a, 0.2)); }, {{"a", a}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::mul(tp, ops::segment_softmax(tp, w, seg), w)); }, {{"w", w}}));
    check(max_err(
        [&](Tape& tp) {
          auto vals = ops::concat_rows(tp, {a, ops::slice_rows(tp, c, 0, 3)});
          return sumsq(tp, ops::segment_weighted_sum(tp, w, vals, seg, 3));
        },
        {{"w", w}, {"a", a}, {"c", c}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::mul(tp, ops::layer_norm(tp, a, g, v), c)); },
                  {{"a", a}, {"g", g}, {"v", v}}));
    check(max_err([&](Tape& tp) { return ops::cross_entropy(tp, ops::reshape(tp, t, {5}), 3); }, {{"t", t}}));
    check(max_err([&](Tape& tp) { return sumsq(tp, ops::embedding_bag_mean(tp, a, {{0, 2}, {1}, {2, 2, 0}})); },
                  {{"a", a}}));
  }
}

TEST_CASE("property: segment_softmax sums to one per segment") {
  auto rng = Rng::stream(22, "test.tensor");
  Tape tape(false);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<std::size_t> seg(n);
    std::size_t s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0 && rng.bernoulli(0.3)) ++s;
      seg[i] = s;
    }
    std::vector<double> logits(n);
    for (auto& x : logits) x = rng.uniform(-30.0, 30.0);
    auto p = ops::segment_softmax(tape, Tensor::from({n}, logits), seg);
    std::vector<double> sums(s + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) sums[seg[i]] += p.values()[i];
    for (double x : sums) CHECK(std::abs(x - 1.0) <= 1e-12);
  }
}

TEST_CASE("property: matmul by identity and concat/slice round trip") {
  auto rng = Rng::stream(23, "test.tensor");
  Tape tape(false);
  auto a = random_param({4, 3}, rng);
  auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto ai = ops::matmul(tape, a, eye);
  CHECK(std::equal(ai.values().begin(), ai.values().end(), a.values().begin()));
  auto b = random_param({4, 2}, rng);
  auto cat = ops::concat_cols(tape, {a, b});
  auto back = ops::slice_cols(tape, cat, 0, 3);
  CHECK(std::equal(back.values().begin(), back.values().end(), a.values().begin()));
  auto back_b = ops::slice_cols(tape, cat, 3, 5);
  CHECK(std::equal(back_b.values().begin(), back_b.values().end(), b.values().begin()));
}

TEST_CASE("backward accumulates every path and clears the tape") {
  Tape tape;
  auto x = param({1}, {2.0});
  auto y = ops::add(tape, ops::mul(tape, x, x), ops::scale(tape, x, 3.0));  // x^2 + 3x
  CHECK(tape.size() > 0);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(7.0));
  CHECK(tape.size() == 0);
}

TEST_CASE("f32 tensors are rounded to float precision") {
  Tape tape(false);
  auto a = Tensor::from({1}, {0.1}, Dtype::F32);
  auto b = ops::scale(tape, a, 1.0);
  CHECK(b.values()[0] == static_cast<double>(0.1f));
}
