#include "hyperg/layers.hpp"

#include <cmath>

#include "hyperg/ops.hpp"

namespace hyperg {

Linear Linear::uniform(std::size_t in, std::size_t out, Rng& rng, Dtype dtype) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out), b(out);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  for (auto& v : b) v = rng.uniform(-bound, bound);
  return {Tensor::parameter({in, out}, std::move(w), dtype), Tensor::parameter({out}, std::move(b), dtype)};
}

Linear Linear::zeros(std::size_t in, std::size_t out, Dtype dtype) {
  return {Tensor::parameter({in, out}, std::vector<double>(in * out, 0.0), dtype),
          Tensor::parameter({out}, std::vector<double>(out, 0.0), dtype)};
}

Tensor Linear::forward(Tape& tape, const Tensor& x) const { return ops::linear(tape, x, weight, bias); }

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNormParams LayerNormParams::identity(std::size_t d, Dtype dtype) {
  return {Tensor::parameter({d}, std::vector<double>(d, 1.0), dtype),
          Tensor::parameter({d}, std::vector<double>(d, 0.0), dtype)};
}

Tensor LayerNormParams::forward(Tape& tape, const Tensor& x, double eps) const {
  return ops::layer_norm(tape, x, gamma, beta, eps);
}

void LayerNormParams::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

TransformerBlock TransformerBlock::init(std::size_t d, std::size_t hidden, Rng& rng, Dtype dtype) {
  TransformerBlock b;
  b.ln1 = LayerNormParams::identity(d, dtype);
  b.ff1 = Linear::uniform(d, hidden, rng, dtype);
  b.ff2 = Linear::uniform(hidden, d, rng, dtype);
  b.ln2 = LayerNormParams::identity(d, dtype);
  return b;
}

Tensor TransformerBlock::forward(Tape& tape, const Tensor& h, double dropout_rate, Mode mode, Rng* rng) const {
  auto x = ln1.forward(tape, h);
  x = ff2.forward(tape, ops::relu(tape, ff1.forward(tape, x)));
  x = ops::dropout(tape, x, dropout_rate, mode, rng);
  return ln2.forward(tape, ops::add(tape, h, x));
}

void TransformerBlock::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  ln1.collect(prefix + ".ln1", out);
  ff1.collect(prefix + ".ff1", out);
  ff2.collect(prefix + ".ff2", out);
  ln2.collect(prefix + ".ln2", out);
}

}  // namespace hyperg
