#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hyperg/random.hpp"
#include "hyperg/tensor.hpp"

namespace hyperg {

/// y = x W + b with W stored [in x out].
struct Linear {
  Tensor weight;
  Tensor bias;

  /// Weights and bias ~ Uniform(-1/sqrt(in), 1/sqrt(in)).
  static Linear uniform(std::size_t in, std::size_t out, Rng& rng, Dtype dtype);
  static Linear zeros(std::size_t in, std::size_t out, Dtype dtype);

  std::size_t in() const { return weight.rows(); }
  std::size_t out() const { return weight.cols(); }
  Tensor forward(Tape& tape, const Tensor& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  static LayerNormParams identity(std::size_t d, Dtype dtype);
  Tensor forward(Tape& tape, const Tensor& x, double eps = 1e-5) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Row-wise block: LN2(H + Dropout(FF(LN1(H)))), FF = Linear -> ReLU -> Linear.
struct TransformerBlock {
  LayerNormParams ln1;
  Linear ff1;
  Linear ff2;
  LayerNormParams ln2;

  static TransformerBlock init(std::size_t d, std::size_t hidden, Rng& rng, Dtype dtype);
  Tensor forward(Tape& tape, const Tensor& h, double dropout_rate, Mode mode, Rng* rng) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

}  // namespace hyperg
