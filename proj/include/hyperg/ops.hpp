#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hyperg/random.hpp"
#include "hyperg/tensor.hpp"

// Differentiable primitives. Every op takes the tape that records it; a
// non-recording tape evaluates values only.
namespace hyperg::ops {

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
/// a[n x d] + v broadcast over rows; v holds d values (any shape).
Tensor add_rowwise(Tape& tape, const Tensor& a, const Tensor& v);
/// x * W + b for x[n x in], W[in x out], b holding out values.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end);
/// Row gather; a rank-1 input yields a rank-1 output.
Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const std::size_t> index);

Tensor sum(Tape& tape, const Tensor& a);
/// Mean over rows of a[n x d], shape [1 x d].
Tensor mean_rows(Tape& tape, const Tensor& a);
/// Per-row dot product of a[n x d] and b[n x d], shape [n].
Tensor rowwise_dot(Tape& tape, const Tensor& a, const Tensor& b);

Tensor relu(Tape& tape, const Tensor& x);
Tensor leaky_relu(Tape& tape, const Tensor& x, double slope = 0.01);

/// Softmax within each segment of a flat logit vector. Segment labels must
/// cover [0, S) with no empty segment. Uses max subtraction per segment.
Tensor segment_softmax(Tape& tape, const Tensor& logits, std::span<const std::size_t> segment_ids);

/// out[s] = sum of weights[i] * values[i] over i with segment_ids[i] == s,
/// accumulated in increasing i. Shape [num_segments x d].
Tensor segment_weighted_sum(Tape& tape, const Tensor& weights, const Tensor& values,
                            std::span<const std::size_t> segment_ids, std::size_t num_segments);

/// Per-row layer normalization over the trailing dimension d.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Inverted dropout. Train mode draws the mask from `rng`; Eval is identity.
Tensor dropout(Tape& tape, const Tensor& x, double rate, Mode mode, Rng* rng);

/// -log softmax(logits)[target] for a flat logit vector with C >= 2 entries.
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t target);

/// Mean of the embedding rows for each id list, shape [n x d]. Every list
/// must be nonempty.
Tensor embedding_bag_mean(Tape& tape, const Tensor& table,
                          const std::vector<std::vector<std::int32_t>>& ids);

}  // namespace hyperg::ops
