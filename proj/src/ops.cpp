#include "hyperg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hyperg/error.hpp"

namespace hyperg::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

[[noreturn]] void mismatch(const std::string& op, const Tensor& a, const Tensor& b) {
  throw Error(Errc::ShapeMismatch,
              op + ": " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

void require_rank2(const std::string& op, const Tensor& a) {
  if (a.rank() != 2) throw Error(Errc::ShapeMismatch, op + " needs a matrix, got " + shape_string(a.shape()));
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) mismatch(op, a, b);
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
  if (b.rows() != q) mismatch("matmul", a, b);
  std::vector<double> out(p * r);
  MutMap(out.data(), p, r).noalias() = ConstMap(a.values().data(), p, q) * ConstMap(b.values().data(), q, r);
  return tape.emit({p, r}, std::move(out), {&a, &b}, [a, b, p, q, r](std::span<const double> g) mutable {
    ConstMap gm(g.data(), p, r);
    if (a.requires_grad()) {
      MutMap(a.mutable_grad().data(), p, q).noalias() += gm * ConstMap(b.values().data(), q, r).transpose();
    }
    if (b.requires_grad()) {
      MutMap(b.mutable_grad().data(), q, r).noalias() += ConstMap(a.values().data(), p, q).transpose() * gm;
    }
  });
}

Tensor transpose(Tape& tape, const Tensor& a) {
  require_rank2("transpose", a);
  const std::size_t p = a.rows(), q = a.cols();
  std::vector<double> out(p * q);
  const auto av = a.values();
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < q; ++j) out[j * p + i] = av[i * q + j];
  return tape.emit({q, p}, std::move(out), {&a}, [a, p, q](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < q; ++j) ga[i * q + j] += g[j * p + i];
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return tape.emit(a.shape(), std::move(out), {&a, &b}, [a, b](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return tape.emit(a.shape(), std::move(out), {&a, &b}, [a, b](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.emit(a.shape(), std::move(out), {&a, &b}, [a, b](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      const auto bv = b.values();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      const auto av = a.values();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return tape.emit(a.shape(), std::move(out), {&a}, [a, factor](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor add_rowwise(Tape& tape, const Tensor& a, const Tensor& v) {
  const std::size_t n = a.rows(), d = a.cols();
  if (a.rank() != 2 || v.numel() != d) mismatch("add_rowwise", a, v);
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto vv = v.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] += vv[j];
  return tape.emit(a.shape(), std::move(out), {&a, &v}, [a, v, n, d](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (v.requires_grad()) {
      auto gv = v.mutable_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gv[j] += g[i * d + j];
    }
  });
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_rowwise(tape, matmul(tape, x, weight), bias);
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw Error(Errc::ShapeMismatch, "reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return tape.emit(std::move(shape), std::move(out), {&a}, [a](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat_cols of nothing");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2("concat_cols", p);
    if (p.rows() != n) mismatch("concat_cols", parts[0], p);
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto pv = p.values();
    const std::size_t c = p.cols();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * total + offset + j] = pv[i * c + j];
    offset += c;
  }
  return tape.emit({n, total}, std::move(out), parts, [parts, n, total](std::span<const double> g) mutable {
    std::size_t off = 0;
    for (auto& p : parts) {
      const std::size_t c = p.cols();
      if (p.requires_grad()) {
        auto gp = p.mutable_grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off + j];
      }
      off += c;
    }
  });
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat_rows of nothing");
  const std::size_t d = parts[0].cols();
  std::size_t total = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    require_rank2("concat_rows", p);
    if (p.cols() != d) mismatch("concat_rows", parts[0], p);
    total += p.rows();
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return tape.emit({total, d}, std::move(out), parts, [parts](std::span<const double> g) mutable {
    std::size_t off = 0;
    for (auto& p : parts) {
      const std::size_t n = p.numel();
      if (p.requires_grad()) {
        auto gp = p.mutable_grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

Tensor slice_cols(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_cols", a);
  const std::size_t n = a.rows(), d = a.cols();
  if (begin > end || end > d) {
    throw Error(Errc::IndexOutOfRange, "slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                                           ") of " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(n * w);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * d + begin + j];
  return tape.emit({n, w}, std::move(out), {&a}, [a, n, d, w, begin](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * d + begin + j] += g[i * w + j];
  });
}

Tensor slice_rows(Tape& tape, const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank2("slice_rows", a);
  const std::size_t n = a.rows(), d = a.cols();
  if (begin > end || end > n) {
    throw Error(Errc::IndexOutOfRange, "slice_rows [" + std::to_string(begin) + "," + std::to_string(end) +
                                           ") of " + shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin() + begin * d, a.values().begin() + end * d);
  return tape.emit({end - begin, d}, std::move(out), {&a}, [a, begin, d](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * d + i] += g[i];
  });
}

Tensor gather_rows(Tape& tape, const Tensor& a, std::span<const std::size_t> index) {
  const std::size_t n = a.rows();
  const std::size_t d = a.rank() == 2 ? a.cols() : a.numel() / std::max<std::size_t>(n, 1);
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size() * d);
  const auto av = a.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) throw Error(Errc::IndexOutOfRange, "gather_rows index " + std::to_string(idx[r]));
    std::copy_n(av.begin() + idx[r] * d, d, out.begin() + r * d);
  }
  Shape shape = a.rank() == 2 ? Shape{idx.size(), d} : Shape{idx.size()};
  return tape.emit(std::move(shape), std::move(out), {&a}, [a, idx = std::move(idx), d](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.mutable_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) ga[idx[r] * d + j] += g[r * d + j];
  });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return tape.emit({1}, {s}, {&a}, [a](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    for (auto& x : a.mutable_grad()) x += g[0];
  });
}

Tensor mean_rows(Tape& tape, const Tensor& a) {
  require_rank2("mean_rows", a);
  const std::size_t n = a.rows(), d = a.cols();
  if (n == 0) throw Error(Errc::ShapeMismatch, "mean_rows of an empty matrix");
  std::vector<double> out(d, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += av[i * d + j];
  for (auto& v : out) v /= static_cast<double>(n);
  return tape.emit({1, d}, std::move(out), {&a}, [a, n, d](std::span<const double> g) mutable {
    if (!a.requires_grad()) return;
    auto ga = a.mutable_grad();
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[j] * inv;
  });
}

Tensor rowwise_dot(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("rowwise_dot", a, b);
  require_rank2("rowwise_dot", a);
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n, 0.0);
  const auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i] += av[i * d + j] * bv[i * d + j];
  return tape.emit({n}, std::move(out), {&a, &b}, [a, b, n, d](std::span<const double> g) mutable {
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      const auto bv = b.values();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[i] * bv[i * d + j];
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      const auto av = a.values();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gb[i * d + j] += g[i] * av[i * d + j];
    }
  });
}

Tensor relu(Tape& tape, const Tensor& x) { return leaky_relu(tape, x, 0.0); }

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  std::vector<double> out(x.values().begin(), x.values().end());
  for (auto& v : out)
    if (!(v > 0.0)) v *= slope;
  return tape.emit(x.shape(), std::move(out), {&x}, [x, slope](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.mutable_grad();
    const auto xv = x.values();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Tensor segment_softmax(Tape& tape, const Tensor& logits, std::span<const std::size_t> segment_ids) {
  const std::size_t n = logits.numel();
  if (segment_ids.size() != n) {
    throw Error(Errc::ShapeMismatch, "segment_softmax: " + std::to_string(segment_ids.size()) +
                                         " segment ids for " + std::to_string(n) + " logits");
  }
  std::size_t segments = 0;
  for (auto s : segment_ids) segments = std::max(segments, s + 1);
  std::vector<double> seg_max(segments, -std::numeric_limits<double>::infinity());
  std::vector<std::size_t> seg_count(segments, 0);
  const auto lv = logits.values();
  for (std::size_t i = 0; i < n; ++i) {
    seg_max[segment_ids[i]] = std::max(seg_max[segment_ids[i]], lv[i]);
    ++seg_count[segment_ids[i]];
  }
  for (std::size_t s = 0; s < segments; ++s) {
    if (seg_count[s] == 0) throw Error(Errc::EmptySegment, "segment " + std::to_string(s) + " has no entries");
  }
  std::vector<double> out(n), seg_sum(segments, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(lv[i] - seg_max[segment_ids[i]]);
    seg_sum[segment_ids[i]] += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= seg_sum[segment_ids[i]];

  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
  std::vector<double> y = out;
  return tape.emit(logits.shape(), std::move(out), {&logits},
                   [logits, ids = std::move(ids), y = std::move(y), segments](std::span<const double> g) mutable {
                     std::vector<double> dot(segments, 0.0);
                     for (std::size_t i = 0; i < y.size(); ++i) dot[ids[i]] += g[i] * y[i];
                     auto gl = logits.mutable_grad();
                     for (std::size_t i = 0; i < y.size(); ++i) gl[i] += y[i] * (g[i] - dot[ids[i]]);
                   });
}

Tensor segment_weighted_sum(Tape& tape, const Tensor& weights, const Tensor& values,
                            std::span<const std::size_t> segment_ids, std::size_t num_segments) {
  require_rank2("segment_weighted_sum", values);
  const std::size_t n = values.rows(), d = values.cols();
  if (weights.numel() != n || segment_ids.size() != n) mismatch("segment_weighted_sum", weights, values);
  std::vector<double> out(num_segments * d, 0.0);
  const auto wv = weights.values(), vv = values.values();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = segment_ids[i];
    if (s >= num_segments) throw Error(Errc::IndexOutOfRange, "segment id " + std::to_string(s));
    for (std::size_t j = 0; j < d; ++j) out[s * d + j] += wv[i] * vv[i * d + j];
  }
  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
  return tape.emit({num_segments, d}, std::move(out), {&weights, &values},
                   [weights, values, ids = std::move(ids), n, d](std::span<const double> g) mutable {
                     if (weights.requires_grad()) {
                       auto gw = weights.mutable_grad();
                       const auto vv = values.values();
                       for (std::size_t i = 0; i < n; ++i) {
                         double acc = 0.0;
                         for (std::size_t j = 0; j < d; ++j) acc += g[ids[i] * d + j] * vv[i * d + j];
                         gw[i] += acc;
                       }
                     }
                     if (values.requires_grad()) {
                       auto gv = values.mutable_grad();
                       const auto wv = weights.values();
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < d; ++j) gv[i * d + j] += wv[i] * g[ids[i] * d + j];
                     }
                   });
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.rank() == 2 ? x.cols() : x.numel();
  const std::size_t n = x.numel() / std::max<std::size_t>(d, 1);
  if (gamma.numel() != d || beta.numel() != d) mismatch("layer_norm", x, gamma);
  std::vector<double> xhat(x.numel()), rstd(n), out(x.numel());
  const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (xv[i * d + j] - mu) * rstd[i];
      out[i * d + j] = gv[j] * xhat[i * d + j] + bv[j];
    }
  }
  return tape.emit(x.shape(), std::move(out), {&x, &gamma, &beta},
                   [x, gamma, beta, xhat = std::move(xhat), rstd = std::move(rstd), n, d](
                       std::span<const double> g) mutable {
                     const auto gv = gamma.values();
                     if (gamma.requires_grad() || beta.requires_grad()) {
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < d; ++j) {
                           if (gamma.requires_grad()) gamma.mutable_grad()[j] += g[i * d + j] * xhat[i * d + j];
                           if (beta.requires_grad()) beta.mutable_grad()[j] += g[i * d + j];
                         }
                       }
                     }
                     if (!x.requires_grad()) return;
                     auto gx = x.mutable_grad();
                     const double inv_d = 1.0 / static_cast<double>(d);
                     for (std::size_t i = 0; i < n; ++i) {
                       double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dxh = g[i * d + j] * gv[j];
                         mean_dxhat += dxh;
                         mean_dxhat_xhat += dxh * xhat[i * d + j];
                       }
                       mean_dxhat *= inv_d;
                       mean_dxhat_xhat *= inv_d;
                       for (std::size_t j = 0; j < d; ++j) {
                         const double dxh = g[i * d + j] * gv[j];
                         gx[i * d + j] += rstd[i] * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
                       }
                     }
                   });
}

Tensor dropout(Tape& tape, const Tensor& x, double rate, Mode mode, Rng* rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(Errc::InvalidConfig, "dropout rate must be in [0, 1)");
  if (mode == Mode::Eval || rate == 0.0) return x;
  if (rng == nullptr) throw Error(Errc::InvalidConfig, "train-mode dropout needs an rng");
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = rng->bernoulli(rate) ? 0.0 : keep_scale;
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return tape.emit(x.shape(), std::move(out), {&x}, [x, mask = std::move(mask)](std::span<const double> g) mutable {
    if (!x.requires_grad()) return;
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t target) {
  const std::size_t c = logits.numel();
  if (c < 2) throw Error(Errc::ShapeMismatch, "cross_entropy needs at least 2 classes");
  if (target >= c) throw Error(Errc::IndexOutOfRange, "target class " + std::to_string(target));
  const auto lv = logits.values();
  const std::size_t arg = static_cast<std::size_t>(std::max_element(lv.begin(), lv.end()) - lv.begin());
  const double m = lv[arg];
  // log(sum exp(z - m)) = log1p(sum over i != arg), kept separate so tiny
  // losses do not cancel to zero.
  double rest = 0.0;
  std::vector<double> probs(c);
  for (std::size_t i = 0; i < c; ++i) {
    probs[i] = std::exp(lv[i] - m);
    if (i != arg) rest += probs[i];
  }
  const double lse_shift = std::log1p(rest);
  const double loss = (m - lv[target]) + lse_shift;
  for (auto& p : probs) p /= (1.0 + rest);
  return tape.emit({1}, {loss}, {&logits}, [logits, probs = std::move(probs), target](std::span<const double> g) mutable {
    if (!logits.requires_grad()) return;
    auto gl = logits.mutable_grad();
    for (std::size_t i = 0; i < probs.size(); ++i) gl[i] += g[0] * (probs[i] - (i == target ? 1.0 : 0.0));
  });
}

Tensor embedding_bag_mean(Tape& tape, const Tensor& table, const std::vector<std::vector<std::int32_t>>& ids) {
  require_rank2("embedding_bag_mean", table);
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d, 0.0);
  const auto tv = table.values();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r].empty()) throw Error(Errc::ShapeMismatch, "embedding_bag_mean: empty id list");
    for (auto id : ids[r]) {
      if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
        throw Error(Errc::IndexOutOfRange, "token id " + std::to_string(id));
      }
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] += tv[static_cast<std::size_t>(id) * d + j];
    }
    const double inv = 1.0 / static_cast<double>(ids[r].size());
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] *= inv;
  }
  return tape.emit({ids.size(), d}, std::move(out), {&table}, [table, ids, d](std::span<const double> g) mutable {
    if (!table.requires_grad()) return;
    auto gt = table.mutable_grad();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      const double inv = 1.0 / static_cast<double>(ids[r].size());
      for (auto id : ids[r])
        for (std::size_t j = 0; j < d; ++j) gt[static_cast<std::size_t>(id) * d + j] += g[r * d + j] * inv;
    }
  });
}

}  // namespace hyperg::ops
