#include "hyperg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hyperg/error.hpp"

namespace hyperg {

std::string dtype_name(Dtype dtype) { return dtype == Dtype::F32 ? "f32" : "f64"; }

Dtype parse_dtype(const std::string& name) {
  if (name == "f32") return Dtype::F32;
  if (name == "f64") return Dtype::F64;
  throw Error(Errc::InvalidConfig, "unknown dtype '" + name + "'");
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

bool finite_checks_enabled() {
#if defined(HYPERG_CHECK_FINITE) || !defined(NDEBUG)
  return true;
#else
  return false;
#endif
}

namespace {

void round_to(Dtype dtype, std::vector<double>& values) {
  if (dtype != Dtype::F32) return;
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, Dtype dtype) {
  const auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, 0.0), dtype);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, Dtype dtype) {
  if (shape_numel(shape) != values.size()) {
    throw Error(Errc::ShapeMismatch, "shape " + shape_string(shape) + " holds " +
                                         std::to_string(shape_numel(shape)) + " values, got " +
                                         std::to_string(values.size()));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->dtype = dtype;
  round_to(dtype, values);
  t.impl_->value = std::move(values);
  return t;
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values, Dtype dtype) {
  Tensor t = from(std::move(shape), std::move(values), dtype);
  t.impl_->requires_grad = true;
  return t;
}

Tensor Tensor::scalar(double value, Dtype dtype) { return from({1}, {value}, dtype); }

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw Error(Errc::ShapeMismatch, "use of an undefined tensor");
  return *impl_;
}

Tensor::Impl& Tensor::shared() const {
  if (!impl_) throw Error(Errc::ShapeMismatch, "use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }
std::size_t Tensor::numel() const { return impl().value.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.empty() ? 1 : s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  return s.size() == 2 ? s[1] : 1;
}

Dtype Tensor::dtype() const { return impl().dtype; }
std::span<const double> Tensor::values() const { return impl().value; }
std::span<double> Tensor::mutable_values() const { return shared().value; }
bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool on) { shared().requires_grad = on; }
bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::mutable_grad() const {
  auto& i = shared();
  if (i.grad.empty()) i.grad.assign(i.value.size(), 0.0);
  return i.grad;
}

void Tensor::zero_grad() const {
  auto& i = shared();
  std::fill(i.grad.begin(), i.grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1) throw Error(Errc::ShapeMismatch, "item() on " + shape_string(shape()));
  return impl().value[0];
}

double Tensor::at(std::size_t i) const {
  if (i >= numel()) throw Error(Errc::IndexOutOfRange, "flat index " + std::to_string(i));
  return impl().value[i];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) {
    throw Error(Errc::IndexOutOfRange,
                "index (" + std::to_string(r) + "," + std::to_string(c) + ") in " + shape_string(shape()));
  }
  return impl().value[r * cols() + c];
}

Tensor Tensor::detach() const { return from(shape(), impl().value, dtype()); }

Tensor Tape::emit(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
                  BackwardFn backward) {
  bool needs_grad = false;
  Dtype dtype = Dtype::F64;
  for (const Tensor* in : inputs) {
    if (in->requires_grad()) needs_grad = true;
    if (in->dtype() == Dtype::F32) dtype = Dtype::F32;
  }
  return finish(std::move(shape), std::move(values), dtype, needs_grad, std::move(backward));
}

Tensor Tape::emit(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
                  BackwardFn backward) {
  bool needs_grad = false;
  Dtype dtype = Dtype::F64;
  for (const Tensor& in : inputs) {
    if (in.requires_grad()) needs_grad = true;
    if (in.dtype() == Dtype::F32) dtype = Dtype::F32;
  }
  return finish(std::move(shape), std::move(values), dtype, needs_grad, std::move(backward));
}

Tensor Tape::finish(Shape shape, std::vector<double> values, Dtype dtype, bool needs_grad,
                    BackwardFn backward) {
  if (finite_checks_enabled()) {
    for (double v : values) {
      if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, "op produced a non-finite value");
    }
  }
  Tensor out = Tensor::from(std::move(shape), std::move(values), dtype);
  if (recording_ && needs_grad) {
    out.set_requires_grad(true);
    records_.push_back({out, std::move(backward)});
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw Error(Errc::ShapeMismatch, "backward() needs a scalar loss, got " + shape_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    records_.clear();
    return;
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output.grad());
  }
  records_.clear();
}

}  // namespace hyperg
