#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hyperg {

enum class Dtype { F32, F64 };
enum class Mode { Train, Eval };

std::string dtype_name(Dtype dtype);
Dtype parse_dtype(const std::string& name);

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage. Values are
/// always held as doubles; an F32 tensor has every value rounded to float
/// precision when it is produced by an op. Gradients are accumulated in
/// double precision regardless of dtype.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, Dtype dtype = Dtype::F64);
  static Tensor from(Shape shape, std::vector<double> values, Dtype dtype = Dtype::F64);
  static Tensor parameter(Shape shape, std::vector<double> values, Dtype dtype = Dtype::F64);
  static Tensor scalar(double value, Dtype dtype = Dtype::F64);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  /// Leading dimension; a rank-1 tensor of length n reports n rows.
  std::size_t rows() const;
  /// Trailing dimension for rank 2; 1 otherwise.
  std::size_t cols() const;
  Dtype dtype() const;

  std::span<const double> values() const;
  /// Direct write access (storage is shared, so this is allowed on const handles) for initializers and optimizers. Not recorded.
  std::span<double> mutable_values() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  /// Allocates a zero gradient buffer on first use.
  std::span<double> mutable_grad() const;
  void zero_grad() const;

  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t r, std::size_t c) const;

  /// Value copy with no gradient tracking.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    Dtype dtype = Dtype::F64;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;

  const Impl& impl() const;
  // Mutable access through the shared handle.
  Impl& shared() const;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered record of differentiable ops for one forward pass.
///
/// Ops append a record only when recording is on and some input requires a
/// gradient. backward() walks the records in strict reverse order, so every
/// gradient is a fixed-order sum over path contributions.
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return records_.size(); }

  /// Finalizes an op output: rounds for F32, checks finiteness, and records
  /// `backward` when any input requires a gradient.
  Tensor emit(Shape shape, std::vector<double> values, std::initializer_list<const Tensor*> inputs,
              BackwardFn backward);
  Tensor emit(Shape shape, std::vector<double> values, const std::vector<Tensor>& inputs,
              BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must have one element.
  /// The tape is cleared afterwards.
  void backward(const Tensor& loss);

 private:
  struct Record {
    Tensor output;
    BackwardFn backward;
  };
  bool recording_;
  std::vector<Record> records_;

  Tensor finish(Shape shape, std::vector<double> values, Dtype dtype, bool needs_grad,
                BackwardFn backward);
};

/// Whether op outputs are scanned for NaN/Inf (on unless NDEBUG, or when
/// HYPERG_CHECK_FINITE is defined).
bool finite_checks_enabled();

}  // namespace hyperg
