#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hyperg/tensor.hpp"

namespace hyperg {

struct TensorGradError {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::vector<TensorGradError> per_tensor;
};

/// Compares tape gradients against central differences.
///
/// `loss` builds a scalar on the tape it is given and must be deterministic
/// (no train-mode dropout). Each parameter element is perturbed by +-h and
/// restored. Relative error per element is |a - n| / max(1, |a|, |n|).
/// Throws Errc::NonFiniteValue when any evaluated loss is not finite.
GradCheckReport grad_check(const std::function<Tensor(Tape&)>& loss, std::vector<NamedTensor> params,
                           double h = 1e-5);

}  // namespace hyperg
