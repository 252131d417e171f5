#include "hyperg/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "hyperg/error.hpp"

namespace hyperg {

namespace {

double evaluate(const std::function<Tensor(Tape&)>& loss) {
  Tape tape(false);
  const double v = loss(tape).item();
  if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, "loss is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(Tape&)>& loss, std::vector<NamedTensor> params, double h) {
  for (auto& p : params) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  {
    Tape tape;
    Tensor out = loss(tape);
    if (!std::isfinite(out.item())) throw Error(Errc::NonFiniteValue, "loss is not finite");
    tape.backward(out);
  }

  GradCheckReport report;
  for (auto& p : params) {
    TensorGradError entry{p.name, 0.0, 0};
    const std::size_t n = p.tensor.numel();
    std::vector<double> analytic(n, 0.0);
    if (p.tensor.has_grad()) std::copy_n(p.tensor.grad().begin(), n, analytic.begin());
    auto values = p.tensor.mutable_values();
    for (std::size_t i = 0; i < n; ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = evaluate(loss);
      values[i] = saved - h;
      const double down = evaluate(loss);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      if (rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.per_tensor.push_back(std::move(entry));
  }
  return report;
}

}  // namespace hyperg
