#include "poolformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "poolformer/errors.hpp"

namespace poolformer {

void GradCheckReport::add(GradCheckEntry entry) {
  max_rel_error = std::max(max_rel_error, entry.max_rel_error);
  entries.push_back(std::move(entry));
}

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
  if (!(h > 0.0)) throw ArgumentError("finite_difference_gradient: step must be positive");
  Tensor probe = x;
  Tensor grad = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("finite_difference_gradient: non-finite function value at entry " +
                            std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

GradCheckEntry check_tensor(const std::string& name, const std::function<double()>& loss,
                            Tensor& target, const Tensor& analytic, double h) {
  analytic.require_shape(target.shape(), "check_tensor");
  GradCheckEntry entry{name};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double orig = target[i];
    target[i] = orig + h;
    const double fp = loss();
    target[i] = orig - h;
    const double fm = loss();
    target[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw EvaluationError("gradient check of " + name + ": non-finite loss at entry " +
                            std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric);
    if (err > entry.max_rel_error || i == 0) {
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      entry.worst_index = i;
      entry.analytic = analytic[i];
      entry.numeric = numeric;
    }
  }
  return entry;
}

void check_parameters(GradCheckReport& report, const std::function<double()>& loss,
                      const std::vector<NamedParameter>& params, double h) {
  for (const auto& p : params) {
    report.add(check_tensor(p.name, loss, p.param->value, p.param->grad, h));
  }
}

}  // namespace poolformer
