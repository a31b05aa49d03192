#pragma once

#include <concepts>
#include <functional>
#include <string>
#include <vector>

#include "poolformer/parameter.hpp"
#include "poolformer/rng.hpp"
#include "poolformer/tensor.hpp"

namespace poolformer {

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckAbsFloor = 1e-8;

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = kGradCheckTolerance;
  std::vector<GradCheckEntry> entries;

  bool passed() const { return max_rel_error < tolerance; }
  void add(GradCheckEntry entry);
};

/// |analytic - numeric| / max(|analytic|, |numeric|, abs_floor).
double relative_error(double analytic, double numeric, double abs_floor = kGradCheckAbsFloor);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every entry of x.
/// Throws EvaluationError if f returns a non-finite value.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h = kGradCheckStep);

/// Compares an analytic gradient against central differences of `loss` with
/// respect to one tensor that `loss` reads through `target`.
GradCheckEntry check_tensor(const std::string& name, const std::function<double()>& loss,
                            Tensor& target, const Tensor& analytic, double h = kGradCheckStep);

/// Checks every parameter's accumulated `.grad` against finite differences of `loss`.
void check_parameters(GradCheckReport& report, const std::function<double()>& loss,
                      const std::vector<NamedParameter>& params, double h = kGradCheckStep);

template <class L>
concept DifferentiableLayer = requires(L& layer, const L& clayer, const Tensor& x,
                                       typename L::Cache cache, const ParamVisitor& visit) {
  { clayer.forward(x, &cache) } -> std::same_as<Tensor>;
  { layer.backward(cache, x) } -> std::same_as<Tensor>;
  layer.visit_params(visit, std::string{});
};

template <DifferentiableLayer L>
std::vector<NamedParameter> collect_parameters(L& layer, const std::string& prefix = {}) {
  std::vector<NamedParameter> out;
  layer.visit_params([&](const std::string& name, Parameter& p) { out.push_back({name, &p}); },
                     prefix);
  return out;
}

/// Gradient check of a layer under the scalar probe loss <forward(x), R> with a
/// fixed random R. Checks dL/dx and every parameter gradient in f64.
template <DifferentiableLayer L>
GradCheckReport gradient_check(L& layer, const Tensor& input, double tol = kGradCheckTolerance,
                               std::uint64_t probe_seed = 17, double h = kGradCheckStep) {
  GradCheckReport report;
  report.tolerance = tol;

  typename L::Cache cache;
  const Tensor y = layer.forward(input, &cache);
  SeededRng rng(probe_seed);
  const Tensor probe = gaussian_init(rng, y.shape(), 1.0);

  auto params = collect_parameters(layer);
  for (auto& p : params) p.param->zero_grad();
  const Tensor dx = layer.backward(cache, probe);

  Tensor x = input;
  auto loss = [&]() { return dot(layer.forward(x, nullptr), probe); };
  report.add(check_tensor("input", loss, x, dx, h));
  check_parameters(report, loss, params, h);
  return report;
}

}  // namespace poolformer
