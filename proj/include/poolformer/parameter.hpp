#pragma once

#include <functional>
#include <string>
#include <vector>

#include "poolformer/tensor.hpp"

namespace poolformer {

/// A trainable tensor and its gradient accumulator (same shape).
struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(Tensor v) : value(std::move(v)), grad(Tensor::zeros_like(value)) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParamVisitor = std::function<void(const std::string& name, Parameter& param)>;

struct NamedParameter {
  std::string name;
  Parameter* param;
};

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

}  // namespace poolformer
