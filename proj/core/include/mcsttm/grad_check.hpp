#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mcsttm/tensor.hpp"

namespace mcsttm {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at worst_index
  double numeric = 0.0;   // at worst_index
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  double max_rel_error() const;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor);
  // keeps near-zero gradients from turning rounding noise into failures.
  double floor = 1e-3;
};

// Compares reverse-mode gradients of a scalar-valued function against
// central differences. `inputs` are perturbed in place and restored.
using ScalarFunction = std::function<Tensor()>;

GradCheckReport grad_check(const ScalarFunction& f, std::vector<Tensor> inputs,
                           std::vector<std::string> names, const GradCheckOptions& options = {});

// Reduces a tensor-valued output to a scalar with fixed pseudo-random
// weights, so every output element contributes a distinct direction.
Tensor weighted_reduction(const Tensor& output, unsigned seed);

}  // namespace mcsttm
