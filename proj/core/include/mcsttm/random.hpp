#pragma once

#include <random>

#include "mcsttm/tensor.hpp"

namespace mcsttm {

using Rng = std::mt19937_64;

// Entries drawn uniformly from [-bound, bound].
Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad = false);

}  // namespace mcsttm
