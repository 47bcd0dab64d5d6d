#include "mcsttm/random.hpp"

namespace mcsttm {

Tensor uniform_tensor(Shape shape, double bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

}  // namespace mcsttm
