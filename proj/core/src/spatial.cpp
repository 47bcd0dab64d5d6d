#include "mcsttm/spatial.hpp"

#include <cmath>

#include "mcsttm/errors.hpp"
#include "mcsttm/ops.hpp"

namespace mcsttm {

SpatialParams SpatialParams::random(std::size_t features, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(features));
  SpatialParams p;
  p.w0 = uniform_tensor({features, features}, bound, rng, true);
  p.w1 = uniform_tensor({features, features}, bound, rng, true);
  p.w2 = uniform_tensor({features, features}, bound, rng, true);
  return p;
}

Tensor graph_mix(const Tensor& adjacency, const Tensor& x) {
  if (x.rank() < 3) {
    throw DimensionError("graph_mix: expected x[..., M, T, F], got " + shape_str(x.shape()));
  }
  const Shape& xs = x.shape();
  const std::size_t m = xs[xs.size() - 3];
  if (adjacency.shape() != Shape{m, m}) {
    throw DimensionError("graph_mix: adjacency " + shape_str(adjacency.shape()) +
                         " does not match " + std::to_string(m) + " nodes of " + shape_str(xs));
  }
  Shape flat(xs.begin(), xs.end() - 2);
  flat.push_back(xs[xs.size() - 2] * xs.back());
  return reshape(matmul(adjacency, reshape(x, flat)), xs);
}

Tensor spatial_forward(const Tensor& x, const Tensor& a_adp, const AdjacencyPair& adj,
                       const SpatialParams& params, SpatialTerms terms) {
  const std::size_t f = x.dim(-1);
  for (const Tensor* w : {&params.w0, &params.w1, &params.w2}) {
    if (w->shape() != Shape{f, f}) {
      throw DimensionError("spatial_forward: weight " + shape_str(w->shape()) +
                           " does not match feature width " + std::to_string(f));
    }
  }
  Tensor out;
  auto accumulate = [&out](const Tensor& term) { out = out.defined() ? add(out, term) : term; };
  if (terms.adaptive) accumulate(matmul(graph_mix(a_adp, x), params.w0));
  if (terms.fixed) {
    accumulate(matmul(graph_mix(adj.forward, x), params.w1));
    accumulate(matmul(graph_mix(adj.backward, x), params.w2));
  }
  if (!out.defined()) return scale(x, 0.0);
  return out;
}

Tensor gcn_two_layer_reference(const Tensor& x, const Tensor& a, const Tensor& w0,
                               const Tensor& w1) {
  if (x.rank() != 2 || a.rank() != 2 || a.dim(0) != x.dim(0) || a.dim(1) != x.dim(0)) {
    throw DimensionError("gcn_two_layer_reference: adjacency " + shape_str(a.shape()) +
                         " does not fit features " + shape_str(x.shape()));
  }
  const Tensor h1 = relu(matmul(matmul(a, x), w0));
  return relu(matmul(matmul(a, h1), w1));
}

}  // namespace mcsttm
