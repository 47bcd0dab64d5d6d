#pragma once

#include <cstddef>

#include "mcsttm/graph.hpp"
#include "mcsttm/random.hpp"
#include "mcsttm/tensor.hpp"

namespace mcsttm {

// One f_d x f_d weight per adjacency term.
struct SpatialParams {
  Tensor w0;  // adaptive term
  Tensor w1;  // forward fixed term
  Tensor w2;  // backward fixed term

  static SpatialParams random(std::size_t features, Rng& rng);
};

// Which adjacency terms take part; both on for the full model.
struct SpatialTerms {
  bool adaptive = true;
  bool fixed = true;
};

// A[M, M] applied along the node axis of x[..., M, T, F].
Tensor graph_mix(const Tensor& adjacency, const Tensor& x);

// A_adp X W0 + A_fwd X W1 + A_bwd X W2 for x[..., M, T, f_d], independently at
// every time step. No activation.
Tensor spatial_forward(const Tensor& x, const Tensor& a_adp, const AdjacencyPair& adj,
                       const SpatialParams& params, SpatialTerms terms = {});

// Classic two-layer GCN relu(A relu(A X W0) W1) on x[M, D]. Kept as a
// reference operation; the forecasting model does not use it.
Tensor gcn_two_layer_reference(const Tensor& x, const Tensor& a, const Tensor& w0,
                               const Tensor& w1);

}  // namespace mcsttm
