#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mcsttm/random.hpp"
#include "mcsttm/tensor.hpp"

namespace mcsttm {

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  double distance = 0.0;

  bool operator==(const Edge&) const = default;
};

// Sensor network: M nodes and directed, distance-weighted edges.
struct RoadGraph {
  std::size_t node_count = 0;
  std::vector<Edge> edges;
  std::vector<std::string> node_ids;

  // Throws InputError on out-of-range ids, negative distances or self-loops.
  void validate() const;
  RoadGraph reversed() const;
};

// Row-stochastic forward/backward adjacencies built from physical distance.
struct AdjacencyPair {
  Tensor forward;
  Tensor backward;
};

// Standard deviation of edge distances, or 1 when that is not positive.
double default_sigma(const RoadGraph& graph);

// Gaussian-kernel weight exp(-d^2 / sigma^2), zeroed below kappa.
double kernel_weight(double distance, double sigma, double kappa);

// Dense M x M weight matrix before self-loops and normalization. A repeated
// (from, to) pair keeps its last weight.
std::vector<double> edge_weight_matrix(const RoadGraph& graph, double sigma, double kappa);

AdjacencyPair build_fixed_adjacency(const RoadGraph& graph, double sigma, double kappa);

// Learnable low-rank factors of the adaptive adjacency.
struct AdaptiveEmbeddings {
  Tensor e_c;  // M x r
  Tensor e_r;  // r x M

  static AdaptiveEmbeddings random(std::size_t nodes, std::size_t rank, Rng& rng);
};

// softmax(relu(e_c e_r)) row by row.
Tensor adaptive_adjacency(const AdaptiveEmbeddings& emb);

}  // namespace mcsttm
