#include "mcsttm/graph.hpp"

#include <cmath>
#include <string>

#include "mcsttm/errors.hpp"
#include "mcsttm/ops.hpp"

namespace mcsttm {

void RoadGraph::validate() const {
  if (node_count == 0) throw InputError("graph has no nodes");
  if (!node_ids.empty() && node_ids.size() != node_count) {
    throw InputError("graph lists " + std::to_string(node_ids.size()) + " node ids for " +
                     std::to_string(node_count) + " nodes");
  }
  for (const auto& e : edges) {
    if (e.from >= node_count || e.to >= node_count) {
      throw InputError("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                       " references a node outside [0, " + std::to_string(node_count) + ")");
    }
    if (e.from == e.to) {
      throw InputError("self-loop edge on node " + std::to_string(e.from));
    }
    if (!(e.distance >= 0.0) || !std::isfinite(e.distance)) {
      throw InputError("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                       " has invalid distance");
    }
  }
}

RoadGraph RoadGraph::reversed() const {
  RoadGraph r = *this;
  for (auto& e : r.edges) std::swap(e.from, e.to);
  return r;
}

double default_sigma(const RoadGraph& graph) {
  if (graph.edges.size() < 2) return 1.0;
  double mean = 0.0;
  for (const auto& e : graph.edges) mean += e.distance;
  mean /= static_cast<double>(graph.edges.size());
  double var = 0.0;
  for (const auto& e : graph.edges) var += (e.distance - mean) * (e.distance - mean);
  var /= static_cast<double>(graph.edges.size());
  const double sd = std::sqrt(var);
  return sd > 0.0 ? sd : 1.0;
}

double kernel_weight(double distance, double sigma, double kappa) {
  const double w = std::exp(-(distance * distance) / (sigma * sigma));
  return w < kappa ? 0.0 : w;
}

std::vector<double> edge_weight_matrix(const RoadGraph& graph, double sigma, double kappa) {
  if (!(sigma > 0.0)) throw ConfigError("adjacency kernel width sigma must be > 0");
  if (!(kappa >= 0.0 && kappa < 1.0)) throw ConfigError("adjacency threshold kappa must lie in [0, 1)");
  graph.validate();
  const std::size_t m = graph.node_count;
  std::vector<double> w(m * m, 0.0);
  for (const auto& e : graph.edges) {
    w[e.from * m + e.to] = kernel_weight(e.distance, sigma, kappa);
  }
  return w;
}

namespace {

Tensor normalize_with_self_loops(std::vector<double> w, std::size_t m) {
  for (std::size_t i = 0; i < m; ++i) {
    w[i * m + i] += 1.0;
    double row = 0.0;
    for (std::size_t j = 0; j < m; ++j) row += w[i * m + j];
    for (std::size_t j = 0; j < m; ++j) w[i * m + j] /= row;
  }
  return Tensor({m, m}, std::move(w));
}

}  // namespace

AdjacencyPair build_fixed_adjacency(const RoadGraph& graph, double sigma, double kappa) {
  const std::size_t m = graph.node_count;
  AdjacencyPair pair;
  pair.forward = normalize_with_self_loops(edge_weight_matrix(graph, sigma, kappa), m);
  pair.backward = normalize_with_self_loops(edge_weight_matrix(graph.reversed(), sigma, kappa), m);
  return pair;
}

AdaptiveEmbeddings AdaptiveEmbeddings::random(std::size_t nodes, std::size_t rank, Rng& rng) {
  if (rank == 0) throw ConfigError("adaptive embedding rank must be >= 1");
  const double bound = 1.0 / std::sqrt(static_cast<double>(rank));
  AdaptiveEmbeddings emb;
  emb.e_c = uniform_tensor({nodes, rank}, bound, rng, true);
  emb.e_r = uniform_tensor({rank, nodes}, bound, rng, true);
  return emb;
}

Tensor adaptive_adjacency(const AdaptiveEmbeddings& emb) {
  if (emb.e_c.rank() != 2 || emb.e_r.rank() != 2 || emb.e_c.dim(1) != emb.e_r.dim(0) ||
      emb.e_c.dim(0) != emb.e_r.dim(1)) {
    throw DimensionError("adaptive_adjacency: factors " + shape_str(emb.e_c.shape()) + " and " +
                         shape_str(emb.e_r.shape()) + " are not M x r and r x M");
  }
  return softmax_lastdim(relu(matmul(emb.e_c, emb.e_r)));
}

}  // namespace mcsttm
