#include "mcsttm/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "mcsttm/errors.hpp"

namespace mcsttm {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  const std::int64_t q = a / b;
  return (a % b != 0 && (a < 0) != (b < 0)) ? q - 1 : q;
}

std::vector<double> per_node(const std::vector<double>& given, std::size_t nodes, double lo,
                             double hi, std::mt19937_64& rng, const char* name) {
  if (!given.empty()) {
    if (given.size() != nodes) {
      throw ConfigError(std::string("synthetic ") + name + " needs one value per node");
    }
    return given;
  }
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out(nodes);
  for (auto& v : out) v = dist(rng);
  return out;
}

}  // namespace

SynthData generate(const SynthSpec& spec) {
  if (spec.nodes == 0 || spec.days == 0 || spec.slices_per_day == 0) {
    throw ConfigError("synthetic spec needs positive nodes, days and slices per day");
  }
  std::mt19937_64 rng(spec.seed);
  const std::size_t m = spec.nodes;
  const auto base = per_node(spec.base, m, 80.0, 120.0, rng, "base");
  const auto amp = per_node(spec.amplitude, m, 30.0, 60.0, rng, "amplitude");
  const auto phase = per_node(spec.phase, m, 0.0, 2.0 * std::numbers::pi, rng, "phase");

  RoadGraph graph = spec.graph;
  if (graph.node_count == 0) {
    graph.node_count = m;
    std::uniform_real_distribution<double> dist(1.0, 3.0);
    for (std::size_t n = 0; n + 1 < m; ++n) {
      const double d = dist(rng);
      graph.edges.push_back({n, n + 1, d});
      graph.edges.push_back({n + 1, n, d});
    }
  }
  if (graph.node_count != m) throw ConfigError("synthetic coupling graph has wrong node count");
  graph.validate();
  if (graph.node_ids.empty()) graph.node_ids = default_node_ids(m);

  std::vector<std::vector<std::size_t>> incoming(m);
  for (const auto& e : graph.edges) incoming[e.to].push_back(e.from);

  const auto s = static_cast<std::int64_t>(spec.slices_per_day);
  auto periodic = [&](std::size_t n, std::int64_t t) {
    const std::int64_t day = floor_div(t, s);
    const std::int64_t slot = t - day * s;
    const std::int64_t dow = ((day % 7) + 7) % 7;
    const double week = dow >= 5 ? 1.0 - spec.weekly_modulation : 1.0;
    return amp[n] *
           std::sin(2.0 * std::numbers::pi * static_cast<double>(slot) / static_cast<double>(s) +
                    phase[n]) *
           week;
  };

  SynthData out;
  SeriesTable& clean = out.clean;
  clean.rows = spec.days * spec.slices_per_day;
  clean.nodes = m;
  clean.slices_per_day = spec.slices_per_day;
  clean.node_ids = graph.node_ids;
  clean.values.resize(clean.rows * m);
  for (std::size_t r = 0; r < clean.rows; ++r) {
    const auto t = static_cast<std::int64_t>(r);
    for (std::size_t n = 0; n < m; ++n) {
      double v = base[n] + periodic(n, t);
      if (!incoming[n].empty()) {
        double c = 0.0;
        for (auto j : incoming[n]) c += periodic(j, t - 1);
        v += spec.coupling * c / static_cast<double>(incoming[n].size());
      }
      clean.at(r, n) = v;
    }
  }
  out.series = clean;
  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (auto& v : out.series.values) v += noise(rng);
  }
  out.graph = std::move(graph);
  return out;
}

}  // namespace mcsttm
