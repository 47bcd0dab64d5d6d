#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mcsttm/data.hpp"
#include "mcsttm/graph.hpp"

namespace mcsttm {

// Parameters of a traffic-like series with a daily cycle:
//   value(n, t) = base_n + amp_n sin(2 pi (t mod s) / s + phase_n) weekmod(day(t))
//               + coupling * mean_{j -> n} periodic_j(t - 1) + noise
// where periodic_j is node j's oscillating term. weekmod is 1 on days 0-4 and
// 1 - weekly_modulation on days 5-6.
struct SynthSpec {
  std::size_t nodes = 5;
  std::size_t days = 14;
  std::size_t slices_per_day = 288;
  // Per-node values; left empty they are drawn from the seed.
  std::vector<double> base;
  std::vector<double> amplitude;
  std::vector<double> phase;
  double weekly_modulation = 0.3;
  // Edges feeding the coupling term; left empty a bidirectional chain with
  // seeded distances is used. Also returned as the road graph.
  RoadGraph graph;
  double coupling = 0.2;
  double noise_std = 5.0;
  std::uint64_t seed = 0;
};

struct SynthData {
  SeriesTable series;  // noisy observations
  SeriesTable clean;   // same series without noise
  RoadGraph graph;
};

SynthData generate(const SynthSpec& spec);

}  // namespace mcsttm
