#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mcsttm/channel_batch.hpp"
#include "mcsttm/graph.hpp"
#include "mcsttm/model.hpp"

namespace mcsttm {

// Dense rows of consecutive time slices; one column per node.
struct SeriesTable {
  std::size_t rows = 0;
  std::size_t nodes = 0;
  std::vector<double> values;  // rows x nodes, row-major
  std::int64_t start_index = 0;
  std::size_t slices_per_day = 288;
  std::vector<std::string> node_ids;

  double at(std::size_t row, std::size_t node) const { return values[row * nodes + node]; }
  double& at(std::size_t row, std::size_t node) { return values[row * nodes + node]; }
  std::int64_t end_index() const { return start_index + static_cast<std::int64_t>(rows); }
  // Row holding absolute slice `slice`.
  std::size_t row_of(std::int64_t slice) const {
    return static_cast<std::size_t>(slice - start_index);
  }
};

// Series CSV: header "slice_index,node_<id>,...", one row per slice, indices
// strictly consecutive. Lines starting with '#' are comments.
SeriesTable load_series_csv(const std::string& path, std::size_t slices_per_day = 288);
void write_series_csv(const std::string& path, const SeriesTable& table,
                      const std::string& comment = "");

// Edge CSV: header "from,to,distance". Ids are matched against `node_ids`.
// A repeated (from, to) pair keeps its last distance and adds a warning.
RoadGraph load_edges_csv(const std::string& path, const std::vector<std::string>& node_ids,
                         std::vector<std::string>* warnings = nullptr);
void write_edges_csv(const std::string& path, const RoadGraph& graph,
                     const std::string& comment = "");

// Node ids "0".."count-1".
std::vector<std::string> default_node_ids(std::size_t count);

// Every slice t whose hour window, day window and target fit in the table.
std::vector<std::int64_t> valid_anchors(const SeriesTable& table, const ModelConfig& cfg);

// Hour slices t-p+1..t, day slices t-d*s..t-s, targets t+1..t+q.
ChannelBatch make_channels(const SeriesTable& table, const std::vector<std::int64_t>& anchors,
                           const ModelConfig& cfg);

struct AnchorSplit {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> val;
  std::vector<std::int64_t> test;
};

// Integer apportioning of n anchors by ratio, remainder to the last part.
std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> ratios);

// Chronological 6:2:2 partition of the valid anchors. Anchors of an earlier
// part whose targets would reach the hour window of the next part's first
// anchor are dropped, so no target is ever another part's input.
AnchorSplit split_train_val_test(const SeriesTable& table, const ModelConfig& cfg,
                                 std::array<double, 3> ratios = {6.0, 2.0, 2.0});

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

// Mean and standard deviation over rows [0, last train target]. A constant
// training portion yields std = 1 so that normalization stays defined.
NormStats compute_norm_stats(const SeriesTable& table, const std::vector<std::int64_t>& train,
                             const ModelConfig& cfg);

enum class ZDirection { kNormalize, kDenormalize };

SeriesTable zscore(const SeriesTable& table, const NormStats& stats, ZDirection direction);
double zscore_value(double v, const NormStats& stats, ZDirection direction);

// Seeded Gaussian perturbation of every value.
SeriesTable inject_noise(const SeriesTable& table, double mean, double std, std::uint64_t seed);
// Perturbs only the two input channels of a batch; targets stay clean.
ChannelBatch inject_noise(const ChannelBatch& batch, double mean, double std, std::uint64_t seed);

}  // namespace mcsttm
