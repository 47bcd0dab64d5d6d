#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mcsttm/data.hpp"
#include "mcsttm/graph.hpp"
#include "mcsttm/metrics.hpp"
#include "mcsttm/model.hpp"

namespace mcsttm {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 200;
  std::size_t patience = 15;
  std::uint64_t seed = 0;
  double mape_epsilon = 1.0;
  // Validation MAE must drop by at least this much to count as improvement.
  double min_improvement = 1e-6;
  Ablation ablation;

  void validate() const;
};

// Everything a run needs: raw and normalized series, splits, adjacencies.
struct Dataset {
  ModelConfig cfg;
  SeriesTable raw;
  SeriesTable normalized;
  NormStats stats;
  AnchorSplit split;
  RoadGraph graph;
  AdjacencyPair adj;
};

struct AdjacencyOptions {
  std::optional<double> sigma;  // default: std of edge distances
  double kappa = 0.1;
};

Dataset prepare_dataset(SeriesTable raw, RoadGraph graph, const ModelConfig& cfg,
                        const AdjacencyOptions& adjacency = {});

// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  void zero_grad();
  void step();
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::size_t t_ = 0;
};

// Tracks the best validation score and patience.
class EarlyStopper {
 public:
  EarlyStopper(std::size_t patience, double min_improvement);

  // Returns true when `score` is a new best.
  bool update(double score);
  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  double min_improvement_;
  double best_;
  std::size_t stale_ = 0;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mae = 0.0;  // original units, running mean over the epoch
  double val_mae = 0.0;    // original units
  double elapsed_s = 0.0;
};

struct TrainResult {
  ModelParams best;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
};

ModelParams clone_params(const ModelParams& params, const ModelConfig& cfg);

// Checks the flag combination and returns the variant to build.
Ablation ablate(const Ablation& flags);

// Mini-batch training with per-epoch validation, best-model retention and
// early stopping. Throws DivergenceError on a non-finite loss.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const ModelParams& init,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

struct NoiseOptions {
  double std = 0.0;
  std::uint64_t seed = 0;
};

// Forecasts in original units, [B, M, q, 1], computed in chunks without
// recording gradients. Optional noise perturbs the normalized inputs.
Tensor predict(const Dataset& data, const ModelParams& params,
               const std::vector<std::int64_t>& anchors, const Ablation& ablation = {},
               const NoiseOptions& noise = {});

// Targets in original units for the given anchors.
Tensor targets(const Dataset& data, const std::vector<std::int64_t>& anchors);

ForecastReport evaluate(const Dataset& data, const ModelParams& params,
                        const std::vector<std::int64_t>& anchors, const Ablation& ablation = {},
                        double mape_epsilon = 1.0,
                        const std::vector<std::size_t>& steps = kReportSteps,
                        const NoiseOptions& noise = {});

ForecastReport evaluate_ha(const Dataset& data, const std::vector<std::int64_t>& anchors,
                           const std::vector<double>& weights, double mape_epsilon = 1.0,
                           const std::vector<std::size_t>& steps = kReportSteps);

// "epoch,train_mae,val_mae,elapsed_s"
void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history,
                       const std::string& comment = "");

}  // namespace mcsttm
