#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcsttm/channel_batch.hpp"
#include "mcsttm/tensor.hpp"

namespace mcsttm {

// Mean absolute deviation as a differentiable scalar.
Tensor mae_loss(const Tensor& pred, const Tensor& target);

struct Metrics {
  double mae = 0.0;
  double rmse = 0.0;
  // Percent; empty when every target is masked by the epsilon threshold.
  std::optional<double> mape;
};

Metrics compute_metrics(std::span<const double> pred, std::span<const double> target,
                        double mape_epsilon);

struct StepMetrics {
  std::size_t step = 0;  // 1-based horizon step
  Metrics metrics;
};

struct ForecastReport {
  std::vector<StepMetrics> steps;
  Metrics average;  // pooled over every horizon step
  std::size_t horizon = 0;
  std::string dataset;
  double wall_clock_s = 0.0;
};

// Default reporting steps: 15, 30 and 60 minutes at 5-minute slices.
inline const std::vector<std::size_t> kReportSteps{3, 6, 12};

// pred and target are [B, M, q, 1] in original units.
ForecastReport build_report(const Tensor& pred, const Tensor& target,
                            const std::vector<std::size_t>& steps, double mape_epsilon);

// Weighted mean of the hour-channel history, repeated for every horizon step.
// weights has length p, is nonnegative and sums to 1.
Tensor ha_baseline(const ChannelBatch& batch, const std::vector<double>& weights,
                   std::size_t horizon);

// CSV "step,mae,mape,rmse" plus an "avg" row; with `noisy` the noisy-input
// columns follow side by side.
void write_report_csv(const std::string& path, const ForecastReport& report,
                      const ForecastReport* noisy = nullptr, const std::string& comment = "");

}  // namespace mcsttm
