#include "mcsttm/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "mcsttm/errors.hpp"
#include "mcsttm/ops.hpp"

namespace mcsttm {

Tensor mae_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mae_loss: prediction " + shape_str(pred.shape()) + " and target " +
                         shape_str(target.shape()) + " differ");
  }
  return mean(abs(sub(pred, target)));
}

Metrics compute_metrics(std::span<const double> pred, std::span<const double> target,
                        double mape_epsilon) {
  if (pred.size() != target.size() || pred.empty()) {
    throw DimensionError("metrics: prediction and target sizes differ or are empty");
  }
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  double pct_sum = 0.0;
  std::size_t pct_count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    abs_sum += std::fabs(e);
    sq_sum += e * e;
    if (std::fabs(target[i]) > mape_epsilon) {
      pct_sum += std::fabs(e / target[i]);
      ++pct_count;
    }
  }
  const auto n = static_cast<double>(pred.size());
  Metrics m;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  if (pct_count > 0) m.mape = 100.0 * pct_sum / static_cast<double>(pct_count);
  return m;
}

ForecastReport build_report(const Tensor& pred, const Tensor& target,
                            const std::vector<std::size_t>& steps, double mape_epsilon) {
  if (pred.shape() != target.shape() || pred.rank() != 4) {
    throw DimensionError("build_report: expected matching [B, M, q, 1] tensors, got " +
                         shape_str(pred.shape()) + " and " + shape_str(target.shape()));
  }
  const std::size_t q = pred.dim(2);
  const std::size_t series = pred.numel() / q;
  ForecastReport report;
  report.horizon = q;
  for (std::size_t step : steps) {
    if (step == 0 || step > q) continue;
    std::vector<double> p(series);
    std::vector<double> t(series);
    for (std::size_t i = 0; i < series; ++i) {
      p[i] = pred.data()[i * q + step - 1];
      t[i] = target.data()[i * q + step - 1];
    }
    report.steps.push_back({step, compute_metrics(p, t, mape_epsilon)});
  }
  report.average = compute_metrics(pred.data(), target.data(), mape_epsilon);
  return report;
}

Tensor ha_baseline(const ChannelBatch& batch, const std::vector<double>& weights,
                   std::size_t horizon) {
  const std::size_t p = batch.x_hour.dim(2);
  if (weights.size() != p) {
    throw ConfigError("ha_baseline: " + std::to_string(weights.size()) + " weights for " +
                      std::to_string(p) + " history slices");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("ha_baseline: weights must be nonnegative");
    total += w;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw ConfigError("ha_baseline: weights sum to " + std::to_string(total) + ", not 1");
  }
  const std::size_t series = batch.x_hour.numel() / p;
  std::vector<double> out(series * horizon);
  const double* x = batch.x_hour.data().data();
  for (std::size_t i = 0; i < series; ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < p; ++k) v += weights[k] * x[i * p + k];
    for (std::size_t h = 0; h < horizon; ++h) out[i * horizon + h] = v;
  }
  return Tensor({batch.x_hour.dim(0), batch.x_hour.dim(1), horizon, 1}, std::move(out));
}

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string fmt_mape(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

void write_row(std::ostream& out, const std::string& label, const Metrics& m,
               const Metrics* noisy) {
  out << label << ',' << fmt(m.mae) << ',' << fmt_mape(m.mape) << ',' << fmt(m.rmse);
  if (noisy) {
    out << ',' << fmt(noisy->mae) << ',' << fmt_mape(noisy->mape) << ',' << fmt(noisy->rmse);
  }
  out << '\n';
}

}  // namespace

void write_report_csv(const std::string& path, const ForecastReport& report,
                      const ForecastReport* noisy, const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  if (!comment.empty()) {
    std::istringstream lines(comment);
    std::string l;
    while (std::getline(lines, l)) out << "# " << l << '\n';
  }
  out << "step,mae,mape,rmse";
  if (noisy) out << ",noisy_mae,noisy_mape,noisy_rmse";
  out << '\n';
  for (std::size_t i = 0; i < report.steps.size(); ++i) {
    write_row(out, std::to_string(report.steps[i].step), report.steps[i].metrics,
              noisy ? &noisy->steps[i].metrics : nullptr);
  }
  write_row(out, "avg", report.average, noisy ? &noisy->average : nullptr);
}

}  // namespace mcsttm
