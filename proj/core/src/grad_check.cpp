#include "mcsttm/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mcsttm/errors.hpp"
#include "mcsttm/ops.hpp"

namespace mcsttm {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

GradCheckReport grad_check(const ScalarFunction& f, std::vector<Tensor> inputs,
                           std::vector<std::string> names, const GradCheckOptions& options) {
  if (names.size() != inputs.size()) {
    throw ContractError("grad_check: one name per input is required");
  }
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = f();
  if (loss.numel() != 1) throw ContractError("grad_check: function must return a scalar");
  loss.backward();

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor& x = inputs[i];
    const std::vector<double> analytic = x.grad();
    GradCheckEntry entry;
    entry.name = names[i];
    auto values = x.mutable_data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double original = values[j];
      double plus = 0.0;
      double minus = 0.0;
      {
        NoGradGuard no_grad;
        values[j] = original + options.step;
        plus = f().item();
        values[j] = original - options.step;
        minus = f().item();
        values[j] = original;
      }
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double denom =
          std::max({std::fabs(analytic[j]), std::fabs(numeric), options.floor});
      const double rel = std::fabs(analytic[j] - numeric) / denom;
      if (rel > entry.max_rel_error || j == 0) {
        entry.max_rel_error = rel;
        entry.worst_index = j;
        entry.analytic = analytic[j];
        entry.numeric = numeric;
      }
    }
    entry.passed = entry.max_rel_error <= options.tolerance;
    report.entries.push_back(entry);
  }
  return report;
}

Tensor weighted_reduction(const Tensor& output, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(output.numel());
  for (auto& v : w) v = dist(rng);
  return sum(mul(output, Tensor(output.shape(), std::move(w))));
}

}  // namespace mcsttm
