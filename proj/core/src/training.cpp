#include "mcsttm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "mcsttm/errors.hpp"
#include "mcsttm/ops.hpp"

namespace mcsttm {

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<std::int64_t> slice(const std::vector<std::int64_t>& v, std::size_t begin,
                                std::size_t end) {
  return {v.begin() + static_cast<std::ptrdiff_t>(begin),
          v.begin() + static_cast<std::ptrdiff_t>(std::min(end, v.size()))};
}

Tensor concat_batches(const std::vector<Tensor>& parts) {
  const Shape& first = parts.front().shape();
  std::size_t rows = 0;
  std::vector<double> values;
  for (const auto& p : parts) {
    rows += p.dim(0);
    values.insert(values.end(), p.data().begin(), p.data().end());
  }
  Shape shape = first;
  shape[0] = rows;
  return Tensor(shape, std::move(values));
}

std::vector<Tensor> param_list(const ModelParams& params) {
  std::vector<Tensor> out;
  for (auto& [name, t] : params.named()) out.push_back(t);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (patience == 0) throw ConfigError("train.patience must be >= 1");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be >= 1");
  if (!(mape_epsilon >= 0.0)) throw ConfigError("train.mape_epsilon must be >= 0");
  ablation.validate();
}

Dataset prepare_dataset(SeriesTable raw, RoadGraph graph, const ModelConfig& cfg,
                        const AdjacencyOptions& adjacency) {
  cfg.validate();
  if (raw.nodes != cfg.nodes) {
    throw ConfigError("series has " + std::to_string(raw.nodes) + " nodes, model.nodes is " +
                      std::to_string(cfg.nodes));
  }
  if (graph.node_count != cfg.nodes) {
    throw ConfigError("edge list covers " + std::to_string(graph.node_count) +
                      " nodes, model.nodes is " + std::to_string(cfg.nodes));
  }
  raw.slices_per_day = cfg.slices_per_day;
  Dataset data;
  data.cfg = cfg;
  data.split = split_train_val_test(raw, cfg);
  data.stats = compute_norm_stats(raw, data.split.train, cfg);
  data.normalized = zscore(raw, data.stats, ZDirection::kNormalize);
  data.raw = std::move(raw);
  const double sigma = adjacency.sigma.value_or(default_sigma(graph));
  data.adj = build_fixed_adjacency(graph, sigma, adjacency.kappa);
  data.graph = std::move(graph);
  return data;
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const std::vector<double> g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

EarlyStopper::EarlyStopper(std::size_t patience, double min_improvement)
    : patience_(patience),
      min_improvement_(min_improvement),
      best_(std::numeric_limits<double>::infinity()) {}

bool EarlyStopper::update(double score) {
  ++epochs_;
  if (score < best_ - min_improvement_ || (std::isinf(best_) && std::isfinite(score))) {
    best_ = score;
    best_epoch_ = epochs_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

ModelParams clone_params(const ModelParams& params, const ModelConfig& cfg) {
  ModelParams out = ModelParams::zeros(cfg);
  auto src = params.named();
  auto dst = out.named();
  if (src.size() != dst.size()) throw ContractError("clone_params: parameter sets differ");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].tensor.shape() != dst[i].tensor.shape()) {
      throw DimensionError("clone_params: shape mismatch for " + src[i].name);
    }
    auto d = dst[i].tensor.mutable_data();
    std::copy(src[i].tensor.data().begin(), src[i].tensor.data().end(), d.begin());
  }
  return out;
}

Ablation ablate(const Ablation& flags) {
  flags.validate();
  return flags;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg, const ModelParams& init,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (data.split.train.empty() || data.split.val.empty()) {
    throw ConfigError("training needs non-empty train and validation splits");
  }
  const Ablation variant = ablate(cfg.ablation);
  ModelParams params = clone_params(init, data.cfg);
  Adam optimizer(param_list(params), cfg.lr);
  EarlyStopper stopper(cfg.patience, cfg.min_improvement);
  std::mt19937_64 rng(cfg.seed);

  TrainResult result;
  result.best = clone_params(params, data.cfg);
  std::vector<std::int64_t> order = data.split.train;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0, batch_no = 0; b < order.size(); b += cfg.batch_size, ++batch_no) {
      const auto anchors = slice(order, b, b + cfg.batch_size);
      const ChannelBatch batch = make_channels(data.normalized, anchors, data.cfg);
      const Tensor pred = model_forward(batch, params, data.cfg, data.adj, variant);
      const Tensor loss = mae_loss(pred, batch.y);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batch_no + 1),
                              static_cast<int>(epoch), static_cast<int>(batch_no + 1));
      }
      optimizer.zero_grad();
      loss.backward();
      optimizer.step();
      loss_sum += value * static_cast<double>(anchors.size());
      seen += anchors.size();
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_mae = loss_sum / static_cast<double>(seen) * data.stats.std;
    record.val_mae = evaluate(data, params, data.split.val, variant, cfg.mape_epsilon, {}).average.mae;
    record.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(record.val_mae)) {
      throw DivergenceError("non-finite validation MAE at epoch " + std::to_string(epoch),
                            static_cast<int>(epoch), 0);
    }
    result.history.push_back(record);
    if (stopper.update(record.val_mae)) result.best = clone_params(params, data.cfg);
    if (on_epoch) on_epoch(record);
    if (stopper.should_stop()) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val_mae = stopper.best();
  return result;
}

Tensor predict(const Dataset& data, const ModelParams& params,
               const std::vector<std::int64_t>& anchors, const Ablation& ablation,
               const NoiseOptions& noise) {
  if (anchors.empty()) throw WindowError("predict: no anchors given");
  NoGradGuard no_grad;
  std::vector<Tensor> parts;
  for (std::size_t b = 0, chunk = 0; b < anchors.size(); b += kEvalChunk, ++chunk) {
    ChannelBatch batch = make_channels(data.normalized, slice(anchors, b, b + kEvalChunk), data.cfg);
    if (noise.std > 0.0) batch = inject_noise(batch, 0.0, noise.std, noise.seed + chunk);
    const Tensor pred = model_forward(batch, params, data.cfg, data.adj, ablation);
    std::vector<double> v(pred.data().begin(), pred.data().end());
    for (auto& x : v) x = zscore_value(x, data.stats, ZDirection::kDenormalize);
    parts.emplace_back(pred.shape(), std::move(v));
  }
  return concat_batches(parts);
}

Tensor targets(const Dataset& data, const std::vector<std::int64_t>& anchors) {
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < anchors.size(); b += kEvalChunk) {
    parts.push_back(make_channels(data.raw, slice(anchors, b, b + kEvalChunk), data.cfg).y);
  }
  return concat_batches(parts);
}

ForecastReport evaluate(const Dataset& data, const ModelParams& params,
                        const std::vector<std::int64_t>& anchors, const Ablation& ablation,
                        double mape_epsilon, const std::vector<std::size_t>& steps,
                        const NoiseOptions& noise) {
  const auto start = std::chrono::steady_clock::now();
  ForecastReport report = build_report(predict(data, params, anchors, ablation, noise),
                                       targets(data, anchors), steps, mape_epsilon);
  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

ForecastReport evaluate_ha(const Dataset& data, const std::vector<std::int64_t>& anchors,
                           const std::vector<double>& weights, double mape_epsilon,
                           const std::vector<std::size_t>& steps) {
  std::vector<Tensor> preds;
  for (std::size_t b = 0; b < anchors.size(); b += kEvalChunk) {
    const ChannelBatch batch = make_channels(data.raw, slice(anchors, b, b + kEvalChunk), data.cfg);
    preds.push_back(ha_baseline(batch, weights, data.cfg.horizon));
  }
  return build_report(concat_batches(preds), targets(data, anchors), steps, mape_epsilon);
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history,
                       const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  if (!comment.empty()) {
    std::istringstream lines(comment);
    std::string l;
    while (std::getline(lines, l)) out << "# " << l << '\n';
  }
  out << "epoch,train_mae,val_mae,elapsed_s\n";
  out << std::setprecision(12);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_mae << ',' << r.val_mae << ',' << std::fixed
        << std::setprecision(3) << r.elapsed_s << std::defaultfloat << std::setprecision(12)
        << '\n';
  }
}

}  // namespace mcsttm
