#include "mcsttm/grad_suite.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "mcsttm/graph.hpp"
#include "mcsttm/ops.hpp"
#include "mcsttm/random.hpp"

namespace mcsttm {

namespace {

// Keeps relu and abs inputs clear of their kink.
Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t = uniform_tensor(std::move(shape), 1.0, rng);
  for (auto& v : t.mutable_data()) v = (v < 0.0 ? -1.0 : 1.0) * (0.1 + 0.9 * std::fabs(v));
  return t;
}

void append(GradCheckReport& into, const std::string& prefix, const GradCheckReport& part) {
  for (auto e : part.entries) {
    e.name = prefix + "/" + e.name;
    into.entries.push_back(std::move(e));
  }
}

ChannelBatch random_batch(const ModelConfig& cfg, std::size_t batch, Rng& rng) {
  ChannelBatch b;
  b.x_hour = uniform_tensor({batch, cfg.nodes, cfg.hour_len, 1}, 1.0, rng);
  b.x_day = uniform_tensor({batch, cfg.nodes, cfg.day_len, 1}, 1.0, rng);
  b.y = uniform_tensor({batch, cfg.nodes, cfg.horizon, 1}, 1.0, rng);
  const std::int64_t s = static_cast<std::int64_t>(cfg.slices_per_day);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::int64_t t = cfg.day_len * s + 37 * static_cast<std::int64_t>(i) + 5;
    b.anchors.push_back(t);
    for (std::size_t k = 0; k < cfg.hour_len; ++k) {
      b.hour_time_index.push_back(t - static_cast<std::int64_t>(cfg.hour_len - 1 - k));
    }
    for (std::size_t k = 0; k < cfg.day_len; ++k) {
      b.day_time_index.push_back(t - static_cast<std::int64_t>(cfg.day_len - k) * s);
    }
  }
  return b;
}

AdjacencyPair chain_adjacency(std::size_t nodes) {
  RoadGraph g;
  g.node_count = nodes;
  for (std::size_t i = 0; i + 1 < nodes; ++i) {
    g.edges.push_back({i, i + 1, 1.0 + 0.5 * static_cast<double>(i)});
    g.edges.push_back({i + 1, i, 2.0});
  }
  return build_fixed_adjacency(g, default_sigma(g), 0.1);
}

}  // namespace

GradCheckReport check_operations(const GradCheckOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  GradCheckReport report;
  report.tolerance = options.tolerance;
  unsigned w = 1;

  {
    Tensor a = uniform_tensor({3, 4}, 1.0, rng);
    Tensor b = uniform_tensor({4, 2}, 1.0, rng);
    append(report, "matmul", grad_check([&] { return weighted_reduction(matmul(a, b), w); },
                                        {a, b}, {"a", "b"}, options));
  }
  {
    Tensor a = uniform_tensor({2, 3, 4}, 1.0, rng);
    Tensor b = uniform_tensor({1, 4, 2}, 1.0, rng);
    append(report, "matmul_broadcast",
           grad_check([&] { return weighted_reduction(matmul(a, b), w + 1); }, {a, b}, {"a", "b"},
                      options));
  }
  for (auto [name, op] : {std::pair{"add", ElementwiseOp::kAdd}, std::pair{"sub", ElementwiseOp::kSub},
                          std::pair{"mul", ElementwiseOp::kMul}}) {
    Tensor a = uniform_tensor({2, 1}, 1.0, rng);
    Tensor b = uniform_tensor({2, 3}, 1.0, rng);
    append(report, std::string(name) + "_broadcast",
           grad_check([&, op = op] { return weighted_reduction(elementwise(op, a, b), w + 2); },
                      {a, b}, {"a", "b"}, options));
  }
  {
    Tensor a = uniform_tensor({2, 3}, 1.0, rng);
    append(report, "scale", grad_check([&] { return weighted_reduction(scale(a, -0.7), w); }, {a},
                                       {"x"}, options));
    append(report, "add_scalar",
           grad_check([&] { return weighted_reduction(add_scalar(a, 0.3), w); }, {a}, {"x"},
                      options));
  }
  for (auto [name, kind] : {std::pair{"relu", Activation::kRelu},
                            std::pair{"sigmoid", Activation::kSigmoid},
                            std::pair{"tanh", Activation::kTanh}}) {
    Tensor x = away_from_zero({3, 4}, rng);
    append(report, name,
           grad_check([&, kind = kind] { return weighted_reduction(activation(kind, x), w + 3); },
                      {x}, {"x"}, options));
  }
  {
    Tensor x = away_from_zero({3, 4}, rng);
    append(report, "abs",
           grad_check([&] { return weighted_reduction(abs(x), w); }, {x}, {"x"}, options));
  }
  {
    Tensor x = uniform_tensor({2, 3, 5}, 1.0, rng);
    append(report, "softmax",
           grad_check([&] { return weighted_reduction(softmax_lastdim(x), w + 4); }, {x}, {"x"},
                      options));
  }
  {
    Tensor x = uniform_tensor({2, 3}, 1.0, rng);
    append(report, "sum", grad_check([&] { return sum(x); }, {x}, {"x"}, options));
    append(report, "mean", grad_check([&] { return mean(x); }, {x}, {"x"}, options));
  }
  {
    Tensor x = uniform_tensor({2, 3, 4}, 1.0, rng);
    append(report, "reshape",
           grad_check([&] { return weighted_reduction(reshape(x, {6, 4}), w); }, {x}, {"x"},
                      options));
    append(report, "permute",
           grad_check([&] { return weighted_reduction(permute(x, {2, 0, 1}), w); }, {x}, {"x"},
                      options));
    append(report, "transpose_last2",
           grad_check([&] { return weighted_reduction(transpose_last2(x), w); }, {x}, {"x"},
                      options));
  }
  {
    Tensor table = uniform_tensor({4, 3}, 1.0, rng);
    append(report, "gather_rows",
           grad_check([&] { return weighted_reduction(gather_rows(table, {2, 0, 2, 3}), w); },
                      {table}, {"table"}, options));
  }
  {
    Tensor x = uniform_tensor({3, 4, 2}, 1.0, rng);
    Tensor kernel = uniform_tensor({8, 6}, 1.0, rng);
    append(report, "temporal_conv",
           grad_check([&] { return weighted_reduction(temporal_conv(x, kernel, 2, 3), w + 5); },
                      {x, kernel}, {"x", "kernel"}, options));
  }
  return report;
}

GradCheckReport check_st_block(const GradCheckOptions& options, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t nodes = 3;
  const std::size_t steps = 4;
  const std::size_t f = 4;
  const std::size_t s = 12;
  Tensor x = uniform_tensor({nodes, steps, f}, 1.0, rng);
  const AdjacencyPair adj = chain_adjacency(nodes);
  AdaptiveEmbeddings emb = AdaptiveEmbeddings::random(nodes, 2, rng);
  BlockParams block{SpatialParams::random(f, rng), AttentionParams::random(f, 8, 2, rng)};
  PositionCodebook codebook = PositionCodebook::random(s, f, rng);
  const std::vector<std::int64_t> time_index{30, 31, 32, 33};

  auto f_block = [&] {
    const Tensor a_adp = adaptive_adjacency(emb);
    return weighted_reduction(st_block_forward(x, time_index, a_adp, adj, block, codebook), 7);
  };
  const auto& sp = block.spatial;
  const auto& at = block.attention;
  return grad_check(f_block,
                    {x, emb.e_c, emb.e_r, sp.w0, sp.w1, sp.w2, at.w_q, at.w_k, at.w_v, at.ff_w0,
                     at.ff_w1, at.ff_w2, codebook.tod, codebook.dow},
                    {"x", "e_c", "e_r", "spatial.w0", "spatial.w1", "spatial.w2", "attn.w_q",
                     "attn.w_k", "attn.w_v", "ff.w0", "ff.w1", "ff.w2", "pos.tod", "pos.dow"},
                    options);
}

ModelConfig tiny_model_config() {
  ModelConfig cfg;
  cfg.nodes = 3;
  cfg.hour_len = 4;
  cfg.day_len = 2;
  cfg.horizon = 2;
  cfg.slices_per_day = 12;
  cfg.features = 4;
  cfg.blocks = 1;
  cfg.heads = 2;
  cfg.rank = 2;
  cfg.hidden = 8;
  return cfg;
}

GradCheckReport check_model(const ModelConfig& cfg, const Ablation& ablation,
                            const GradCheckOptions& options, std::uint64_t seed) {
  cfg.validate();
  ablation.validate();
  Rng rng(seed);
  const ChannelBatch batch = random_batch(cfg, 2, rng);
  const AdjacencyPair adj = chain_adjacency(cfg.nodes);
  const ModelParams params = ModelParams::random(cfg, seed + 1);
  std::vector<Tensor> inputs;
  std::vector<std::string> names;
  for (const auto& [name, t] : params.named()) {
    inputs.push_back(t);
    names.push_back(name);
  }
  auto f_model = [&] {
    return weighted_reduction(model_forward(batch, params, cfg, adj, ablation), 11);
  };
  return grad_check(f_model, std::move(inputs), std::move(names), options);
}

}  // namespace mcsttm
