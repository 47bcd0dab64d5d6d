#include "mcsttm/model.hpp"

#include <cmath>
#include <string>

#include "mcsttm/errors.hpp"
#include "mcsttm/ops.hpp"

namespace mcsttm {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(nodes, "nodes");
  positive(hour_len, "p");
  positive(day_len, "d");
  positive(horizon, "q");
  positive(slices_per_day, "s");
  positive(features, "f_d");
  positive(blocks, "blocks");
  positive(heads, "heads");
  positive(rank, "rank");
  if (features % heads != 0) {
    throw ConfigError("model.f_d (" + std::to_string(features) +
                      ") must be divisible by model.heads (" + std::to_string(heads) + ")");
  }
}

void Ablation::validate() const {
  if (no_s_block && no_t_block) {
    throw ConfigError("ablations no_s_block and no_t_block cannot be combined");
  }
}

std::string Ablation::name() const {
  std::string out;
  auto append = [&out](bool flag, const char* n) {
    if (!flag) return;
    if (!out.empty()) out += '+';
    out += n;
  };
  append(no_adaptive, "no_adaptive");
  append(no_fixed_graph, "no_fixed_graph");
  append(no_s_block, "no_s_block");
  append(no_t_block, "no_t_block");
  append(no_multi_channel, "no_multi_channel");
  return out.empty() ? "full" : out;
}

Ablation Ablation::parse(const std::string& name) {
  Ablation a;
  if (name.empty() || name == "full" || name == "none") return a;
  std::size_t start = 0;
  while (start <= name.size()) {
    const std::size_t plus = name.find('+', start);
    const std::string part = name.substr(start, plus == std::string::npos ? plus : plus - start);
    if (part == "no_adaptive") {
      a.no_adaptive = true;
    } else if (part == "no_fixed_graph") {
      a.no_fixed_graph = true;
    } else if (part == "no_s_block") {
      a.no_s_block = true;
    } else if (part == "no_t_block") {
      a.no_t_block = true;
    } else if (part == "no_multi_channel") {
      a.no_multi_channel = true;
    } else {
      throw ConfigError("unknown ablation '" + part + "'");
    }
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  a.validate();
  return a;
}

namespace {

Tensor dense(std::size_t rows, std::size_t cols, Rng& rng) {
  return uniform_tensor({rows, cols}, 1.0 / std::sqrt(static_cast<double>(rows)), rng, true);
}

ChannelParams random_channel(const ModelConfig& cfg, std::size_t len, Rng& rng) {
  ChannelParams c;
  c.expand = dense(1, cfg.features, rng);
  for (std::size_t k = 0; k < cfg.blocks; ++k) {
    BlockParams b;
    b.spatial = SpatialParams::random(cfg.features, rng);
    b.attention = AttentionParams::random(cfg.features, cfg.ff_width(), cfg.heads, rng);
    c.blocks.push_back(std::move(b));
  }
  c.codebook = PositionCodebook::random(cfg.slices_per_day, cfg.features, rng);
  c.out_conv = dense(len * cfg.features, len * cfg.features, rng);
  c.align = dense(len * cfg.features, cfg.hour_len * cfg.features, rng);
  return c;
}

Tensor zero_param(Shape shape) { return Tensor(std::move(shape), 0.0, true); }

ChannelParams zero_channel(const ModelConfig& cfg, std::size_t len) {
  ChannelParams c;
  c.expand = zero_param({1, cfg.features});
  for (std::size_t k = 0; k < cfg.blocks; ++k) {
    BlockParams b;
    b.spatial = {zero_param({cfg.features, cfg.features}), zero_param({cfg.features, cfg.features}),
                 zero_param({cfg.features, cfg.features})};
    b.attention = AttentionParams::zeros(cfg.features, cfg.ff_width(), cfg.heads);
    c.blocks.push_back(std::move(b));
  }
  c.codebook = PositionCodebook::zeros(cfg.slices_per_day, cfg.features);
  c.out_conv = zero_param({len * cfg.features, len * cfg.features});
  c.align = zero_param({len * cfg.features, cfg.hour_len * cfg.features});
  return c;
}

void name_channel(const ChannelParams& c, const std::string& prefix, std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".expand", c.expand});
  for (std::size_t k = 0; k < c.blocks.size(); ++k) {
    const std::string p = prefix + ".block" + std::to_string(k);
    const auto& b = c.blocks[k];
    out.push_back({p + ".spatial.w0", b.spatial.w0});
    out.push_back({p + ".spatial.w1", b.spatial.w1});
    out.push_back({p + ".spatial.w2", b.spatial.w2});
    out.push_back({p + ".attn.w_q", b.attention.w_q});
    out.push_back({p + ".attn.w_k", b.attention.w_k});
    out.push_back({p + ".attn.w_v", b.attention.w_v});
    out.push_back({p + ".ff.w0", b.attention.ff_w0});
    out.push_back({p + ".ff.w1", b.attention.ff_w1});
    out.push_back({p + ".ff.w2", b.attention.ff_w2});
  }
  out.push_back({prefix + ".pos.tod", c.codebook.tod});
  out.push_back({prefix + ".pos.dow", c.codebook.dow});
  out.push_back({prefix + ".out_conv", c.out_conv});
  out.push_back({prefix + ".align", c.align});
}

}  // namespace

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out;
  name_channel(hour, "hour", out);
  name_channel(day, "day", out);
  out.push_back({"graph.e_c", graph.e_c});
  out.push_back({"graph.e_r", graph.e_r});
  out.push_back({"gate.f1", gate_f1});
  out.push_back({"gate.f2", gate_f2});
  out.push_back({"head.conv_a", conv_a});
  out.push_back({"head.conv_b", conv_b});
  return out;
}

ModelParams ModelParams::random(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams p;
  p.hour = random_channel(cfg, cfg.hour_len, rng);
  p.day = random_channel(cfg, cfg.day_len, rng);
  p.graph = AdaptiveEmbeddings::random(cfg.nodes, cfg.rank, rng);
  p.gate_f1 = dense(cfg.features, 1, rng);
  p.gate_f2 = dense(cfg.features, 1, rng);
  p.conv_a = dense(cfg.hour_len * cfg.features, cfg.horizon * cfg.mid_width(), rng);
  p.conv_b = dense(cfg.horizon * cfg.mid_width(), cfg.horizon, rng);
  return p;
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.hour = zero_channel(cfg, cfg.hour_len);
  p.day = zero_channel(cfg, cfg.day_len);
  p.graph = {zero_param({cfg.nodes, cfg.rank}), zero_param({cfg.rank, cfg.nodes})};
  p.gate_f1 = zero_param({cfg.features, 1});
  p.gate_f2 = zero_param({cfg.features, 1});
  p.conv_a = zero_param({cfg.hour_len * cfg.features, cfg.horizon * cfg.mid_width()});
  p.conv_b = zero_param({cfg.horizon * cfg.mid_width(), cfg.horizon});
  return p;
}

BlockSwitches block_switches(const Ablation& ablation) {
  ablation.validate();
  BlockSwitches s;
  s.terms.adaptive = !ablation.no_adaptive;
  s.terms.fixed = !ablation.no_fixed_graph;
  s.spatial = !ablation.no_s_block;
  s.temporal = !ablation.no_t_block;
  return s;
}

Tensor st_block_forward(const Tensor& x, const std::vector<std::int64_t>& time_index,
                        const Tensor& a_adp, const AdjacencyPair& adj, const BlockParams& block,
                        const PositionCodebook& codebook, const BlockSwitches& switches) {
  Tensor h = switches.spatial ? spatial_forward(x, a_adp, adj, block.spatial, switches.terms) : x;
  h = position_encode(h, time_index, codebook);
  return switches.temporal ? temporal_forward(h, block.attention) : h;
}

Tensor channel_pipeline(const Tensor& x, const std::vector<std::int64_t>& time_index,
                        const ChannelParams& channel, const Tensor& a_adp,
                        const AdjacencyPair& adj, std::size_t hour_len,
                        const BlockSwitches& switches) {
  if (x.dim(-1) != 1) {
    throw DimensionError("channel_pipeline: expected a single input feature, got " +
                         shape_str(x.shape()));
  }
  const std::size_t t = x.dim(-2);
  const std::size_t f = channel.expand.dim(1);
  Tensor h = matmul(x, channel.expand);
  // Each block reads the sum of the previous block's input and output; the
  // final sum feeds the output convolution.
  for (const auto& block : channel.blocks) {
    h = add(h, st_block_forward(h, time_index, a_adp, adj, block, channel.codebook, switches));
  }
  const Tensor st = temporal_conv(h, channel.out_conv, t, f);
  return temporal_conv(st, channel.align, hour_len, f);
}

GateOutput gated_fusion(const Tensor& x_hour, const Tensor& x_day, const Tensor& f1,
                        const Tensor& f2) {
  if (x_hour.shape() != x_day.shape()) {
    throw DimensionError("gated_fusion: channel shapes " + shape_str(x_hour.shape()) + " and " +
                         shape_str(x_day.shape()) + " differ");
  }
  const std::size_t f = x_hour.dim(-1);
  if (f1.shape() != Shape{f, 1} || f2.shape() != Shape{f, 1}) {
    throw DimensionError("gated_fusion: gate maps must be " + shape_str({f, 1}));
  }
  GateOutput out;
  out.gate = sigmoid(add(matmul(x_hour, f1), matmul(x_day, f2)));
  out.fused = add(mul(out.gate, x_hour), mul(add_scalar(scale(out.gate, -1.0), 1.0), x_day));
  return out;
}

Tensor prediction_head(const Tensor& fused, const Tensor& conv_a, const Tensor& conv_b,
                       std::size_t horizon, std::size_t mid_width) {
  return temporal_conv(temporal_conv(fused, conv_a, horizon, mid_width), conv_b, horizon, 1);
}

Tensor model_forward(const ChannelBatch& batch, const ModelParams& params,
                     const ModelConfig& cfg, const AdjacencyPair& adj,
                     const Ablation& ablation) {
  const BlockSwitches switches = block_switches(ablation);
  const std::size_t b = batch.size();
  auto expect = [&](const Tensor& t, std::size_t len, const char* what) {
    if (t.shape() != Shape{b, cfg.nodes, len, 1}) {
      throw DimensionError(std::string("model_forward: ") + what + " has shape " +
                           shape_str(t.shape()) + ", expected " +
                           shape_str({b, cfg.nodes, len, 1}));
    }
  };
  expect(batch.x_hour, cfg.hour_len, "x_hour");
  if (!ablation.no_multi_channel) expect(batch.x_day, cfg.day_len, "x_day");

  Tensor a_adp;
  if (switches.spatial && switches.terms.adaptive) {
    a_adp = adaptive_adjacency(params.graph);
  }
  const Tensor hour = channel_pipeline(batch.x_hour, batch.hour_time_index, params.hour, a_adp,
                                       adj, cfg.hour_len, switches);
  const Tensor day = ablation.no_multi_channel
                         ? hour
                         : channel_pipeline(batch.x_day, batch.day_time_index, params.day, a_adp,
                                            adj, cfg.hour_len, switches);
  const GateOutput gate = gated_fusion(hour, day, params.gate_f1, params.gate_f2);
  return prediction_head(gate.fused, params.conv_a, params.conv_b, cfg.horizon,
                         cfg.mid_width());
}

}  // namespace mcsttm
