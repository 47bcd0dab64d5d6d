#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcsttm/channel_batch.hpp"
#include "mcsttm/graph.hpp"
#include "mcsttm/spatial.hpp"
#include "mcsttm/temporal.hpp"
#include "mcsttm/tensor.hpp"

namespace mcsttm {

struct ModelConfig {
  std::size_t nodes = 0;          // M
  std::size_t hour_len = 12;      // p
  std::size_t day_len = 7;        // d
  std::size_t horizon = 12;       // q
  std::size_t slices_per_day = 288;
  std::size_t features = 64;      // f_d
  std::size_t blocks = 2;         // K
  std::size_t heads = 4;
  std::size_t rank = 10;          // adaptive embedding rank
  std::size_t hidden = 0;         // feed-forward width; 0 means 4 * f_d

  std::size_t ff_width() const { return hidden == 0 ? 4 * features : hidden; }
  std::size_t mid_width() const { return features / 2 == 0 ? 1 : features / 2; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Structural switches for ablation variants. All false is the full model.
struct Ablation {
  bool no_adaptive = false;
  bool no_fixed_graph = false;
  bool no_s_block = false;
  bool no_t_block = false;
  bool no_multi_channel = false;

  void validate() const;
  std::string name() const;
  // "full", "no_adaptive", ... ; throws ConfigError on unknown names.
  static Ablation parse(const std::string& name);
  bool operator==(const Ablation&) const = default;
};

struct BlockParams {
  SpatialParams spatial;
  AttentionParams attention;
};

struct ChannelParams {
  Tensor expand;  // 1 x f_d
  std::vector<BlockParams> blocks;
  PositionCodebook codebook;
  Tensor out_conv;  // (T f_d) x (T f_d)
  Tensor align;     // (T f_d) x (p f_d)
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct ModelParams {
  ChannelParams hour;
  ChannelParams day;
  AdaptiveEmbeddings graph;
  Tensor gate_f1;  // f_d x 1
  Tensor gate_f2;  // f_d x 1
  Tensor conv_a;   // (p f_d) x (q f_mid)
  Tensor conv_b;   // (q f_mid) x q

  // Every learnable array under a stable name, in a fixed order. The
  // handles alias the parameters, so writes through them update the model.
  std::vector<NamedTensor> named() const;

  static ModelParams random(const ModelConfig& cfg, std::uint64_t seed);
  static ModelParams zeros(const ModelConfig& cfg);
};

struct BlockSwitches {
  SpatialTerms terms;
  bool spatial = true;
  bool temporal = true;
};

BlockSwitches block_switches(const Ablation& ablation);

// Spatial mixing, positional encoding, temporal attention; shape preserved.
Tensor st_block_forward(const Tensor& x, const std::vector<std::int64_t>& time_index,
                        const Tensor& a_adp, const AdjacencyPair& adj, const BlockParams& block,
                        const PositionCodebook& codebook, const BlockSwitches& switches = {});

// [B, M, T, 1] -> [B, M, p, f_d]: expand, residual-chained blocks, output
// convolution over the final sum, alignment to p steps.
Tensor channel_pipeline(const Tensor& x, const std::vector<std::int64_t>& time_index,
                        const ChannelParams& channel, const Tensor& a_adp,
                        const AdjacencyPair& adj, std::size_t hour_len,
                        const BlockSwitches& switches = {});

struct GateOutput {
  Tensor gate;   // [..., M, p, 1]
  Tensor fused;  // [..., M, p, f_d]
};

GateOutput gated_fusion(const Tensor& x_hour, const Tensor& x_day, const Tensor& f1,
                        const Tensor& f2);

// [..., M, p, f_d] -> [..., M, q, 1] through two dense temporal maps.
Tensor prediction_head(const Tensor& fused, const Tensor& conv_a, const Tensor& conv_b,
                       std::size_t horizon, std::size_t mid_width);

// Full forward pass for a batch: [B, M, q, 1].
Tensor model_forward(const ChannelBatch& batch, const ModelParams& params,
                     const ModelConfig& cfg, const AdjacencyPair& adj,
                     const Ablation& ablation = {});

}  // namespace mcsttm
