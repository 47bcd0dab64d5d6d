#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mcsttm/random.hpp"
#include "mcsttm/tensor.hpp"

namespace mcsttm {

// Learned lookup tables for time of day (s rows) and day of week (7 rows).
struct PositionCodebook {
  Tensor tod;  // s x f_d
  Tensor dow;  // 7 x f_d

  static PositionCodebook random(std::size_t slices_per_day, std::size_t features, Rng& rng);
  static PositionCodebook zeros(std::size_t slices_per_day, std::size_t features);
  std::size_t slices_per_day() const { return tod.dim(0); }
};

struct AttentionParams {
  Tensor w_q;    // f_d x f_d
  Tensor w_k;    // f_d x f_d
  Tensor w_v;    // f_d x f_d
  Tensor ff_w0;  // f_d x f_h
  Tensor ff_w1;  // f_h x f_h
  Tensor ff_w2;  // f_h x f_d
  std::size_t heads = 1;

  static AttentionParams random(std::size_t features, std::size_t hidden, std::size_t heads,
                                Rng& rng);
  static AttentionParams zeros(std::size_t features, std::size_t hidden, std::size_t heads);
};

// Time-of-day and day-of-week rows for absolute slice indices.
std::size_t tod_slot(std::int64_t slice, std::size_t slices_per_day);
std::size_t dow_slot(std::int64_t slice, std::size_t slices_per_day);

// x[M, T, f] with T indices, or x[B, M, T, f] with B * T indices (row-major
// over batch then time). Adds tod[idx mod s] + dow[(idx div s) mod 7].
Tensor position_encode(const Tensor& x, const std::vector<std::int64_t>& time_index,
                       const PositionCodebook& codebook);

struct QueryKeyValue {
  Tensor q;  // [..., M, h, T, f/h]
  Tensor k;
  Tensor v;
};

QueryKeyValue qkv_project(const Tensor& x, const AttentionParams& params);

// [..., M, T, f] -> [..., M, h, T, f/h]
Tensor split_heads(const Tensor& x, std::size_t heads);
// [..., M, h, T, f/h] -> [..., M, T, f]
Tensor merge_heads(const Tensor& x);

// softmax(Q K^T / sqrt(d_scale)) over key time; no causal mask.
Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t d_scale);

// M = merge(S V) + x;  out = relu(relu(M W0) W1) W2 + M.
Tensor temporal_forward(const Tensor& x, const AttentionParams& params);

}  // namespace mcsttm
