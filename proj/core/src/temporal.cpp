#include "mcsttm/temporal.hpp"

#include <cmath>
#include <string>

#include "mcsttm/errors.hpp"
#include "mcsttm/ops.hpp"

namespace mcsttm {

namespace {

constexpr std::size_t kDaysPerWeek = 7;

void check_shape(const Tensor& w, std::size_t rows, std::size_t cols, const char* name) {
  if (w.shape() != Shape{rows, cols}) {
    throw DimensionError(std::string("temporal block: ") + name + " has shape " +
                         shape_str(w.shape()) + ", expected " + shape_str({rows, cols}));
  }
}

std::size_t checked_heads(std::size_t features, std::size_t heads) {
  if (heads == 0 || features % heads != 0) {
    throw ConfigError("feature width " + std::to_string(features) +
                      " is not divisible by head count " + std::to_string(heads));
  }
  return heads;
}

}  // namespace

PositionCodebook PositionCodebook::random(std::size_t slices_per_day, std::size_t features,
                                          Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(features));
  return {uniform_tensor({slices_per_day, features}, bound, rng, true),
          uniform_tensor({kDaysPerWeek, features}, bound, rng, true)};
}

PositionCodebook PositionCodebook::zeros(std::size_t slices_per_day, std::size_t features) {
  return {Tensor({slices_per_day, features}, 0.0, true), Tensor({kDaysPerWeek, features}, 0.0, true)};
}

AttentionParams AttentionParams::random(std::size_t features, std::size_t hidden,
                                        std::size_t heads, Rng& rng) {
  checked_heads(features, heads);
  const double bd = 1.0 / std::sqrt(static_cast<double>(features));
  const double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
  AttentionParams p;
  p.w_q = uniform_tensor({features, features}, bd, rng, true);
  p.w_k = uniform_tensor({features, features}, bd, rng, true);
  p.w_v = uniform_tensor({features, features}, bd, rng, true);
  p.ff_w0 = uniform_tensor({features, hidden}, bd, rng, true);
  p.ff_w1 = uniform_tensor({hidden, hidden}, bh, rng, true);
  p.ff_w2 = uniform_tensor({hidden, features}, bh, rng, true);
  p.heads = heads;
  return p;
}

AttentionParams AttentionParams::zeros(std::size_t features, std::size_t hidden,
                                       std::size_t heads) {
  checked_heads(features, heads);
  AttentionParams p;
  p.w_q = Tensor({features, features}, 0.0, true);
  p.w_k = Tensor({features, features}, 0.0, true);
  p.w_v = Tensor({features, features}, 0.0, true);
  p.ff_w0 = Tensor({features, hidden}, 0.0, true);
  p.ff_w1 = Tensor({hidden, hidden}, 0.0, true);
  p.ff_w2 = Tensor({hidden, features}, 0.0, true);
  p.heads = heads;
  return p;
}

std::size_t tod_slot(std::int64_t slice, std::size_t slices_per_day) {
  return static_cast<std::size_t>(slice) % slices_per_day;
}

std::size_t dow_slot(std::int64_t slice, std::size_t slices_per_day) {
  return (static_cast<std::size_t>(slice) / slices_per_day) % kDaysPerWeek;
}

Tensor position_encode(const Tensor& x, const std::vector<std::int64_t>& time_index,
                       const PositionCodebook& codebook) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw DimensionError("position_encode: expected [M, T, f] or [B, M, T, f], got " +
                         shape_str(x.shape()));
  }
  const std::size_t t = x.dim(-2);
  const std::size_t f = x.dim(-1);
  const std::size_t batch = x.rank() == 4 ? x.dim(0) : 1;
  if (time_index.size() != batch * t) {
    throw DimensionError("position_encode: " + std::to_string(time_index.size()) +
                         " time indices for input " + shape_str(x.shape()));
  }
  if (codebook.tod.dim(1) != f || codebook.dow.dim(1) != f ||
      codebook.dow.dim(0) != kDaysPerWeek) {
    throw DimensionError("position_encode: codebook does not match feature width " +
                         std::to_string(f));
  }
  const std::size_t s = codebook.slices_per_day();
  std::vector<std::size_t> tod_rows(time_index.size());
  std::vector<std::size_t> dow_rows(time_index.size());
  for (std::size_t i = 0; i < time_index.size(); ++i) {
    if (time_index[i] < 0) {
      throw DimensionError("position_encode: negative slice index " +
                           std::to_string(time_index[i]));
    }
    tod_rows[i] = tod_slot(time_index[i], s);
    dow_rows[i] = dow_slot(time_index[i], s);
  }
  Tensor code = add(gather_rows(codebook.tod, tod_rows), gather_rows(codebook.dow, dow_rows));
  // Broadcast over the node axis.
  code = x.rank() == 4 ? reshape(code, {batch, 1, t, f}) : reshape(code, {1, t, f});
  return add(x, code);
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  const Shape& xs = x.shape();
  const std::size_t f = xs.back();
  checked_heads(f, heads);
  Shape split(xs.begin(), xs.end() - 1);
  split.push_back(heads);
  split.push_back(f / heads);
  std::vector<std::size_t> axes(split.size());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 3], axes[axes.size() - 2]);
  return permute(reshape(x, split), axes);
}

Tensor merge_heads(const Tensor& x) {
  if (x.rank() < 4) {
    throw DimensionError("merge_heads: expected [..., M, h, T, d], got " + shape_str(x.shape()));
  }
  std::vector<std::size_t> axes(x.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 3], axes[axes.size() - 2]);
  Tensor swapped = permute(x, axes);
  const Shape& ss = swapped.shape();
  Shape merged(ss.begin(), ss.end() - 2);
  merged.push_back(ss[ss.size() - 2] * ss.back());
  return reshape(swapped, merged);
}

QueryKeyValue qkv_project(const Tensor& x, const AttentionParams& params) {
  const std::size_t f = x.dim(-1);
  check_shape(params.w_q, f, f, "w_q");
  check_shape(params.w_k, f, f, "w_k");
  check_shape(params.w_v, f, f, "w_v");
  return {split_heads(matmul(x, params.w_q), params.heads),
          split_heads(matmul(x, params.w_k), params.heads),
          split_heads(matmul(x, params.w_v), params.heads)};
}

Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t d_scale) {
  if (q.shape() != k.shape()) {
    throw DimensionError("attention_scores: query " + shape_str(q.shape()) + " and key " +
                         shape_str(k.shape()) + " differ");
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(d_scale));
  return softmax_lastdim(scale(matmul(q, transpose_last2(k)), inv));
}

Tensor temporal_forward(const Tensor& x, const AttentionParams& params) {
  const std::size_t f = x.dim(-1);
  const std::size_t hidden = params.ff_w0.dim(-1);
  check_shape(params.ff_w0, f, hidden, "ff_w0");
  check_shape(params.ff_w1, hidden, hidden, "ff_w1");
  check_shape(params.ff_w2, hidden, f, "ff_w2");
  const QueryKeyValue qkv = qkv_project(x, params);
  const Tensor scores = attention_scores(qkv.q, qkv.k, f);
  const Tensor m = add(merge_heads(matmul(scores, qkv.v)), x);
  const Tensor ff = matmul(relu(matmul(relu(matmul(m, params.ff_w0)), params.ff_w1)), params.ff_w2);
  return add(ff, m);
}

}  // namespace mcsttm
