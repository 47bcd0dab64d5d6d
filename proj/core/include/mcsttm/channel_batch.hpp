#pragma once

#include <cstdint>
#include <vector>

#include "mcsttm/tensor.hpp"

namespace mcsttm {

// Hour-channel and day-channel windows for a set of anchors, with the
// absolute slice index of every input step for positional encoding.
struct ChannelBatch {
  Tensor x_hour;  // [B, M, p, 1]
  Tensor x_day;   // [B, M, d, 1]
  Tensor y;       // [B, M, q, 1]
  std::vector<std::int64_t> hour_time_index;  // B * p, batch-major
  std::vector<std::int64_t> day_time_index;   // B * d, batch-major
  std::vector<std::int64_t> anchors;          // B

  std::size_t size() const { return anchors.size(); }
};

}  // namespace mcsttm
