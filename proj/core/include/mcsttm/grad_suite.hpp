#pragma once

#include <cstdint>

#include "mcsttm/grad_check.hpp"
#include "mcsttm/model.hpp"

namespace mcsttm {

// Central-difference checks of every differentiable operation on random
// inputs in [-1, 1]. Entry names are "<op>/<input>".
GradCheckReport check_operations(const GradCheckOptions& options = {}, std::uint64_t seed = 0);

// One ST block on a 3-node, 4-step input; every block parameter is checked.
GradCheckReport check_st_block(const GradCheckOptions& options = {}, std::uint64_t seed = 0);

// Smallest model the suite uses: M=3, p=4, d=2, q=2, f_d=4, K=1, h=2.
ModelConfig tiny_model_config();

// Every named parameter of the full model against a weighted output sum.
GradCheckReport check_model(const ModelConfig& cfg, const Ablation& ablation = {},
                            const GradCheckOptions& options = {}, std::uint64_t seed = 0);

}  // namespace mcsttm
