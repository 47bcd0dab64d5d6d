#pragma once

#include <string>

#include "mcsttm/model.hpp"

namespace mcsttm {

// Binary layout, all integers little-endian:
//   "MCSTTM1"                      7 bytes
//   manifest length                u64
//   manifest                       UTF-8 JSON: config, ablation, config_hash,
//                                  params [{name, shape, offset}]
//   parameter data                 f64 arrays; offsets are relative to the
//                                  first byte after the manifest
struct Checkpoint {
  ModelConfig config;
  Ablation ablation;
  ModelParams params;
  std::string config_hash;
};

inline constexpr char kCheckpointMagic[] = "MCSTTM1";

void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParams& params,
                     const Ablation& ablation = {}, const std::string& config_hash = "");

// Throws CheckpointError on a bad magic, truncated file or manifest that does
// not describe exactly the parameters of its own config.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mcsttm
