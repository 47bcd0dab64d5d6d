#include "mcsttm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <nlohmann/json.hpp>

#include "mcsttm/errors.hpp"

namespace mcsttm {

namespace {

using json = nlohmann::json;

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

json config_to_json(const ModelConfig& c) {
  return {{"nodes", c.nodes},       {"p", c.hour_len},  {"d", c.day_len},
          {"q", c.horizon},         {"s", c.slices_per_day}, {"f_d", c.features},
          {"blocks", c.blocks},     {"heads", c.heads}, {"rank", c.rank},
          {"f_h", c.ff_width()}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.nodes = j.at("nodes").get<std::size_t>();
  c.hour_len = j.at("p").get<std::size_t>();
  c.day_len = j.at("d").get<std::size_t>();
  c.horizon = j.at("q").get<std::size_t>();
  c.slices_per_day = j.at("s").get<std::size_t>();
  c.features = j.at("f_d").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.rank = j.at("rank").get<std::size_t>();
  c.hidden = j.at("f_h").get<std::size_t>();
  if (c.hidden == 4 * c.features) c.hidden = 0;
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const ModelParams& params,
                     const Ablation& ablation, const std::string& config_hash) {
  const auto named = params.named();
  json manifest;
  manifest["config"] = config_to_json(config);
  manifest["ablation"] = ablation.name();
  manifest["config_hash"] = config_hash;
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : named) {
    entries.push_back({{"name", name}, {"shape", tensor.shape()}, {"offset", offset}});
    offset += tensor.numel() * sizeof(double);
  }
  manifest["params"] = std::move(entries);
  const std::string text = manifest.dump();

  std::string blob(kCheckpointMagic, kMagicLen);
  put_u64(blob, text.size());
  blob += text;
  blob.reserve(blob.size() + offset);
  for (const auto& [name, tensor] : named) {
    for (double v : tensor.data()) put_u64(blob, std::bit_cast<std::uint64_t>(v));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < kMagicLen + 8 || blob.compare(0, kMagicLen, kCheckpointMagic) != 0) {
    throw CheckpointError(path + ": not a checkpoint (bad magic)");
  }
  const std::uint64_t manifest_len = get_u64(blob, kMagicLen);
  const std::size_t data_start = kMagicLen + 8 + manifest_len;
  if (data_start > blob.size()) throw CheckpointError(path + ": truncated manifest");

  Checkpoint ck;
  json manifest;
  try {
    manifest = json::parse(blob.substr(kMagicLen + 8, manifest_len));
    ck.config = config_from_json(manifest.at("config"));
    ck.ablation = Ablation::parse(manifest.at("ablation").get<std::string>());
    ck.config_hash = manifest.value("config_hash", "");
    ck.config.validate();
  } catch (const json::exception& e) {
    throw CheckpointError(path + ": malformed manifest: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(path + ": " + e.what());
  }

  ck.params = ModelParams::zeros(ck.config);
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, tensor] : ck.params.named()) by_name.emplace(name, tensor);

  const auto& entries = manifest.at("params");
  if (entries.size() != by_name.size()) {
    throw CheckpointError(path + ": manifest lists " + std::to_string(entries.size()) +
                          " parameters, config implies " + std::to_string(by_name.size()));
  }
  for (const auto& entry : entries) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError(path + ": unexpected parameter " + name);
    Tensor& t = it->second;
    if (t.shape() != shape) {
      throw CheckpointError(path + ": parameter " + name + " has shape " + shape_str(shape) +
                            ", config implies " + shape_str(t.shape()));
    }
    if (data_start + offset + t.numel() * sizeof(double) > blob.size()) {
      throw CheckpointError(path + ": truncated data for " + name);
    }
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = std::bit_cast<double>(get_u64(blob, data_start + offset + i * sizeof(double)));
    }
  }
  return ck;
}

}  // namespace mcsttm
