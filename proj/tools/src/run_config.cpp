#include "mcsttm_cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mcsttm/errors.hpp"

namespace mcsttm::cli {

namespace {

const KeySpec* find_key(const std::string& key) {
  const auto& all = schema();
  auto it = std::lower_bound(all.begin(), all.end(), key,
                             [](const KeySpec& s, const std::string& k) { return s.key < k; });
  return it != all.end() && it->key == key ? &*it : nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string canonical(const KeySpec& spec, const std::string& raw) {
  const std::string v = trim(raw);
  auto bad = [&](const char* what) {
    return ConfigError(spec.key + ": '" + v + "' is not " + what);
  };
  switch (spec.kind) {
    case ValueKind::kUint: {
      std::uint64_t out = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || p != v.data() + v.size() || v.empty()) {
        throw bad("a nonnegative integer");
      }
      return std::to_string(out);
    }
    case ValueKind::kReal: {
      double out = 0.0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
      if (ec != std::errc() || p != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
        throw bad("a finite number");
      }
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof(buf), out);
      return std::string(buf, res.ptr);
    }
    case ValueKind::kBool:
      if (v == "true" || v == "1" || v == "yes" || v == "on") return "true";
      if (v == "false" || v == "0" || v == "no" || v == "off") return "false";
      throw bad("a boolean");
    case ValueKind::kText:
    case ValueKind::kPath:
      return v;
  }
  return v;
}

}  // namespace

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = [] {
    std::vector<KeySpec> k{
        {"data.bundle", ValueKind::kPath, ""},
        {"data.edges", ValueKind::kPath, ""},
        {"data.series", ValueKind::kPath, ""},
        {"eval.checkpoint", ValueKind::kPath, ""},
        {"eval.export_adjacency", ValueKind::kPath, ""},
        {"eval.noise_seed", ValueKind::kUint, "0"},
        {"eval.noise_std", ValueKind::kReal, ""},
        {"eval.split", ValueKind::kText, "test"},
        {"gradcheck.floor", ValueKind::kReal, "0.001"},
        {"gradcheck.model_tolerance", ValueKind::kReal, "0.001"},
        {"gradcheck.seed", ValueKind::kUint, "0"},
        {"gradcheck.step", ValueKind::kReal, "1e-05"},
        {"gradcheck.tolerance", ValueKind::kReal, "0.0001"},
        {"graph.kappa", ValueKind::kReal, "0.1"},
        {"graph.sigma", ValueKind::kReal, ""},
        {"model.blocks", ValueKind::kUint, "2"},
        {"model.day_len", ValueKind::kUint, "7"},
        {"model.features", ValueKind::kUint, "64"},
        {"model.heads", ValueKind::kUint, "4"},
        {"model.hidden", ValueKind::kUint, "0"},
        {"model.horizon", ValueKind::kUint, "12"},
        {"model.hour_len", ValueKind::kUint, "12"},
        {"model.nodes", ValueKind::kUint, "0"},
        {"model.rank", ValueKind::kUint, "10"},
        {"model.slices_per_day", ValueKind::kUint, "288"},
        {"output.dir", ValueKind::kPath, "."},
        {"output.record_time", ValueKind::kBool, "false"},
        {"synth.coupling", ValueKind::kReal, "0.2"},
        {"synth.days", ValueKind::kUint, "14"},
        {"synth.nodes", ValueKind::kUint, "5"},
        {"synth.noise_std", ValueKind::kReal, "5"},
        {"synth.seed", ValueKind::kUint, "0"},
        {"synth.weekly_modulation", ValueKind::kReal, "0.3"},
        {"train.ablation", ValueKind::kText, "full"},
        {"train.batch_size", ValueKind::kUint, "64"},
        {"train.lr", ValueKind::kReal, "0.0001"},
        {"train.mape_epsilon", ValueKind::kReal, "1"},
        {"train.max_epochs", ValueKind::kUint, "200"},
        {"train.min_improvement", ValueKind::kReal, "1e-06"},
        {"train.patience", ValueKind::kUint, "15"},
        {"train.seed", ValueKind::kUint, "0"},
    };
    std::sort(k.begin(), k.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    return k;
  }();
  return keys;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(number) + ": expected 'section.key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  values_[key] = canonical(*spec, value);
}

bool RunConfig::has(const std::string& key) const {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  return values_.count(key) > 0 || !spec->fallback.empty();
}

std::string RunConfig::text(const std::string& key) const {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  auto it = values_.find(key);
  return it != values_.end() ? it->second : spec->fallback;
}

std::uint64_t RunConfig::uint(const std::string& key) const {
  const std::string v = text(key);
  if (v.empty()) throw ConfigError(key + " is not set");
  return std::stoull(v);
}

double RunConfig::real(const std::string& key) const {
  const std::string v = text(key);
  if (v.empty()) throw ConfigError(key + " is not set");
  double out = 0.0;
  std::from_chars(v.data(), v.data() + v.size(), out);
  return out;
}

bool RunConfig::flag(const std::string& key) const { return text(key) == "true"; }

std::optional<double> RunConfig::optional_real(const std::string& key) const {
  if (text(key).empty()) return std::nullopt;
  return real(key);
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& spec : schema()) {
    if (spec.kind == ValueKind::kPath) continue;
    const std::string v = text(spec.key);
    if (v.empty()) continue;
    mix(spec.key);
    mix("=");
    mix(v);
    mix("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  return out.str();
}

ModelConfig RunConfig::model(std::size_t nodes_from_data) const {
  ModelConfig cfg;
  cfg.nodes = uint("model.nodes");
  if (cfg.nodes == 0) cfg.nodes = nodes_from_data;
  cfg.hour_len = uint("model.hour_len");
  cfg.day_len = uint("model.day_len");
  cfg.horizon = uint("model.horizon");
  cfg.slices_per_day = uint("model.slices_per_day");
  cfg.features = uint("model.features");
  cfg.blocks = uint("model.blocks");
  cfg.heads = uint("model.heads");
  cfg.rank = uint("model.rank");
  cfg.hidden = uint("model.hidden");
  return cfg;
}

TrainConfig RunConfig::train() const {
  TrainConfig cfg;
  cfg.lr = real("train.lr");
  cfg.batch_size = uint("train.batch_size");
  cfg.max_epochs = uint("train.max_epochs");
  cfg.patience = uint("train.patience");
  cfg.seed = uint("train.seed");
  cfg.mape_epsilon = real("train.mape_epsilon");
  cfg.min_improvement = real("train.min_improvement");
  cfg.ablation = Ablation::parse(text("train.ablation"));
  return cfg;
}

AdjacencyOptions RunConfig::adjacency() const {
  AdjacencyOptions opts;
  opts.sigma = optional_real("graph.sigma");
  opts.kappa = real("graph.kappa");
  return opts;
}

GradCheckOptions RunConfig::gradcheck() const {
  GradCheckOptions opts;
  opts.step = real("gradcheck.step");
  opts.tolerance = real("gradcheck.tolerance");
  opts.floor = real("gradcheck.floor");
  return opts;
}

SynthSpec RunConfig::synth() const {
  SynthSpec spec;
  spec.nodes = uint("synth.nodes");
  spec.days = uint("synth.days");
  spec.slices_per_day = uint("model.slices_per_day");
  spec.coupling = real("synth.coupling");
  spec.noise_std = real("synth.noise_std");
  spec.weekly_modulation = real("synth.weekly_modulation");
  spec.seed = uint("synth.seed");
  return spec;
}

}  // namespace mcsttm::cli
