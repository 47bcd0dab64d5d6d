#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcsttm/graph.hpp"
#include "mcsttm/grad_check.hpp"
#include "mcsttm/model.hpp"
#include "mcsttm/synthetic.hpp"
#include "mcsttm/training.hpp"

namespace mcsttm::cli {

enum class ValueKind { kUint, kReal, kBool, kText, kPath };

struct KeySpec {
  std::string key;
  ValueKind kind;
  std::string fallback;  // empty: unset unless given
};

// Every key a run understands, sorted by name.
const std::vector<KeySpec>& schema();

// Resolved "section.key = value" settings. Values are stored in canonical
// form so that equal settings hash equally however they were spelled.
class RunConfig {
 public:
  // Lines "section.key = value"; '#' starts a comment. Throws ConfigError
  // naming the file and line for unknown keys or malformed values.
  void load_file(const std::string& path);
  // "section.key=value"
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  // Given explicitly, in a file or an override.
  bool is_set(const std::string& key) const { return values_.count(key) > 0; }
  std::string text(const std::string& key) const;
  std::uint64_t uint(const std::string& key) const;
  double real(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::optional<double> optional_real(const std::string& key) const;

  // FNV-1a over the sorted non-path settings, as 16 hex digits.
  std::string hash() const;
  // Sorted "key = value" lines of everything set explicitly.
  std::string dump() const;

  // model.nodes = 0 means "take it from the data".
  ModelConfig model(std::size_t nodes_from_data = 0) const;
  TrainConfig train() const;
  AdjacencyOptions adjacency() const;
  GradCheckOptions gradcheck() const;
  SynthSpec synth() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace mcsttm::cli
