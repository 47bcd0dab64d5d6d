#include "mcsttm/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string_view>
#include <unordered_map>

#include "mcsttm/errors.hpp"

namespace mcsttm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Yields (line number, content) for every non-empty, non-comment line.
class CsvReader {
 public:
  explicit CsvReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw InputError("cannot open " + path);
  }

  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      const auto t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      return true;
    }
    return false;
  }

  std::size_t line_no() const { return line_no_; }
  std::string where() const { return path_ + ":" + std::to_string(line_no_); }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

void write_comment(std::ostream& out, const std::string& comment) {
  if (comment.empty()) return;
  std::istringstream lines(comment);
  std::string l;
  while (std::getline(lines, l)) out << "# " << l << '\n';
}

}  // namespace

SeriesTable load_series_csv(const std::string& path, std::size_t slices_per_day) {
  CsvReader reader(path);
  std::string line;
  if (!reader.next(line)) throw InputError(path + ": empty file, expected a header");
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "slice_index") {
    throw InputError(reader.where() + ": header must start with 'slice_index'");
  }
  if (header.size() < 2) throw InputError(reader.where() + ": header lists no node columns");

  SeriesTable table;
  table.slices_per_day = slices_per_day;
  table.nodes = header.size() - 1;
  for (std::size_t c = 1; c < header.size(); ++c) {
    const auto h = header[c];
    if (h.substr(0, 5) != "node_" || h.size() == 5) {
      throw InputError(reader.where() + ": column " + std::to_string(c + 1) + " header '" +
                       std::string(h) + "' is not node_<id>");
    }
    table.node_ids.emplace_back(h.substr(5));
  }

  std::int64_t expected = 0;
  while (reader.next(line)) {
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw InputError(reader.where() + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    }
    std::int64_t slice = 0;
    if (!parse_int(fields[0], slice) || slice < 0) {
      throw InputError(reader.where() + ", column 1: invalid slice index '" +
                       std::string(fields[0]) + "'");
    }
    if (table.rows == 0) {
      table.start_index = slice;
    } else if (slice > expected) {
      throw InputError(reader.where() + ": missing slice " + std::to_string(expected));
    } else if (slice != expected) {
      throw InputError(reader.where() + ": slice " + std::to_string(slice) +
                       " out of order, expected " + std::to_string(expected));
    }
    expected = slice + 1;
    for (std::size_t c = 1; c < fields.size(); ++c) {
      double v = 0.0;
      if (!parse_double(fields[c], v)) {
        throw InputError(reader.where() + ", column " + std::to_string(c + 1) +
                         ": cannot parse '" + std::string(fields[c]) + "' as a number");
      }
      table.values.push_back(v);
    }
    ++table.rows;
  }
  if (table.rows == 0) throw InputError(path + ": no data rows");
  return table;
}

void write_series_csv(const std::string& path, const SeriesTable& table,
                      const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  write_comment(out, comment);
  out << "slice_index";
  const auto ids = table.node_ids.empty() ? default_node_ids(table.nodes) : table.node_ids;
  for (const auto& id : ids) out << ",node_" << id;
  out << '\n';
  for (std::size_t r = 0; r < table.rows; ++r) {
    out << table.start_index + static_cast<std::int64_t>(r);
    for (std::size_t n = 0; n < table.nodes; ++n) out << ',' << format_double(table.at(r, n));
    out << '\n';
  }
}

RoadGraph load_edges_csv(const std::string& path, const std::vector<std::string>& node_ids,
                         std::vector<std::string>* warnings) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < node_ids.size(); ++i) index.emplace(node_ids[i], i);

  CsvReader reader(path);
  std::string line;
  if (!reader.next(line)) throw InputError(path + ": empty file, expected header from,to,distance");
  const auto header = split_fields(line);
  if (header.size() != 3 || header[0] != "from" || header[1] != "to" ||
      header[2] != "distance") {
    throw InputError(reader.where() + ": header must be 'from,to,distance'");
  }

  RoadGraph graph;
  graph.node_count = node_ids.size();
  graph.node_ids = node_ids;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> position;
  while (reader.next(line)) {
    const auto fields = split_fields(line);
    if (fields.size() != 3) {
      throw InputError(reader.where() + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    }
    std::size_t ends[2];
    for (int k = 0; k < 2; ++k) {
      auto it = index.find(std::string(fields[k]));
      if (it == index.end()) {
        throw InputError(reader.where() + ": unknown node id '" + std::string(fields[k]) + "'");
      }
      ends[k] = it->second;
    }
    double dist = 0.0;
    if (!parse_double(fields[2], dist) || dist < 0.0) {
      throw InputError(reader.where() + ", column 3: invalid distance '" +
                       std::string(fields[2]) + "'");
    }
    if (ends[0] == ends[1]) {
      throw InputError(reader.where() + ": self-loop on node '" + std::string(fields[0]) + "'");
    }
    const auto key = std::make_pair(ends[0], ends[1]);
    if (auto it = position.find(key); it != position.end()) {
      graph.edges[it->second].distance = dist;
      if (warnings) {
        warnings->push_back(reader.where() + ": duplicate edge " + std::string(fields[0]) +
                            "->" + std::string(fields[1]) + ", keeping the last distance");
      }
      continue;
    }
    position.emplace(key, graph.edges.size());
    graph.edges.push_back({ends[0], ends[1], dist});
  }
  graph.validate();
  return graph;
}

void write_edges_csv(const std::string& path, const RoadGraph& graph, const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  write_comment(out, comment);
  const auto ids = graph.node_ids.empty() ? default_node_ids(graph.node_count) : graph.node_ids;
  out << "from,to,distance\n";
  for (const auto& e : graph.edges) {
    out << ids[e.from] << ',' << ids[e.to] << ',' << format_double(e.distance) << '\n';
  }
}

std::vector<std::string> default_node_ids(std::size_t count) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < count; ++i) ids.push_back(std::to_string(i));
  return ids;
}

std::vector<std::int64_t> valid_anchors(const SeriesTable& table, const ModelConfig& cfg) {
  const auto s = static_cast<std::int64_t>(table.slices_per_day);
  const auto lookback = std::max<std::int64_t>(static_cast<std::int64_t>(cfg.hour_len) - 1,
                                               static_cast<std::int64_t>(cfg.day_len) * s);
  std::vector<std::int64_t> out;
  const std::int64_t first = table.start_index + lookback;
  const std::int64_t last = table.end_index() - 1 - static_cast<std::int64_t>(cfg.horizon);
  for (std::int64_t t = first; t <= last; ++t) out.push_back(t);
  return out;
}

ChannelBatch make_channels(const SeriesTable& table, const std::vector<std::int64_t>& anchors,
                           const ModelConfig& cfg) {
  if (anchors.empty()) throw WindowError("make_channels: no anchors given");
  if (table.nodes != cfg.nodes) {
    throw DimensionError("make_channels: table has " + std::to_string(table.nodes) +
                         " nodes, config expects " + std::to_string(cfg.nodes));
  }
  const std::size_t b = anchors.size();
  const std::size_t m = table.nodes;
  const std::size_t p = cfg.hour_len;
  const std::size_t d = cfg.day_len;
  const std::size_t q = cfg.horizon;
  const auto s = static_cast<std::int64_t>(table.slices_per_day);

  std::vector<double> xh(b * m * p);
  std::vector<double> xd(b * m * d);
  std::vector<double> y(b * m * q);
  ChannelBatch batch;
  batch.anchors = anchors;
  batch.hour_time_index.reserve(b * p);
  batch.day_time_index.reserve(b * d);
  for (std::size_t i = 0; i < b; ++i) {
    const std::int64_t t = anchors[i];
    const std::int64_t earliest = std::min(t - static_cast<std::int64_t>(p) + 1,
                                           t - static_cast<std::int64_t>(d) * s);
    if (earliest < table.start_index ||
        t + static_cast<std::int64_t>(q) >= table.end_index()) {
      throw WindowError("anchor " + std::to_string(t) + " has windows outside slices [" +
                        std::to_string(table.start_index) + ", " +
                        std::to_string(table.end_index()) + ")");
    }
    for (std::size_t k = 0; k < p; ++k) {
      batch.hour_time_index.push_back(t - static_cast<std::int64_t>(p - 1 - k));
    }
    for (std::size_t k = 0; k < d; ++k) {
      batch.day_time_index.push_back(t - static_cast<std::int64_t>(d - k) * s);
    }
    for (std::size_t n = 0; n < m; ++n) {
      for (std::size_t k = 0; k < p; ++k) {
        xh[(i * m + n) * p + k] = table.at(table.row_of(batch.hour_time_index[i * p + k]), n);
      }
      for (std::size_t k = 0; k < d; ++k) {
        xd[(i * m + n) * d + k] = table.at(table.row_of(batch.day_time_index[i * d + k]), n);
      }
      for (std::size_t k = 0; k < q; ++k) {
        y[(i * m + n) * q + k] = table.at(table.row_of(t + 1 + static_cast<std::int64_t>(k)), n);
      }
    }
  }
  batch.x_hour = Tensor({b, m, p, 1}, std::move(xh));
  batch.x_day = Tensor({b, m, d, 1}, std::move(xd));
  batch.y = Tensor({b, m, q, 1}, std::move(y));
  return batch;
}

std::array<std::size_t, 3> split_counts(std::size_t n, std::array<double, 3> ratios) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (!(ratios[0] > 0 && ratios[1] > 0 && ratios[2] > 0)) {
    throw ConfigError("split ratios must all be positive");
  }
  const auto a = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[0] / total + 1e-9));
  const auto b = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios[1] / total + 1e-9));
  return {a, b, n - a - b};
}

AnchorSplit split_train_val_test(const SeriesTable& table, const ModelConfig& cfg,
                                 std::array<double, 3> ratios) {
  const auto anchors = valid_anchors(table, cfg);
  const auto counts = split_counts(anchors.size(), ratios);
  AnchorSplit split;
  auto begin = anchors.begin();
  split.train.assign(begin, begin + static_cast<std::ptrdiff_t>(counts[0]));
  begin += static_cast<std::ptrdiff_t>(counts[0]);
  split.val.assign(begin, begin + static_cast<std::ptrdiff_t>(counts[1]));
  begin += static_cast<std::ptrdiff_t>(counts[1]);
  split.test.assign(begin, anchors.end());

  // Drop trailing anchors whose targets reach the next part's hour window.
  auto purge = [&cfg](std::vector<std::int64_t>& earlier, const std::vector<std::int64_t>& later) {
    if (later.empty()) return;
    const std::int64_t first_input = later.front() - static_cast<std::int64_t>(cfg.hour_len) + 1;
    while (!earlier.empty() &&
           earlier.back() + static_cast<std::int64_t>(cfg.horizon) >= first_input) {
      earlier.pop_back();
    }
  };
  purge(split.train, split.val);
  purge(split.val, split.test);
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw ConfigError("series too short: " + std::to_string(anchors.size()) +
                      " valid anchors leave an empty train/val/test split");
  }
  return split;
}

NormStats compute_norm_stats(const SeriesTable& table, const std::vector<std::int64_t>& train,
                             const ModelConfig& cfg) {
  if (train.empty()) throw ConfigError("normalization needs a non-empty training split");
  const std::size_t last_row =
      table.row_of(train.back() + static_cast<std::int64_t>(cfg.horizon));
  const std::size_t count = (last_row + 1) * table.nodes;
  double mean = 0.0;
  for (std::size_t i = 0; i < count; ++i) mean += table.values[i];
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    var += (table.values[i] - mean) * (table.values[i] - mean);
  }
  var /= static_cast<double>(count);
  const double sd = std::sqrt(var);
  return {mean, sd > 0.0 ? sd : 1.0};
}

double zscore_value(double v, const NormStats& stats, ZDirection direction) {
  return direction == ZDirection::kNormalize ? (v - stats.mean) / stats.std
                                             : v * stats.std + stats.mean;
}

SeriesTable zscore(const SeriesTable& table, const NormStats& stats, ZDirection direction) {
  if (!(stats.std > 0.0)) throw ConfigError("z-score needs a positive standard deviation");
  SeriesTable out = table;
  for (auto& v : out.values) v = zscore_value(v, stats, direction);
  return out;
}

SeriesTable inject_noise(const SeriesTable& table, double mean, double std, std::uint64_t seed) {
  SeriesTable out = table;
  if (std == 0.0) {
    for (auto& v : out.values) v += mean;
    return out;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(mean, std);
  for (auto& v : out.values) v += dist(rng);
  return out;
}

ChannelBatch inject_noise(const ChannelBatch& batch, double mean, double std, std::uint64_t seed) {
  ChannelBatch out = batch;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, std > 0.0 ? std : 1.0);
  auto perturb = [&](const Tensor& t) {
    std::vector<double> v(t.data().begin(), t.data().end());
    for (auto& x : v) x += std > 0.0 ? mean + dist(rng) : mean;
    return Tensor(t.shape(), std::move(v));
  };
  out.x_hour = perturb(batch.x_hour);
  out.x_day = perturb(batch.x_day);
  return out;
}

}  // namespace mcsttm
