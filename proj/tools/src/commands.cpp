#include "mcsttm_cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mcsttm/checkpoint.hpp"
#include "mcsttm/data.hpp"
#include "mcsttm/errors.hpp"
#include "mcsttm/grad_suite.hpp"
#include "mcsttm/graph.hpp"
#include "mcsttm/ops.hpp"
#include "mcsttm/synthetic.hpp"
#include "mcsttm/training.hpp"
#include "mcsttm_cli/run_config.hpp"

namespace fs = std::filesystem;

namespace mcsttm::cli {

namespace {

struct Flags {
  std::string config;
  std::vector<std::string> sets;
  std::string series;
  std::string edges;
  std::string bundle;
  std::string out;
  std::string checkpoint;
  std::string export_adjacency;
  std::string ablate;
  std::string inject_fault;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise_std;
};

std::string real_str(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Log lines carry the wall clock; artifacts never do.
void log(std::ostream& err, const std::string& msg) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  err << "[" << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ") << "] " << msg << '\n';
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg.load_file(f.config);
  for (const auto& s : f.sets) cfg.apply_override(s);
  if (!f.series.empty()) cfg.set("data.series", f.series);
  if (!f.edges.empty()) cfg.set("data.edges", f.edges);
  if (!f.bundle.empty()) cfg.set("data.bundle", f.bundle);
  if (!f.out.empty()) cfg.set("output.dir", f.out);
  if (!f.checkpoint.empty()) cfg.set("eval.checkpoint", f.checkpoint);
  if (!f.export_adjacency.empty()) cfg.set("eval.export_adjacency", f.export_adjacency);
  if (!f.ablate.empty()) cfg.set("train.ablation", f.ablate);
  if (f.seed) {
    cfg.set("train.seed", std::to_string(*f.seed));
    cfg.set("synth.seed", std::to_string(*f.seed));
  }
  if (f.noise_std) cfg.set("eval.noise_std", real_str(*f.noise_std));
  return cfg;
}

std::string header(const RunConfig& cfg, const std::string& extra = "") {
  std::string h = "config_hash=" + cfg.hash();
  if (!extra.empty()) h += "\n" + extra;
  return h;
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path dir = cfg.text("output.dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

struct Inputs {
  SeriesTable series;
  RoadGraph graph;
};

Inputs load_inputs(const RunConfig& cfg, std::ostream& err) {
  std::string series_path = cfg.text("data.series");
  std::string edges_path = cfg.text("data.edges");
  const std::string bundle = cfg.text("data.bundle");
  if (!bundle.empty()) {
    if (series_path.empty()) series_path = (fs::path(bundle) / "series.csv").string();
    if (edges_path.empty()) edges_path = (fs::path(bundle) / "edges.csv").string();
  }
  if (series_path.empty()) throw InputError("no series given (--series, --bundle or data.series)");
  if (edges_path.empty()) throw InputError("no edge list given (--edges, --bundle or data.edges)");
  Inputs in;
  in.series = load_series_csv(series_path, cfg.uint("model.slices_per_day"));
  std::vector<std::string> warnings;
  in.graph = load_edges_csv(edges_path, in.series.node_ids, &warnings);
  for (const auto& w : warnings) log(err, "warning: " + w);
  return in;
}

std::string summary_line(const Inputs& in) {
  return "nodes=" + std::to_string(in.series.nodes) + " slices=" + std::to_string(in.series.rows) +
         " edges=" + std::to_string(in.graph.edges.size());
}

void write_summary_csv(const fs::path& path, const Inputs& in, const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  std::istringstream lines(comment);
  for (std::string l; std::getline(lines, l);) out << "# " << l << '\n';
  out << "nodes,slices,edges\n"
      << in.series.nodes << ',' << in.series.rows << ',' << in.graph.edges.size() << '\n';
}

void print_report(std::ostream& out, const ForecastReport& r, const char* label) {
  out << label << ":\n";
  auto row = [&](const std::string& name, const Metrics& m) {
    out << "  " << std::setw(4) << name << "  MAE " << std::setw(10) << m.mae << "  RMSE "
        << std::setw(10) << m.rmse << "  MAPE "
        << (m.mape ? real_str(*m.mape) + "%" : std::string("NA")) << '\n';
  };
  out << std::setprecision(6);
  for (const auto& s : r.steps) row(std::to_string(s.step), s.metrics);
  row("avg", r.average);
}

const std::vector<std::int64_t>& pick_split(const Dataset& data, const std::string& name) {
  if (name == "test") return data.split.test;
  if (name == "val") return data.split.val;
  if (name == "train") return data.split.train;
  throw ConfigError("eval.split must be train, val or test, got '" + name + "'");
}

// ---- commands ----

int cmd_ingest(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Inputs in = load_inputs(cfg, err);
  const fs::path dir = out_dir(cfg);
  const std::string h = header(cfg);
  write_series_csv((dir / "series.csv").string(), in.series, h);
  write_edges_csv((dir / "edges.csv").string(), in.graph, h);
  write_summary_csv(dir / "summary.csv", in, h);
  out << summary_line(in) << '\n';
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const SynthData synth = generate(cfg.synth());
  const fs::path dir = out_dir(cfg);
  const std::string h = header(cfg);
  write_series_csv((dir / "series.csv").string(), synth.series, h);
  write_edges_csv((dir / "edges.csv").string(), synth.graph, h);
  Inputs in{synth.series, synth.graph};
  write_summary_csv(dir / "summary.csv", in, h);
  out << summary_line(in) << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Inputs in = load_inputs(cfg, err);
  const ModelConfig model = cfg.model(in.series.nodes);
  const TrainConfig tc = cfg.train();
  const Dataset data =
      prepare_dataset(std::move(in.series), std::move(in.graph), model, cfg.adjacency());
  log(err, "anchors train=" + std::to_string(data.split.train.size()) +
               " val=" + std::to_string(data.split.val.size()) +
               " test=" + std::to_string(data.split.test.size()) +
               " variant=" + tc.ablation.name());

  const ModelParams init = ModelParams::random(model, tc.seed);
  TrainResult result = train(data, tc, init, [&](const EpochRecord& r) {
    std::ostringstream msg;
    msg << "epoch " << r.epoch << " train_mae=" << r.train_mae << " val_mae=" << r.val_mae
        << " elapsed=" << std::fixed << std::setprecision(1) << r.elapsed_s << "s";
    log(err, msg.str());
  });
  if (!cfg.flag("output.record_time")) {
    for (auto& r : result.history) r.elapsed_s = 0.0;
  }

  const fs::path dir = out_dir(cfg);
  const std::string h = header(cfg, "variant=" + tc.ablation.name());
  save_checkpoint((dir / "checkpoint.bin").string(), model, result.best, tc.ablation, cfg.hash());
  write_history_csv((dir / "history.csv").string(), result.history, h);
  const ForecastReport val =
      evaluate(data, result.best, data.split.val, tc.ablation, tc.mape_epsilon);
  write_report_csv((dir / "val_report.csv").string(), val, nullptr, h);

  out << "best epoch " << result.best_epoch << ", validation MAE " << result.best_val_mae << '\n';
  print_report(out, val, "validation");
  return kExitOk;
}

// Model settings given explicitly must agree with the checkpoint; the rest
// are taken from it.
void check_compatible(const RunConfig& cfg, const Checkpoint& ckpt, std::size_t data_nodes) {
  const ModelConfig& c = ckpt.config;
  const std::pair<const char*, std::size_t> fields[] = {
      {"model.nodes", c.nodes},       {"model.hour_len", c.hour_len},
      {"model.day_len", c.day_len},   {"model.horizon", c.horizon},
      {"model.slices_per_day", c.slices_per_day},
      {"model.features", c.features}, {"model.blocks", c.blocks},
      {"model.heads", c.heads},       {"model.rank", c.rank},
      {"model.hidden", c.hidden}};
  for (const auto& [key, value] : fields) {
    if (cfg.is_set(key) && cfg.uint(key) != value) {
      throw CheckpointError(std::string(key) + " is " + std::to_string(cfg.uint(key)) +
                            " but the checkpoint was trained with " + std::to_string(value));
    }
  }
  if (data_nodes != c.nodes) {
    throw CheckpointError("data has " + std::to_string(data_nodes) +
                          " nodes but the checkpoint expects " + std::to_string(c.nodes));
  }
  if (cfg.is_set("train.ablation") &&
      !(Ablation::parse(cfg.text("train.ablation")) == ckpt.ablation)) {
    throw CheckpointError("ablation " + cfg.text("train.ablation") +
                          " does not match the checkpoint variant " + ckpt.ablation.name());
  }
}

struct Loaded {
  Checkpoint ckpt;
  Dataset data;
};

Loaded load_for_inference(const RunConfig& cfg, std::ostream& err) {
  const std::string path = cfg.text("eval.checkpoint");
  if (path.empty()) throw InputError("no checkpoint given (--checkpoint or eval.checkpoint)");
  Loaded l;
  l.ckpt = load_checkpoint(path);
  Inputs in = load_inputs(cfg, err);
  check_compatible(cfg, l.ckpt, in.series.nodes);
  l.data = prepare_dataset(std::move(in.series), std::move(in.graph), l.ckpt.config,
                           cfg.adjacency());
  return l;
}

void write_matrix_csv(const std::string& path, const Tensor& m,
                      const std::vector<std::string>& ids, const std::string& comment) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  std::istringstream lines(comment);
  for (std::string l; std::getline(lines, l);) out << "# " << l << '\n';
  const std::size_t n = m.dim(0);
  out << "node";
  for (std::size_t j = 0; j < n; ++j) out << ',' << ids[j];
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << ids[i];
    for (std::size_t j = 0; j < n; ++j) out << ',' << real_str(m.data()[i * n + j]);
    out << '\n';
  }
}

int cmd_eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Loaded l = load_for_inference(cfg, err);
  const Ablation& variant = l.ckpt.ablation;
  const auto& anchors = pick_split(l.data, cfg.text("eval.split"));
  const double eps = cfg.real("train.mape_epsilon");
  const ForecastReport clean = evaluate(l.data, l.ckpt.params, anchors, variant, eps);
  std::optional<ForecastReport> noisy;
  if (const auto noise = cfg.optional_real("eval.noise_std")) {
    if (*noise < 0.0) throw ConfigError("eval.noise_std must be >= 0");
    noisy = evaluate(l.data, l.ckpt.params, anchors, variant, eps, kReportSteps,
                     NoiseOptions{*noise, cfg.uint("eval.noise_seed")});
  }
  log(err, "evaluated " + std::to_string(anchors.size()) + " anchors in " +
               real_str(clean.wall_clock_s) + "s");

  const fs::path dir = out_dir(cfg);
  const std::string h = header(cfg, "variant=" + variant.name() + "\nsplit=" +
                                        cfg.text("eval.split"));
  write_report_csv((dir / "report.csv").string(), clean, noisy ? &*noisy : nullptr, h);
  print_report(out, clean, "clean inputs");
  if (noisy) print_report(out, *noisy, "noisy inputs");

  const std::string adj_path = cfg.text("eval.export_adjacency");
  if (!adj_path.empty()) {
    NoGradGuard no_grad;
    write_matrix_csv(adj_path, adaptive_adjacency(l.ckpt.params.graph), l.data.raw.node_ids, h);
  }
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const Loaded l = load_for_inference(cfg, err);
  const auto& anchors = pick_split(l.data, cfg.text("eval.split"));
  const Tensor pred = predict(l.data, l.ckpt.params, anchors, l.ckpt.ablation);
  const Tensor truth = targets(l.data, anchors);

  const fs::path dir = out_dir(cfg);
  std::ofstream csv(dir / "predictions.csv", std::ios::trunc);
  if (!csv) throw InputError("cannot write " + (dir / "predictions.csv").string());
  const std::string h = header(cfg, "variant=" + l.ckpt.ablation.name());
  std::istringstream lines(h);
  for (std::string line; std::getline(lines, line);) csv << "# " << line << '\n';
  csv << "anchor,node,step,forecast,target\n";
  const std::size_t nodes = l.ckpt.config.nodes;
  const std::size_t q = l.ckpt.config.horizon;
  for (std::size_t b = 0; b < anchors.size(); ++b) {
    for (std::size_t n = 0; n < nodes; ++n) {
      for (std::size_t k = 0; k < q; ++k) {
        const std::size_t i = (b * nodes + n) * q + k;
        csv << anchors[b] << ',' << l.data.raw.node_ids[n] << ',' << k + 1 << ','
            << real_str(pred.data()[i]) << ',' << real_str(truth.data()[i]) << '\n';
      }
    }
  }
  out << "wrote " << anchors.size() * nodes * q << " forecasts to "
      << (dir / "predictions.csv").string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const GradCheckOptions ops = cfg.gradcheck();
  GradCheckOptions model_opts = ops;
  model_opts.tolerance = cfg.real("gradcheck.model_tolerance");
  const std::uint64_t seed = cfg.uint("gradcheck.seed");
  const Ablation variant = Ablation::parse(cfg.text("train.ablation"));

  bool ok = true;
  auto show = [&](const char* suite, const GradCheckReport& r) {
    for (const auto& e : r.entries) {
      out << (e.passed ? "ok   " : "FAIL ") << suite << ' ' << e.name
          << " max_rel_error=" << e.max_rel_error;
      if (!e.passed) {
        out << " at index " << e.worst_index << " (analytic " << e.analytic << ", numeric "
            << e.numeric << ")";
      }
      out << '\n';
    }
    out << suite << ": " << (r.passed() ? "passed" : "FAILED") << ", max relative error "
        << r.max_rel_error() << " (tolerance " << r.tolerance << ")\n";
    ok = ok && r.passed();
  };
  out << std::setprecision(3);
  show("ops", check_operations(ops, seed));
  show("st_block", check_st_block(ops, seed));
  show("model", check_model(tiny_model_config(), variant, model_opts, seed));
  return ok ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-channel spatial-temporal traffic forecaster", "mcsttm"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&f](CLI::App* sub) {
    sub->add_option("--config", f.config, "Key-value configuration file");
    sub->add_option("--set", f.sets, "Override, section.key=value (repeatable)");
    sub->add_option("--out", f.out, "Output directory (output.dir)");
  };
  auto data_flags = [&f](CLI::App* sub) {
    sub->add_option("--series", f.series, "Series CSV (data.series)");
    sub->add_option("--edges", f.edges, "Edge CSV (data.edges)");
    sub->add_option("--bundle", f.bundle, "Ingested bundle directory (data.bundle)");
  };

  auto* ingest = app.add_subcommand("ingest", "Validate raw CSVs and write a dataset bundle");
  common(ingest);
  data_flags(ingest);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset bundle");
  common(synth);
  synth->add_option("--seed", f.seed, "Generator seed (synth.seed)");

  auto* train_cmd = app.add_subcommand("train", "Train a model and write its best checkpoint");
  common(train_cmd);
  data_flags(train_cmd);
  train_cmd->add_option("--seed", f.seed, "Training seed (train.seed)");
  train_cmd->add_option("--ablate", f.ablate, "Ablation variant, e.g. no_multi_channel");

  auto* eval_cmd = app.add_subcommand("eval", "Report metrics of a checkpoint");
  common(eval_cmd);
  data_flags(eval_cmd);
  eval_cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--noise-std", f.noise_std, "Also evaluate with noisy inputs");
  eval_cmd->add_option("--export-adjacency", f.export_adjacency,
                       "Write the learned adaptive adjacency as CSV");
  eval_cmd->add_option("--ablate", f.ablate, "Expected ablation variant");

  auto* predict_cmd = app.add_subcommand("predict", "Write forecasts of a checkpoint as CSV");
  common(predict_cmd);
  data_flags(predict_cmd);
  predict_cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  common(grad_cmd);
  grad_cmd->add_option("--seed", f.seed, "Seed of the random instances (gradcheck.seed)");
  grad_cmd->add_option("--ablate", f.ablate, "Ablation variant of the model check");
  grad_cmd->add_option("--inject-fault", f.inject_fault)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    RunConfig cfg = resolve(f);
    if (grad_cmd->parsed() && f.seed) cfg.set("gradcheck.seed", std::to_string(*f.seed));
    struct FaultReset {
      ~FaultReset() { set_backward_fault(""); }
    } reset;
    if (!f.inject_fault.empty()) set_backward_fault(f.inject_fault);
    if (ingest->parsed()) return cmd_ingest(cfg, out, err);
    if (synth->parsed()) return cmd_synth(cfg, out, err);
    if (train_cmd->parsed()) return cmd_train(cfg, out, err);
    if (eval_cmd->parsed()) return cmd_eval(cfg, out, err);
    if (predict_cmd->parsed()) return cmd_predict(cfg, out, err);
    if (grad_cmd->parsed()) return cmd_gradcheck(cfg, out, err);
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const CheckpointError& e) {
    err << "error: checkpoint mismatch: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace mcsttm::cli
