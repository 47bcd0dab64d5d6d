#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mcsttm/checkpoint.hpp"
#include "mcsttm/ops.hpp"
#include "mcsttm_cli/commands.hpp"
#include "mcsttm_cli/run_config.hpp"

using namespace mcsttm;
namespace fs = std::filesystem;

namespace {

const std::string kMini = std::string(MCSTTM_DATA_DIR) + "/mini";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mcsttm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string sub(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

// Small model so that a training run over the mini bundle takes seconds.
const std::vector<std::string> kSmall{
    "--set", "model.features=4", "--set", "model.heads=2",      "--set", "model.hidden=8",
    "--set", "model.rank=2",     "--set", "model.blocks=1",     "--set", "model.day_len=1",
    "--set", "model.hour_len=4", "--set", "model.horizon=3",    "--set", "train.batch_size=128",
    "--set", "train.lr=0.001"};

std::vector<std::string> with_small(std::vector<std::string> args) {
  args.insert(args.end(), kSmall.begin(), kSmall.end());
  return args;
}

}  // namespace

TEST_F(CliTest, IngestMiniBundle) {
  const Result r = run_cli({"ingest", "--bundle", kMini, "--out", sub("b")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("nodes=5"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("slices=2016"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(sub("b/series.csv")));
  EXPECT_TRUE(fs::exists(sub("b/edges.csv")));
}

TEST_F(CliTest, IngestIsIdempotent) {
  ASSERT_EQ(run_cli({"ingest", "--bundle", kMini, "--out", sub("a")}).code, 0);
  ASSERT_EQ(run_cli({"ingest", "--bundle", sub("a"), "--out", sub("b")}).code, 0);
  for (const char* f : {"series.csv", "edges.csv", "summary.csv"}) {
    EXPECT_EQ(read_all(sub("a") + "/" + f), read_all(sub("b") + "/" + f)) << f;
  }
}

TEST_F(CliTest, MissingSeriesFileExitsTwo) {
  const Result r = run_cli({"ingest", "--series", sub("nope.csv"), "--edges", kMini + "/edges.csv",
                            "--out", sub("x")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownConfigKeyExitsTwo) {
  const Result r = run_cli({"ingest", "--bundle", kMini, "--set", "model.featurez=3"});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, BadFlagExitsTwo) {
  EXPECT_EQ(run_cli({"train", "--no-such-flag"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliTest, TrainWritesDeterministicArtifacts) {
  const auto args = [&](const std::string& out) {
    return with_small({"train", "--bundle", kMini, "--out", out, "--seed", "3", "--set",
                       "train.max_epochs=2"});
  };
  const Result a = run_cli(args(sub("a")));
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(run_cli(args(sub("b"))).code, 0);
  const std::string history = read_all(sub("a") + "/history.csv");
  EXPECT_EQ(history, read_all(sub("b") + "/history.csv"));
  EXPECT_EQ(history.rfind("# config_hash=", 0), 0u);
  EXPECT_NE(history.find("variant=full"), std::string::npos);
  EXPECT_NE(history.find("epoch,train_mae,val_mae,elapsed_s"), std::string::npos);
  EXPECT_EQ(read_all(sub("a") + "/checkpoint.bin"), read_all(sub("b") + "/checkpoint.bin"));
  EXPECT_TRUE(fs::exists(sub("a") + "/val_report.csv"));
  EXPECT_NE(a.err.find("epoch 1"), std::string::npos) << a.err;
}

TEST_F(CliTest, AblationIsRecorded) {
  const Result r = run_cli(with_small({"train", "--bundle", kMini, "--out", sub("a"), "--ablate",
                                       "no_multi_channel", "--set", "train.max_epochs=1"}));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(read_all(sub("a") + "/history.csv").find("variant=no_multi_channel"),
            std::string::npos);
  EXPECT_EQ(load_checkpoint(sub("a") + "/checkpoint.bin").ablation.name(), "no_multi_channel");
  EXPECT_EQ(run_cli(with_small({"train", "--bundle", kMini, "--ablate", "no_everything"})).code, 2);
}

TEST_F(CliTest, EvalPredictAndAdjacencyExport) {
  ASSERT_EQ(run_cli(with_small({"train", "--bundle", kMini, "--out", sub("t"), "--set",
                                "train.max_epochs=1"}))
                .code,
            0);
  const std::string ck = sub("t") + "/checkpoint.bin";
  const Result e = run_cli({"eval", "--bundle", kMini, "--checkpoint", ck, "--out", sub("e"),
                            "--noise-std", "0", "--export-adjacency", sub("adj.csv")});
  ASSERT_EQ(e.code, 0) << e.err;

  // Zero noise: the noisy columns repeat the clean ones.
  std::ifstream report(sub("e") + "/report.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(report, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("step", 0) == 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 7u) << line;
    EXPECT_EQ(cells[1], cells[4]);
    EXPECT_EQ(cells[2], cells[5]);
    EXPECT_EQ(cells[3], cells[6]);
    ++rows;
  }
  EXPECT_GE(rows, 2u);

  std::ifstream adj(sub("adj.csv"));
  std::size_t adj_rows = 0;
  while (std::getline(adj, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("node", 0) == 0) continue;
    std::stringstream ss(line);
    std::string c;
    std::getline(ss, c, ',');
    double sum = 0.0;
    while (std::getline(ss, c, ',')) sum += std::stod(c);
    EXPECT_NEAR(sum, 1.0, 1e-9);
    ++adj_rows;
  }
  EXPECT_EQ(adj_rows, 5u);

  const Result p = run_cli({"predict", "--bundle", kMini, "--checkpoint", ck, "--out", sub("p")});
  ASSERT_EQ(p.code, 0) << p.err;
  const std::string preds = read_all(sub("p") + "/predictions.csv");
  EXPECT_NE(preds.find("anchor,node,step,forecast,target"), std::string::npos);
}

TEST_F(CliTest, ZeroCheckpointOnConstantSeriesScoresZero) {
  fs::create_directories(sub("c"));
  {
    std::ofstream s(sub("c/series.csv"));
    s << "slice_index,node_0,node_1\n";
    for (int t = 0; t < 600; ++t) s << t << ",42,42\n";
    std::ofstream e(sub("c/edges.csv"));
    e << "from,to,distance\n0,1,1.0\n";
  }
  ModelConfig cfg;
  cfg.nodes = 2;
  cfg.hour_len = 4;
  cfg.day_len = 1;
  cfg.horizon = 3;
  cfg.features = 4;
  cfg.heads = 2;
  cfg.rank = 2;
  cfg.blocks = 1;
  cfg.hidden = 8;
  save_checkpoint(sub("zero.bin"), cfg, ModelParams::zeros(cfg));
  const Result r = run_cli({"eval", "--bundle", sub("c"), "--checkpoint", sub("zero.bin"),
                            "--out", sub("o")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream report(sub("o/report.csv"));
  std::string line;
  while (std::getline(report, line)) {
    if (line.rfind("avg,", 0) == 0) EXPECT_EQ(line, "avg,0,0,0");
  }
}

TEST_F(CliTest, CheckpointMismatchExitsFour) {
  ModelConfig cfg;
  cfg.nodes = 3;  // mini bundle has 5
  cfg.hour_len = 4;
  cfg.day_len = 1;
  cfg.horizon = 3;
  cfg.features = 4;
  cfg.heads = 2;
  cfg.rank = 2;
  cfg.blocks = 1;
  save_checkpoint(sub("three.bin"), cfg, ModelParams::zeros(cfg));
  const Result r = run_cli({"eval", "--bundle", kMini, "--checkpoint", sub("three.bin")});
  EXPECT_EQ(r.code, 4) << r.err;

  cfg.nodes = 5;
  save_checkpoint(sub("five.bin"), cfg, ModelParams::zeros(cfg));
  EXPECT_EQ(run_cli({"eval", "--bundle", kMini, "--checkpoint", sub("five.bin"), "--set",
                     "model.features=8", "--out", sub("o")})
                .code,
            4);
  EXPECT_EQ(run_cli({"eval", "--bundle", kMini, "--checkpoint", sub("five.bin"), "--ablate",
                     "no_adaptive", "--out", sub("o")})
                .code,
            4);
  {
    std::ofstream(sub("junk.bin")) << "junk";
  }
  EXPECT_EQ(run_cli({"eval", "--bundle", kMini, "--checkpoint", sub("junk.bin")}).code, 4);
}

TEST_F(CliTest, GradcheckPassesAndCatchesFaults) {
  const Result ok = run_cli({"gradcheck"});
  EXPECT_EQ(ok.code, 0) << ok.out << ok.err;
  EXPECT_EQ(ok.out.find("FAIL"), std::string::npos);

  const Result bad = run_cli({"gradcheck", "--inject-fault", "softmax"});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
  EXPECT_FALSE(backward_fault_active("softmax"));

  const Result strict = run_cli({"gradcheck", "--set", "gradcheck.tolerance=1e-12", "--set",
                                 "gradcheck.model_tolerance=1e-12"});
  EXPECT_EQ(strict.code, 1);
}

TEST(RunConfig, HashIgnoresPathsAndFormatting) {
  cli::RunConfig a;
  a.apply_override("train.lr=0.001");
  a.apply_override("data.series=/x/y.csv");
  cli::RunConfig b;
  b.apply_override("train.lr=1e-3");
  EXPECT_EQ(a.hash(), b.hash());
  b.apply_override("train.seed=2");
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(a.hash().size(), 16u);
}

TEST(RunConfig, FileErrorsNameTheLine) {
  const auto path = (fs::temp_directory_path() / "mcsttm_bad.cfg").string();
  {
    std::ofstream f(path);
    f << "# comment\ntrain.lr = 0.01\nmodel.features = many\n";
  }
  cli::RunConfig cfg;
  try {
    cfg.load_file(path);
    cfg.model(5);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("features"), std::string::npos) << e.what();
  }
  fs::remove(path);
}
