#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmdcal/errors.hpp"
#include "mmdcal/experiment.hpp"

namespace mmdcal {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Experiment : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("mmdcal_exp_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  ExperimentConfig tiny(Method method, const std::string& name) const {
    ExperimentConfig c;
    c.data.n = 400;
    c.hidden = 16;
    c.train.adam.lr = 1e-3;
    c.train.batch_size = 64;
    c.train.stage1_epochs = 4;
    c.train.stage2_epochs = 2;
    c.method = method;
    c.output_dir = root_ / name;
    return c;
  }

  fs::path root_;
};

TEST_F(Experiment, TrainWritesSelfDescribingRun) {
  const auto dirs = cmd_train(tiny(Method::kHnnMmd, "mmd"));
  ASSERT_EQ(dirs.size(), 1u);
  for (const char* f : {"config.json", "checkpoint.json", "trace.csv", "scalers.json"})
    EXPECT_TRUE(fs::exists(dirs[0] / f)) << f;
  EXPECT_FALSE(fs::exists(dirs[0] / "isotonic.csv"));
  const auto j = json::parse(slurp(dirs[0] / "config.json"));
  EXPECT_EQ(j.at("run_seed").get<int>(), 0);
  EXPECT_EQ(j.at("version").get<std::string>(), kVersion);
  EXPECT_EQ(j.at("method").get<std::string>(), "hnn+mmd");
  EXPECT_TRUE(fs::exists(root_ / "mmd" / "train_summary.json"));
}

TEST_F(Experiment, IsrRunStoresMap) {
  const auto dirs = cmd_train(tiny(Method::kHnnIsr, "isr"));
  EXPECT_TRUE(fs::exists(dirs[0] / "isotonic.csv"));
  const auto reports = cmd_evaluate(dirs[0]);
  ASSERT_EQ(reports.size(), 1u);
}

TEST_F(Experiment, ZeroStage2EpochsMatchesHnn) {
  auto hnn = tiny(Method::kHnn, "hnn");
  auto mmd = tiny(Method::kHnnMmd, "mmd");
  mmd.train.stage2_epochs = 0;
  const auto a = cmd_train(hnn);
  const auto b = cmd_train(mmd);
  EXPECT_EQ(HnnModel::load(a[0] / "checkpoint.json").flat_parameters(),
            HnnModel::load(b[0] / "checkpoint.json").flat_parameters());
}

TEST_F(Experiment, Stage1SharedWithHnnRun) {
  const auto hnn = cmd_train(tiny(Method::kHnn, "hnn"));
  const auto mmd = cmd_train(tiny(Method::kHnnMmd, "mmd"));
  const auto stage1_rows = [](const fs::path& trace) {
    std::istringstream in(slurp(trace));
    std::string line, out;
    while (std::getline(in, line))
      if (line.rfind("1,", 0) == 0) out += line + "\n";
    return out;
  };
  EXPECT_EQ(stage1_rows(hnn[0] / "trace.csv"), stage1_rows(mmd[0] / "trace.csv"));
}

TEST_F(Experiment, RerunIsBitwiseIdentical) {
  const auto a = cmd_train(tiny(Method::kHnnMmd, "a"));
  const auto b = cmd_train(tiny(Method::kHnnMmd, "b"));
  EXPECT_EQ(slurp(a[0] / "checkpoint.json"), slurp(b[0] / "checkpoint.json"));
  EXPECT_EQ(slurp(a[0] / "trace.csv"), slurp(b[0] / "trace.csv"));
}

TEST_F(Experiment, EvaluateTwiceIsIdentical) {
  const auto dirs = cmd_train(tiny(Method::kHnnMmd, "mmd"));
  cmd_evaluate(dirs[0]);
  const auto first = slurp(dirs[0] / "report.json");
  cmd_evaluate(dirs[0]);
  EXPECT_EQ(slurp(dirs[0] / "report.json"), first);
}

TEST_F(Experiment, ReportSchema) {
  const auto dirs = cmd_train(tiny(Method::kHnnMmd, "mmd"));
  cmd_evaluate(dirs[0], EvaluateOptions{true});
  const auto j = json::parse(slurp(dirs[0] / "report.json"));
  for (const char* key : {"ecpe", "mcpe", "epiw", "mpiw", "rmse", "r2", "rse", "smape", "levels", "coverage"})
    EXPECT_TRUE(j.contains(key)) << key;
  for (const char* f : {"reliability.csv", "intervals.csv", "intervals_all_levels.csv"})
    EXPECT_TRUE(fs::exists(dirs[0] / f)) << f;
  EXPECT_EQ(slurp(dirs[0] / "reliability.csv").rfind("expected,observed,observed_one_sided\n", 0), 0u);
}

TEST_F(Experiment, FiveSeedsAggregate) {
  auto c = tiny(Method::kHnn, "multi");
  c.train.stage1_epochs = 2;
  c.seeds = {0, 1, 2, 3, 4};
  const auto dirs = cmd_train(c);
  ASSERT_EQ(dirs.size(), 5u);
  for (std::uint64_t s = 0; s < 5; ++s) EXPECT_TRUE(fs::exists(root_ / "multi" / ("seed_" + std::to_string(s))));
  const auto reports = cmd_evaluate(root_ / "multi");
  ASSERT_EQ(reports.size(), 5u);
  const auto summary = json::parse(slurp(root_ / "multi" / "summary.json"));
  EXPECT_EQ(summary.at("n_runs").get<int>(), 5);
  double mean = 0.0;
  for (const auto& r : reports) mean += r.ecpe;
  mean /= 5.0;
  EXPECT_NEAR(summary.at("metrics").at("ecpe").at("mean").get<double>(), mean, 1e-12);
  EXPECT_TRUE(summary.at("metrics").at("ecpe").contains("stderr"));
  EXPECT_TRUE(fs::exists(root_ / "multi" / "summary.csv"));
}

TEST_F(Experiment, CompareWithSelfGivesIdenticalRows) {
  const auto dirs = cmd_train(tiny(Method::kHnn, "hnn"));
  cmd_evaluate(dirs[0]);
  const auto csv = root_ / "cmp.csv";
  const auto table = cmd_compare({dirs[0], dirs[0]}, csv);
  std::istringstream in(slurp(csv));
  std::string header, a, b;
  std::getline(in, header);
  std::getline(in, a);
  std::getline(in, b);
  EXPECT_EQ(header.rfind("run,ecpe,", 0), 0u);
  EXPECT_EQ(a, b);
  EXPECT_NE(table.find('*'), std::string::npos);
}

TEST_F(Experiment, CompareFlagsMissingMetricAsNull) {
  const auto dirs = cmd_train(tiny(Method::kHnn, "hnn"));
  cmd_evaluate(dirs[0]);
  const auto other = root_ / "other";
  fs::create_directories(other);
  auto j = json::parse(slurp(dirs[0] / "report.json"));
  j["r2"] = nullptr;
  std::ofstream(other / "report.json") << j.dump();
  const auto csv = root_ / "cmp.csv";
  const auto table = cmd_compare({dirs[0], other}, csv);
  EXPECT_NE(slurp(csv).find(",null"), std::string::npos);
  EXPECT_NE(table.find("null"), std::string::npos);
}

TEST_F(Experiment, CompareRejectsDifferentGrids) {
  const auto dirs = cmd_train(tiny(Method::kHnn, "hnn"));
  cmd_evaluate(dirs[0]);
  const auto other = root_ / "other";
  fs::create_directories(other);
  auto j = json::parse(slurp(dirs[0] / "report.json"));
  j["levels"] = std::vector<double>{0.5, 0.9};
  std::ofstream(other / "report.json") << j.dump();
  try {
    cmd_compare({dirs[0], other}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kIncompatibleGrids);
  }
}

TEST_F(Experiment, EvaluateWithoutCheckpoint) {
  try {
    cmd_evaluate(root_ / "nothing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kMissingCheckpoint);
  }
  const auto dirs = cmd_train(tiny(Method::kHnn, "hnn"));
  fs::remove(dirs[0] / "checkpoint.json");
  try {
    cmd_evaluate(dirs[0]);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kMissingCheckpoint);
  }
}

TEST_F(Experiment, ConfigRoundTripAndErrors) {
  auto c = tiny(Method::kHnnIsr, "x");
  c.train.stage2_weight_decay = 0.0;
  c.train.stage2_batch_size = 512;
  c.sigma_shift = -0.5;
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.train.stage2_weight_decay, std::optional<double>(0.0));

  const auto expect_config_error = [](const json& j) {
    try {
      ExperimentConfig::from_json(j).validate();
      FAIL() << j.dump();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kConfigError) << j.dump();
    }
  };
  expect_config_error({{"method", "bogus"}});
  expect_config_error({{"data", {{"source", "ftp"}}}});
  expect_config_error({{"train", {{"lr", "fast"}}}});
  expect_config_error({{"train", {{"lr", -1.0}}}});
  expect_config_error({{"seeds", json::array()}});

  const auto bad = root_ / "bad.json";
  std::ofstream(bad) << "{ not json";
  try {
    ExperimentConfig::load(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kConfigError);
  }
}

TEST_F(Experiment, EnvironmentOverridesSeedAndOutputOnly) {
  auto c = tiny(Method::kHnn, "x");
  setenv("MMDCAL_SEED", "7", 1);
  setenv("MMDCAL_OUT", (root_ / "env").c_str(), 1);
  apply_env_overrides(c);
  unsetenv("MMDCAL_SEED");
  unsetenv("MMDCAL_OUT");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(c.output_dir, root_ / "env");
  EXPECT_EQ(c.hidden, 16u);
}

TEST_F(Experiment, CsvSeriesPipeline) {
  const auto csv = root_ / "series.csv";
  {
    std::ofstream out(csv);
    out << "temp,y\n";
    for (int t = 0; t < 300; ++t) out << 0.1 * t << ',' << (t % 17 == 3 ? std::string("NA") : std::to_string(std::sin(0.1 * t))) << '\n';
  }
  auto c = tiny(Method::kHnnMmd, "series");
  c.data.kind = DataSource::Kind::kCsv;
  c.data.path = csv;
  c.data.series = true;
  c.split.mode = SplitMode::kChronological;
  const auto dirs = cmd_train(c);
  const auto reports = cmd_evaluate(dirs[0]);
  EXPECT_GT(reports[0].n_test, 0u);
  EXPECT_EQ(HnnModel::load(dirs[0] / "checkpoint.json").input_dim(), 2u * c.data.window);
}

TEST_F(Experiment, DivergenceKeepsPartialTrace) {
  auto c = tiny(Method::kHnn, "boom");
  c.train.adam.lr = 1e6;
  c.train.stage1_epochs = 50;
  c.train.patience = 50;
  EXPECT_THROW(cmd_train(c), DivergedError);
  EXPECT_TRUE(fs::exists(root_ / "boom" / "seed_0" / "trace.csv"));
}

}  // namespace
}  // namespace mmdcal
