// mmdcal command-line front end: train, evaluate, compare, synth, check.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "mmdcal/dataset.hpp"
#include "mmdcal/errors.hpp"
#include "mmdcal/experiment.hpp"
#include "mmdcal/verification.hpp"

namespace fs = std::filesystem;
using namespace mmdcal;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kDivergence = 4, kCheckFailed = 5 };

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::kConfigError:
    case Errc::kIncompatibleGrids:
    case Errc::kPOutOfRange:
      return kConfig;
    case Errc::kFileNotFound:
    case Errc::kColumnMissing:
    case Errc::kParseError:
    case Errc::kSeriesTooShort:
    case Errc::kFractionInvalid:
    case Errc::kEmptySplit:
    case Errc::kEmptySample:
    case Errc::kTooFewPoints:
    case Errc::kMissingCheckpoint:
    case Errc::kDegenerateVariance:
      return kData;
    case Errc::kDiverged:
    case Errc::kNonFinite:
      return kDivergence;
    default:
      return kOther;
  }
}

struct TrainFlags {
  std::string config;
  std::string method;
  std::string csv;
  std::string target;
  std::vector<std::string> features;
  bool series = false;
  std::size_t n = 0;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::size_t hidden = 0;
  double lr = 0.0;
  double weight_decay = -1.0;
  std::size_t batch_size = 0;
  std::size_t stage2_batch_size = 0;
  double stage2_weight_decay = 0.0;
  std::size_t stage1_epochs = 0;
  std::size_t stage2_epochs = 0;
  std::size_t patience = 0;
  std::vector<double> bandwidths;
  std::string mmd_estimator;
  bool variance_head_only = false;
  double sigma_shift = 0.0;
  bool sigma_shift_set = false;
};

ExperimentConfig resolve(const TrainFlags& f, const CLI::App& cmd) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(f.config);
  if (!f.method.empty()) c.method = parse_method(f.method);
  if (!f.csv.empty()) {
    c.data.kind = DataSource::Kind::kCsv;
    c.data.path = f.csv;
  }
  if (!f.target.empty()) c.data.target = f.target;
  if (!f.features.empty()) c.data.features = f.features;
  if (f.series) {
    c.data.series = true;
    c.split.mode = SplitMode::kChronological;
  }
  if (cmd.count("--synth-n")) c.data.n = f.n;
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (!f.out.empty()) c.output_dir = f.out;
  if (cmd.count("--hidden")) c.hidden = f.hidden;
  if (cmd.count("--lr")) c.train.adam.lr = f.lr;
  if (cmd.count("--weight-decay")) c.train.adam.weight_decay = f.weight_decay;
  if (cmd.count("--batch-size")) c.train.batch_size = f.batch_size;
  if (cmd.count("--stage2-batch-size")) c.train.stage2_batch_size = f.stage2_batch_size;
  if (cmd.count("--stage2-weight-decay")) c.train.stage2_weight_decay = f.stage2_weight_decay;
  if (cmd.count("--stage1-epochs")) c.train.stage1_epochs = f.stage1_epochs;
  if (cmd.count("--stage2-epochs")) c.train.stage2_epochs = f.stage2_epochs;
  if (cmd.count("--patience")) c.train.patience = f.patience;
  if (!f.bandwidths.empty()) c.train.kernels.bandwidths = f.bandwidths;
  if (!f.mmd_estimator.empty()) {
    c.train.mmd_estimator = f.mmd_estimator == "unbiased" ? EstimatorKind::kUnbiased : EstimatorKind::kBiased;
  }
  if (f.variance_head_only) c.train.variance_head_only = true;
  if (cmd.count("--sigma-shift")) c.sigma_shift = f.sigma_shift;
  apply_env_overrides(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Heteroscedastic regression with MMD calibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train one run per seed into <out>/seed_<s>/");
  train->add_option("-c,--config", tf.config, "JSON experiment config (flags below override it)")
      ->check(CLI::ExistingFile);
  train->add_option("-m,--method", tf.method, "hnn | hnn+isr | hnn+mmd (default hnn+mmd)");
  train->add_option("--csv", tf.csv, "CSV dataset (default: synthetic heteroscedastic data)");
  train->add_option("--target", tf.target, "Target column of the CSV (default y)");
  train->add_option("--features", tf.features, "Feature columns (default: all other columns)");
  train->add_flag("--series", tf.series, "Time series: interpolate gaps, chronological split, sliding windows");
  train->add_option("-n,--synth-n", tf.n, "Synthetic dataset size (default 8000)");
  train->add_option("-s,--seeds", tf.seeds, "Seeds, one run each (default 0)");
  train->add_option("-o,--out", tf.out, "Output directory (default runs/experiment)");
  train->add_option("--hidden", tf.hidden, "Hidden layer width (default 256)");
  train->add_option("--lr", tf.lr, "Adam learning rate (default 1e-4)");
  train->add_option("--weight-decay", tf.weight_decay, "L2 weight decay (default 1e-3)");
  train->add_option("--batch-size", tf.batch_size, "Minibatch size (default 128)");
  train->add_option("--stage2-batch-size", tf.stage2_batch_size, "Minibatch size for the MMD stage (default: --batch-size)");
  train->add_option("--stage2-weight-decay", tf.stage2_weight_decay,
                    "Weight decay for the MMD stage (default: --weight-decay)");
  train->add_option("--stage1-epochs", tf.stage1_epochs, "NLL stage epoch cap (default 200)");
  train->add_option("--stage2-epochs", tf.stage2_epochs, "MMD stage epoch cap, 0 to skip (default 100)");
  train->add_option("--patience", tf.patience, "Early-stopping patience in epochs (default 20)");
  train->add_option("--bandwidths", tf.bandwidths, "RBF bandwidths (default 1 4 8 16 32 64)");
  train->add_option("--mmd-estimator", tf.mmd_estimator, "Stage-2 loss estimator: biased | unbiased (default biased)")
      ->check(CLI::IsMember({"biased", "unbiased"}));
  train->add_flag("--variance-head-only", tf.variance_head_only, "Stage 2 updates only the log-variance head");
  train->add_option("--sigma-shift", tf.sigma_shift, "Add to the log-variance bias after stage 1");

  std::string eval_dir;
  bool all_levels = false;
  auto* evaluate = app.add_subcommand("evaluate", "Score a run (or every seed of an experiment) on its test split");
  evaluate->add_option("dir", eval_dir, "Run or experiment directory")->required();
  evaluate->add_flag("--all-levels", all_levels, "Also write intervals at every grid level");

  std::vector<std::string> compare_dirs;
  std::string compare_csv;
  auto* compare = app.add_subcommand("compare", "Table of metrics across evaluated runs");
  compare->add_option("dirs", compare_dirs, "Two or more evaluated run or experiment directories")->required();
  compare->add_option("--csv", compare_csv, "Also write the table as CSV");

  std::size_t synth_n = 8000, synth_dims = 1;
  std::uint64_t synth_seed = 0;
  double synth_noise = 1.0;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic heteroscedastic dataset as CSV");
  synth->add_option("-n", synth_n, "Rows")->capture_default_str();
  synth->add_option("--dims", synth_dims, "Input dimensions")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
  synth->add_option("--noise-scale", synth_noise, "Multiplier on the noise std")->capture_default_str();
  synth->add_option("-o,--out", synth_out, "Output CSV")->required();

  bool convergence = false;
  std::string study_out = "convergence.csv";
  std::vector<std::size_t> study_sizes{500, 2000, 8000};
  std::vector<std::uint64_t> study_seeds{0, 1, 2};
  std::size_t study_hidden = HnnModel::kDefaultHidden;
  auto* check = app.add_subcommand("check", "Run gradient, oracle and round-trip self tests");
  check->add_flag("--convergence", convergence, "Also run the coverage convergence study");
  check->add_option("--study-out", study_out, "Convergence CSV path")->capture_default_str();
  check->add_option("--sizes", study_sizes, "Study sample sizes")->capture_default_str();
  check->add_option("--study-seeds", study_seeds, "Study seeds")->capture_default_str();
  check->add_option("--hidden", study_hidden, "Study hidden width")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto config = resolve(tf, *train);
      for (const auto& dir : cmd_train(config)) std::cout << "trained " << dir.string() << '\n';
    } else if (*evaluate) {
      const auto reports = cmd_evaluate(eval_dir, {all_levels});
      for (const auto& r : reports) {
        std::printf("ecpe %.5f  mcpe %.5f  ecpe_one_sided %.5f  epiw %.5g  rmse %.5g  n_test %zu\n", r.ecpe, r.mcpe,
                    r.ecpe_one_sided, r.epiw, r.rmse, r.n_test);
      }
    } else if (*compare) {
      std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
      std::cout << cmd_compare(dirs, compare_csv);
    } else if (*synth) {
      save_csv(synth_heteroscedastic(synth_n, synth_seed, {synth_dims, synth_noise}), synth_out);
      std::cout << "wrote " << synth_out << '\n';
    } else if (*check) {
      bool ok = true;
      for (const auto& r : run_self_tests()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
      }
      if (convergence) {
        ConvergenceConfig study;
        study.sizes = study_sizes;
        study.seeds = study_seeds;
        study.hidden = study_hidden;
        const auto result = run_convergence_study(study);
        result.save_csv(study_out);
        for (auto size : result.sizes) {
          std::printf("size %zu  median ecpe %.5f  one-sided %.5f  mmd2 %.3g\n", size,
                      result.median(size, &ConvergencePoint::ecpe_two_sided),
                      result.median(size, &ConvergencePoint::ecpe_one_sided),
                      result.median(size, &ConvergencePoint::mmd2));
        }
      }
      return ok ? kOk : kCheckFailed;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
