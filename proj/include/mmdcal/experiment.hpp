#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmdcal/dataset.hpp"
#include "mmdcal/isotonic.hpp"
#include "mmdcal/metrics.hpp"
#include "mmdcal/trainer.hpp"

namespace mmdcal {

inline constexpr const char* kVersion = "mmdcal 0.1.0";

enum class Method { kHnn, kHnnIsr, kHnnMmd };

std::string method_name(Method m);
Method parse_method(const std::string& name);

struct DataSource {
  enum class Kind { kSynth, kCsv } kind = Kind::kSynth;
  // synth
  std::size_t n = 8000;
  std::size_t dims = 1;
  double noise_scale = 1.0;
  // csv
  std::filesystem::path path;
  std::string target = "y";
  std::vector<std::string> features;
  bool series = false;  ///< chronological split + sliding windows + interpolation
  std::size_t window = 5;
  std::size_t horizon = 1;
};

struct ExperimentConfig {
  DataSource data;
  SplitSpec split;  ///< seed is taken from the run seed
  std::size_t hidden = HnnModel::kDefaultHidden;
  TrainConfig train;  ///< seed is taken from the run seed
  Method method = Method::kHnnMmd;
  std::filesystem::path output_dir = "runs/experiment";
  std::vector<std::uint64_t> seeds{0};
  /// Added to the log-variance bias after stage 1 (negative = overconfident).
  double sigma_shift = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// Reads a JSON file, then applies the environment overrides.
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// MMDCAL_SEED replaces the seed list with one seed; MMDCAL_OUT replaces the
/// output directory. Nothing else is read from the environment.
void apply_env_overrides(ExperimentConfig& config);

/// Loads or generates the dataset and splits it for one seed.
SplitResult prepare_data(const ExperimentConfig& config, std::uint64_t seed);

/// A trained model plus whatever post-hoc map its method uses.
struct FittedRun {
  HnnModel model;
  std::optional<IsotonicRecalibrator> recalibrator;
  TrainTrace trace;

  /// The level map for the metrics module (empty for hnn and hnn+mmd).
  LevelMap level_map() const;
};

/// Trains one seed according to the method. hnn: stage 1; hnn+isr: stage 1 then
/// isotonic fit on the validation split; hnn+mmd: stage 1 then stage 2.
FittedRun fit_run(const ExperimentConfig& config, const SplitResult& data, std::uint64_t seed);

/// Test-split report in original target units.
CalibrationReport evaluate_run(const FittedRun& run, const SplitResult& data, const ConfidenceGrid& grid);

std::filesystem::path run_directory(const std::filesystem::path& output_dir, std::uint64_t seed);

/// Trains every seed into output_dir/seed_<s>/ (config.json, checkpoint.json,
/// trace.csv, scalers.json, isotonic.csv for hnn+isr). Returns the run dirs.
/// A diverged run keeps its partial trace on disk and rethrows.
std::vector<std::filesystem::path> cmd_train(const ExperimentConfig& config);

struct EvaluateOptions {
  bool all_levels = false;  ///< also write intervals at every grid level
};

/// Evaluates one run directory (report.json, reliability.csv, intervals.csv),
/// or, given an experiment directory holding seed_* runs, each of them plus
/// summary.json / summary.csv with mean and standard error per metric.
std::vector<CalibrationReport> cmd_evaluate(const std::filesystem::path& dir, const EvaluateOptions& options = {});

nlohmann::json report_to_json(const CalibrationReport& report);

/// Methods x metrics table from evaluated run or experiment directories. Writes
/// the CSV to csv_path (when non-empty) and returns the text table. The best
/// value per metric is flagged with '*'; missing metrics print as null.
std::string cmd_compare(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& csv_path);

}  // namespace mmdcal
