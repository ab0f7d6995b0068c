#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmdcal/dataset.hpp"
#include "mmdcal/trainer.hpp"

namespace mmdcal {

struct ConvergenceConfig {
  std::vector<std::size_t> sizes{500, 2000, 8000};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t hidden = HnnModel::kDefaultHidden;
  TrainConfig train;  ///< seed is replaced per run
  SynthOptions synth;
  SplitSpec split;  ///< seed is replaced per run

  /// Throws ConfigError unless sizes are strictly increasing, each >= 100.
  void validate() const;
};

struct ConvergencePoint {
  std::size_t size = 0;
  std::uint64_t seed = 0;
  double ecpe_one_sided = 0.0;
  double ecpe_two_sided = 0.0;
  double mmd2 = 0.0;  ///< held-out targets vs one draw of model samples, scaled units
};

struct ConvergenceStudy {
  std::vector<std::size_t> sizes;
  std::vector<ConvergencePoint> points;

  /// Median over seeds at one size of the given field.
  double median(std::size_t size, double ConvergencePoint::*field) const;
  /// Columns size,ecpe_one_sided,ecpe_two_sided,mmd2,seed.
  void save_csv(const std::filesystem::path& path) const;
};

/// Full two-stage training on synthetic data at every (size, seed), scored on
/// that run's test split.
ConvergenceStudy run_convergence_study(const ConvergenceConfig& config);

/// Isotonic fit by brute force: every split of the sequence into contiguous
/// blocks with block means nondecreasing, keeping the lowest weighted SSE.
/// Exponential in n; meant for n <= 12.
std::vector<double> pav_oracle(std::span<const double> values, std::span<const double> weights);

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

inline constexpr std::string_view kSelfTests[] = {"gradient_check", "mmd_oracle", "pav_oracle",
                                                 "quantile_round_trip"};

/// One named check from kSelfTests. Exceptions inside a check become a failed
/// result; an unknown name throws ConfigError.
SelfTestResult run_self_test(std::string_view name, std::uint64_t seed = 0);

/// Gradient checks, MMD oracle equivalence, PAV oracle and quantile round trip.
std::vector<SelfTestResult> run_self_tests(std::uint64_t seed = 0);

}  // namespace mmdcal
