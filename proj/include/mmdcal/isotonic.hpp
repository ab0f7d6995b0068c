#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "mmdcal/hnn.hpp"

namespace mmdcal {

/// Weighted isotonic least squares by pool-adjacent-violators: the
/// nondecreasing sequence minimizing sum_i w_i (fit_i - v_i)^2.
std::vector<double> pav(std::span<const double> values, std::span<const double> weights);

/// Monotone step map R: [0,1] -> [0,1] from predicted CDF level to observed
/// frequency. R(u) is the output of the last breakpoint with input <= u (0
/// below the first breakpoint).
class IsotonicRecalibrator {
 public:
  IsotonicRecalibrator() = default;
  IsotonicRecalibrator(std::vector<double> inputs, std::vector<double> outputs);

  double operator()(double u) const;

  /// Generalized inverse inf{u : R(u) >= p}, taken over breakpoint inputs and
  /// clamped to the last breakpoint when p exceeds every output.
  double inverse(double p) const;

  const std::vector<double>& inputs() const noexcept { return inputs_; }
  const std::vector<double>& outputs() const noexcept { return outputs_; }

  /// CSV with header input_level,output_level.
  void save_csv(const std::filesystem::path& path) const;
  static IsotonicRecalibrator load_csv(const std::filesystem::path& path);

 private:
  std::vector<double> inputs_;
  std::vector<double> outputs_;
};

/// Fits R on pairs (F_i(y_i), empirical CDF of those values). Needs >= 2 points.
IsotonicRecalibrator fit_isotonic(std::span<const GaussianPrediction> preds, std::span<const double> y);

/// Recalibrated quantile F^-1(R^-1(p)). Point predictions are untouched.
double apply_recalibration(const IsotonicRecalibrator& recal, const GaussianPrediction& pred, double p);

}  // namespace mmdcal
