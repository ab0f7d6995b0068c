#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmdcal/hnn.hpp"

namespace mmdcal {

/// Nominal confidence levels p_j, strictly increasing inside (0,1).
struct ConfidenceGrid {
  std::vector<double> levels;

  /// 0.05, 0.10, ..., 0.95.
  static ConfidenceGrid standard();
  void validate() const;
  std::size_t size() const noexcept { return levels.size(); }
};

struct PredictionInterval {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.0;
  double width() const noexcept { return upper - lower; }
};

/// Maps a nominal quantile level to the level actually fed to the Gaussian
/// quantile function. Empty means identity; a fitted recalibrator supplies its
/// generalized inverse here.
using LevelMap = std::function<double(double)>;

double gaussian_quantile(const GaussianPrediction& pred, double p);
double gaussian_cdf(const GaussianPrediction& pred, double y);

/// Equal-tailed interval [F^-1((1-p)/2), F^-1((1+p)/2)].
PredictionInterval central_interval(const GaussianPrediction& pred, double p, const LevelMap& map = {});

/// Per grid level, the fraction of y_i inside the central interval of pred_i
/// (both endpoints inclusive).
std::vector<double> empirical_coverage(std::span<const GaussianPrediction> preds, std::span<const double> y,
                                       const ConfidenceGrid& grid, const LevelMap& map = {});

/// Per grid level, the fraction of y_i <= F_i^-1(p).
std::vector<double> one_sided_coverage(std::span<const GaussianPrediction> preds, std::span<const double> y,
                                       const ConfidenceGrid& grid, const LevelMap& map = {});

double ecpe(std::span<const double> levels, std::span<const double> coverages);
double mcpe(std::span<const double> levels, std::span<const double> coverages);

struct IntervalWidths {
  double epiw = 0.0;
  double mpiw = 0.0;
};

/// Mean and max central-interval width at `level`, in the units of `preds`.
IntervalWidths epiw_mpiw(std::span<const GaussianPrediction> preds, double level, const LevelMap& map = {});

struct AccuracyMetrics {
  double rmse = 0.0;
  double r2 = 0.0;
  double rse = 0.0;
  double smape = 0.0;  ///< percent
};

/// rmse, r2 = 1 - SSE/SST, rse = sqrt(SSE)/sqrt(SST), smape in percent with
/// zero-denominator terms counted as 0. Throws DegenerateVariance when SST = 0.
AccuracyMetrics accuracy_metrics(std::span<const double> y_true, std::span<const double> y_pred);

struct ReliabilityRow {
  double expected = 0.0;
  double observed = 0.0;
};

std::vector<ReliabilityRow> reliability_rows(std::span<const GaussianPrediction> preds, std::span<const double> y,
                                             const ConfidenceGrid& grid, const LevelMap& map = {});

struct CalibrationReport {
  std::vector<double> levels;
  std::vector<double> coverage;            ///< two-sided
  std::vector<double> coverage_one_sided;  ///< secondary diagnostic
  double ecpe = 0.0;
  double mcpe = 0.0;
  double ecpe_one_sided = 0.0;
  double mcpe_one_sided = 0.0;
  double interval_level = 0.95;
  double epiw = 0.0;
  double mpiw = 0.0;
  double rmse = 0.0;
  std::optional<double> r2;
  std::optional<double> rse;
  double smape = 0.0;
  std::size_t n_test = 0;
};

/// Full report for predictions and targets in original target units.
CalibrationReport make_report(std::span<const GaussianPrediction> preds, std::span<const double> y,
                              const ConfidenceGrid& grid, double interval_level = 0.95,
                              const LevelMap& map = {});

}  // namespace mmdcal
