#include "mmdcal/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "mmdcal/errors.hpp"
#include "mmdcal/normal.hpp"

namespace mmdcal {
namespace {

void require_level(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::kPOutOfRange, "confidence level " + std::to_string(p));
}

void require_paired(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(Errc::kLengthMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b) + " entries");
  }
}

double mapped(const LevelMap& map, double p) { return map ? map(p) : p; }

}  // namespace

ConfidenceGrid ConfidenceGrid::standard() {
  ConfidenceGrid grid;
  for (int j = 1; j <= 19; ++j) grid.levels.push_back(j / 20.0);
  return grid;
}

void ConfidenceGrid::validate() const {
  if (levels.empty()) throw Error(Errc::kConfigError, "confidence grid is empty");
  for (std::size_t j = 0; j < levels.size(); ++j) {
    require_level(levels[j]);
    if (j > 0 && !(levels[j] > levels[j - 1])) {
      throw Error(Errc::kConfigError, "confidence grid must be strictly increasing");
    }
  }
}

double gaussian_quantile(const GaussianPrediction& pred, double p) {
  return pred.mu + pred.sigma * normal_quantile(p);
}

double gaussian_cdf(const GaussianPrediction& pred, double y) { return normal_cdf((y - pred.mu) / pred.sigma); }

PredictionInterval central_interval(const GaussianPrediction& pred, double p, const LevelMap& map) {
  require_level(p);
  const double lo = mapped(map, 0.5 * (1.0 - p));
  const double hi = mapped(map, 0.5 * (1.0 + p));
  return {gaussian_quantile(pred, lo), gaussian_quantile(pred, hi), p};
}

std::vector<double> empirical_coverage(std::span<const GaussianPrediction> preds, std::span<const double> y,
                                       const ConfidenceGrid& grid, const LevelMap& map) {
  require_paired(preds.size(), y.size(), "empirical_coverage");
  grid.validate();
  std::vector<double> coverage;
  coverage.reserve(grid.size());
  for (double p : grid.levels) {
    // The standardized band is shared by every point; only mu/sigma differ.
    const double z_lo = normal_quantile(mapped(map, 0.5 * (1.0 - p)));
    const double z_hi = normal_quantile(mapped(map, 0.5 * (1.0 + p)));
    std::size_t inside = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double lo = preds[i].mu + preds[i].sigma * z_lo;
      const double hi = preds[i].mu + preds[i].sigma * z_hi;
      if (lo <= y[i] && y[i] <= hi) ++inside;
    }
    coverage.push_back(y.empty() ? 0.0 : static_cast<double>(inside) / static_cast<double>(y.size()));
  }
  return coverage;
}

std::vector<double> one_sided_coverage(std::span<const GaussianPrediction> preds, std::span<const double> y,
                                       const ConfidenceGrid& grid, const LevelMap& map) {
  require_paired(preds.size(), y.size(), "one_sided_coverage");
  grid.validate();
  std::vector<double> coverage;
  coverage.reserve(grid.size());
  for (double p : grid.levels) {
    const double z = normal_quantile(mapped(map, p));
    std::size_t below = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] <= preds[i].mu + preds[i].sigma * z) ++below;
    }
    coverage.push_back(y.empty() ? 0.0 : static_cast<double>(below) / static_cast<double>(y.size()));
  }
  return coverage;
}

double ecpe(std::span<const double> levels, std::span<const double> coverages) {
  require_paired(levels.size(), coverages.size(), "ecpe");
  if (levels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < levels.size(); ++j) total += std::abs(levels[j] - coverages[j]);
  return total / static_cast<double>(levels.size());
}

double mcpe(std::span<const double> levels, std::span<const double> coverages) {
  require_paired(levels.size(), coverages.size(), "mcpe");
  double worst = 0.0;
  for (std::size_t j = 0; j < levels.size(); ++j) worst = std::max(worst, std::abs(levels[j] - coverages[j]));
  return worst;
}

IntervalWidths epiw_mpiw(std::span<const GaussianPrediction> preds, double level, const LevelMap& map) {
  require_level(level);
  IntervalWidths w;
  if (preds.empty()) return w;
  double total = 0.0;
  for (const auto& pred : preds) {
    const double width = central_interval(pred, level, map).width();
    total += width;
    w.mpiw = std::max(w.mpiw, width);
  }
  w.epiw = total / static_cast<double>(preds.size());
  return w;
}

AccuracyMetrics accuracy_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
  require_paired(y_true.size(), y_pred.size(), "accuracy_metrics");
  if (y_true.empty()) throw Error(Errc::kEmptySample, "accuracy_metrics on empty input");
  const double n = static_cast<double>(y_true.size());
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= n;

  double sse = 0.0, sst = 0.0, smape = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const double r = y_pred[i] - y_true[i];
    sse += r * r;
    sst += (y_true[i] - mean) * (y_true[i] - mean);
    const double denom = 0.5 * (std::abs(y_true[i]) + std::abs(y_pred[i]));
    if (denom > 0.0) smape += std::abs(r) / denom;
  }
  if (sst == 0.0) throw Error(Errc::kDegenerateVariance, "targets are constant; r2 and rse are undefined");
  return {std::sqrt(sse / n), 1.0 - sse / sst, std::sqrt(sse) / std::sqrt(sst), 100.0 * smape / n};
}

std::vector<ReliabilityRow> reliability_rows(std::span<const GaussianPrediction> preds, std::span<const double> y,
                                             const ConfidenceGrid& grid, const LevelMap& map) {
  const auto coverage = empirical_coverage(preds, y, grid, map);
  std::vector<ReliabilityRow> rows(grid.size());
  for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = {grid.levels[j], coverage[j]};
  return rows;
}

CalibrationReport make_report(std::span<const GaussianPrediction> preds, std::span<const double> y,
                              const ConfidenceGrid& grid, double interval_level, const LevelMap& map) {
  CalibrationReport r;
  r.levels = grid.levels;
  r.coverage = empirical_coverage(preds, y, grid, map);
  r.coverage_one_sided = one_sided_coverage(preds, y, grid, map);
  r.ecpe = ecpe(r.levels, r.coverage);
  r.mcpe = mcpe(r.levels, r.coverage);
  r.ecpe_one_sided = ecpe(r.levels, r.coverage_one_sided);
  r.mcpe_one_sided = mcpe(r.levels, r.coverage_one_sided);
  r.interval_level = interval_level;
  const auto widths = epiw_mpiw(preds, interval_level, map);
  r.epiw = widths.epiw;
  r.mpiw = widths.mpiw;

  std::vector<double> means(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) means[i] = preds[i].mu;
  try {
    const auto acc = accuracy_metrics(y, means);
    r.rmse = acc.rmse;
    r.r2 = acc.r2;
    r.rse = acc.rse;
    r.smape = acc.smape;
  } catch (const Error& e) {
    if (e.code() != Errc::kDegenerateVariance) throw;
    double sse = 0.0, smape = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = means[i] - y[i];
      sse += d * d;
      const double denom = 0.5 * (std::abs(y[i]) + std::abs(means[i]));
      if (denom > 0.0) smape += std::abs(d) / denom;
    }
    r.rmse = std::sqrt(sse / static_cast<double>(y.size()));
    r.smape = 100.0 * smape / static_cast<double>(y.size());
  }
  r.n_test = y.size();
  return r;
}

}  // namespace mmdcal
