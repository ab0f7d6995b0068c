#include <gtest/gtest.h>

#include <cmath>

#include "mmdcal/dataset.hpp"
#include "mmdcal/errors.hpp"
#include "mmdcal/metrics.hpp"
#include "mmdcal/normal.hpp"
#include "mmdcal/rng.hpp"

namespace mmdcal {
namespace {

// Independent standard normal quantile: bisection on a long double CDF.
double quantile_by_bisection(double p) {
  long double lo = -40.0L, hi = 40.0L;
  for (int it = 0; it < 200; ++it) {
    const long double mid = 0.5L * (lo + hi);
    const long double cdf = 0.5L * std::erfc(-mid / std::sqrt(2.0L));
    (cdf < p ? lo : hi) = mid;
  }
  return static_cast<double>(0.5L * (lo + hi));
}

std::vector<GaussianPrediction> standard_normals(std::size_t n) { return std::vector<GaussianPrediction>(n); }

TEST(Quantile, MedianIsMean) { EXPECT_EQ(gaussian_quantile({3.5, 2.0}, 0.5), 3.5); }

TEST(Quantile, MatchesBisectionOracle) {
  EXPECT_NEAR(gaussian_quantile({0.0, 1.0}, 0.975), 1.959964, 1e-5);
  for (double p = 0.001; p < 1.0; p += 0.00731) {
    EXPECT_NEAR(normal_quantile(p), quantile_by_bisection(p), 1e-9) << "p=" << p;
  }
  for (double p : {1e-12, 1e-8, 1e-5, 1.0 - 1e-5, 1.0 - 1e-8}) {
    EXPECT_NEAR(normal_quantile(p), quantile_by_bisection(p), 1e-9) << "p=" << p;
  }
}

TEST(Quantile, Monotone) {
  double previous = -INFINITY;
  for (double p = 0.01; p < 1.0; p += 0.01) {
    const double q = gaussian_quantile({1.0, 3.0}, p);
    EXPECT_GT(q, previous);
    previous = q;
  }
}

TEST(Quantile, OutOfRange) {
  for (double p : {0.0, 1.0, -0.1, 1.5, std::nan("")}) {
    try {
      gaussian_quantile({0.0, 1.0}, p);
      FAIL() << p;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kPOutOfRange);
    }
  }
}

TEST(Quantile, CdfRoundTrip) {
  for (int k = 1; k <= 99; ++k) {
    const double p = k / 100.0;
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-8);
  }
}

TEST(Interval, Central95) {
  const auto pi = central_interval({0.0, 1.0}, 0.95);
  EXPECT_NEAR(pi.lower, -1.959964, 1e-5);
  EXPECT_NEAR(pi.upper, 1.959964, 1e-5);
  EXPECT_EQ(pi.level, 0.95);
}

TEST(Interval, WidthScalesWithSigma) {
  const double w1 = central_interval({2.0, 1.0}, 0.8).width();
  const double w3 = central_interval({2.0, 3.0}, 0.8).width();
  EXPECT_NEAR(w3, 3.0 * w1, 1e-12);
}

TEST(Interval, VanishingLevel) {
  const auto pi = central_interval({1.0, 1.0}, 1e-9);
  EXPECT_LT(pi.width(), 1e-8);
  EXPECT_LE(pi.lower, 1.0);
  EXPECT_GE(pi.upper, 1.0);
}

TEST(Coverage, TargetsAtMeanAlwaysCovered) {
  const std::vector<GaussianPrediction> preds{{1.0, 0.5}, {-2.0, 3.0}};
  const std::vector<double> y{1.0, -2.0};
  for (double c : empirical_coverage(preds, y, ConfidenceGrid::standard())) EXPECT_EQ(c, 1.0);
}

TEST(Coverage, UpperEndpointIsInclusive) {
  const GaussianPrediction pred{0.0, 1.0};
  const double upper = central_interval(pred, 0.5).upper;
  const std::vector<GaussianPrediction> preds{pred};
  const std::vector<double> y{upper};
  EXPECT_EQ(empirical_coverage(preds, y, ConfidenceGrid{{0.5}})[0], 1.0);
}

TEST(Coverage, NineteenQuantilesHandEnumeration) {
  const auto preds = standard_normals(19);
  std::vector<double> y;
  for (int j = 1; j <= 19; ++j) y.push_back(quantile_by_bisection(j / 20.0));
  // Levels whose band edges fall between the j/20 points, so the count is
  // insensitive to rounding at the edges.
  const ConfidenceGrid grid{{0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95}};
  const auto coverage = empirical_coverage(preds, y, grid);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    // Count j with 10 (1 - p) <= j <= 10 (1 + p), i.e. j/20 inside the band.
    const double p = grid.levels[k];
    int count = 0;
    for (int j = 1; j <= 19; ++j)
      if (10.0 * (1.0 - p) <= j && j <= 10.0 * (1.0 + p)) ++count;
    EXPECT_DOUBLE_EQ(coverage[k], count / 19.0) << "p=" << p;
  }
  EXPECT_DOUBLE_EQ(coverage[8], 17.0 / 19.0);
  EXPECT_DOUBLE_EQ(coverage[9], 1.0);
}

TEST(Coverage, LengthMismatch) {
  const auto preds = standard_normals(3);
  const std::vector<double> y(2);
  try {
    empirical_coverage(preds, y, ConfidenceGrid::standard());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kLengthMismatch);
  }
}

TEST(Coverage, MonotoneInLevel) {
  Rng rng(12);
  std::vector<GaussianPrediction> preds(500);
  std::vector<double> y(500);
  for (std::size_t i = 0; i < y.size(); ++i) {
    preds[i] = {rng.normal(), 0.2 + rng.uniform()};
    y[i] = 1.3 * rng.normal();
  }
  const auto c = empirical_coverage(preds, y, ConfidenceGrid::standard());
  for (std::size_t k = 1; k < c.size(); ++k) EXPECT_GE(c[k], c[k - 1]);
}

TEST(Ecpe, PerfectCoverage) {
  const auto grid = ConfidenceGrid::standard();
  EXPECT_EQ(ecpe(grid.levels, grid.levels), 0.0);
  EXPECT_EQ(mcpe(grid.levels, grid.levels), 0.0);
}

TEST(Ecpe, SingleLevel) {
  const std::vector<double> levels{0.5}, cov{0.6};
  EXPECT_NEAR(ecpe(levels, cov), 0.1, 1e-15);
  EXPECT_NEAR(mcpe(levels, cov), 0.1, 1e-15);
}

TEST(Ecpe, MeanAtMostMax) {
  Rng rng(1);
  for (int c = 0; c < 50; ++c) {
    std::vector<double> levels(10), cov(10);
    for (std::size_t k = 0; k < 10; ++k) {
      levels[k] = (k + 1) / 11.0;
      cov[k] = rng.uniform();
    }
    EXPECT_LE(ecpe(levels, cov), mcpe(levels, cov));
  }
}

TEST(Ecpe, LengthMismatch) {
  const std::vector<double> a{0.5}, b{0.5, 0.6};
  EXPECT_THROW(ecpe(a, b), Error);
  EXPECT_THROW(mcpe(a, b), Error);
}

TEST(Widths, EqualSigmasGiveEqualMeanAndMax) {
  const std::vector<GaussianPrediction> preds(4, {1.0, 0.7});
  const auto w = epiw_mpiw(preds, 0.9);
  EXPECT_NEAR(w.epiw, w.mpiw, 1e-14);
}

TEST(Widths, HandComputed) {
  const std::vector<GaussianPrediction> preds{{0.0, 1.0}, {5.0, 2.0}};
  const auto w = epiw_mpiw(preds, 0.95);
  const double z = quantile_by_bisection(0.975);
  EXPECT_NEAR(w.epiw, 0.5 * (2 * z + 4 * z), 1e-9);
  EXPECT_NEAR(w.mpiw, 4 * z, 1e-9);
  EXPECT_NEAR(w.epiw, 5.88, 0.01);
  EXPECT_NEAR(w.mpiw, 7.84, 0.01);
}

TEST(Widths, IncreaseWithLevel) {
  const std::vector<GaussianPrediction> preds{{0.0, 1.0}, {1.0, 0.3}};
  double previous = 0.0;
  for (double p : ConfidenceGrid::standard().levels) {
    const double w = epiw_mpiw(preds, p).epiw;
    EXPECT_GT(w, previous);
    previous = w;
  }
}

TEST(Accuracy, PerfectPrediction) {
  const std::vector<double> y{1.0, 2.0, 4.0};
  const auto m = accuracy_metrics(y, y);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.smape, 0.0);
  EXPECT_EQ(m.rse, 0.0);
  EXPECT_EQ(m.r2, 1.0);
}

TEST(Accuracy, HandSubstitution) {
  const std::vector<double> y{0.0, 2.0}, yhat{1.0, 1.0};
  const auto m = accuracy_metrics(y, yhat);
  EXPECT_DOUBLE_EQ(m.rmse, 1.0);
  EXPECT_DOUBLE_EQ(m.r2, 0.0);
  EXPECT_DOUBLE_EQ(m.rse, 1.0);
  EXPECT_NEAR(m.smape, 0.5 * (200.0 + 100.0 / 1.5), 1e-12);
  EXPECT_NEAR(m.smape, 133.33, 0.01);
}

TEST(Accuracy, ZeroDenominatorSmapeTermIsZero) {
  const std::vector<double> y{0.0, 2.0}, yhat{0.0, 1.0};
  EXPECT_NEAR(accuracy_metrics(y, yhat).smape, 0.5 * (0.0 + 100.0 / 1.5), 1e-12);
}

TEST(Accuracy, DegenerateVariance) {
  const std::vector<double> y{3.0, 3.0}, yhat{1.0, 2.0};
  try {
    accuracy_metrics(y, yhat);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kDegenerateVariance);
  }
  const std::vector<GaussianPrediction> preds{{1.0, 1.0}, {2.0, 1.0}};
  const auto report = make_report(preds, y, ConfidenceGrid::standard());
  EXPECT_FALSE(report.r2.has_value());
  EXPECT_FALSE(report.rse.has_value());
  EXPECT_NEAR(report.rmse, std::sqrt(2.5), 1e-12);
}

TEST(Reliability, CalibratedRowsNearDiagonal) {
  Rng rng(77);
  const std::size_t n = 10000;
  std::vector<GaussianPrediction> preds(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds[i] = {rng.uniform(-2, 2), rng.uniform(0.1, 2.0)};
    y[i] = preds[i].mu + preds[i].sigma * rng.normal();
  }
  const auto rows = reliability_rows(preds, y, ConfidenceGrid::standard());
  ASSERT_EQ(rows.size(), 19u);
  for (const auto& r : rows) EXPECT_NEAR(r.observed, r.expected, 1.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Reliability, OverconfidentFallsBelowDiagonal) {
  const auto data = synth_heteroscedastic(5000, 3);
  std::vector<GaussianPrediction> preds(data.rows);
  for (std::size_t i = 0; i < data.rows; ++i) {
    preds[i] = {std::sin(2.0 * M_PI * data.at(i, 0)), 0.5 * data.true_sigma[i]};
  }
  const auto rows = reliability_rows(preds, data.y, ConfidenceGrid::standard());
  for (const auto& r : rows)
    if (r.expected >= 0.5) EXPECT_LT(r.observed, r.expected);
}

TEST(Reliability, SamplingConsistencyAtLargeN) {
  Rng rng(5);
  const std::size_t n = 100000;
  std::vector<GaussianPrediction> preds(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    preds[i] = {rng.normal(), std::exp(rng.normal() * 0.5)};
    y[i] = preds[i].mu + preds[i].sigma * rng.normal();
  }
  const auto report = make_report(preds, y, ConfidenceGrid::standard());
  EXPECT_LT(report.ecpe, 0.02);
  EXPECT_LT(report.ecpe_one_sided, 0.02);
}

TEST(Report, InvariantsAndSchema) {
  Rng rng(8);
  std::vector<GaussianPrediction> preds(300);
  std::vector<double> y(300);
  for (std::size_t i = 0; i < y.size(); ++i) {
    preds[i] = {rng.normal(), 0.5 + rng.uniform()};
    y[i] = preds[i].mu + 0.8 * rng.normal();
  }
  const auto r = make_report(preds, y, ConfidenceGrid::standard());
  EXPECT_LE(r.ecpe, r.mcpe);
  EXPECT_LE(r.epiw, r.mpiw);
  for (double c : r.coverage) EXPECT_TRUE(c >= 0.0 && c <= 1.0);
  EXPECT_TRUE(r.r2.has_value());
  EXPECT_EQ(r.n_test, 300u);
}

TEST(Report, DenormalizationCommutes) {
  Rng rng(9);
  const MinMaxScaler scaler{-3.0, 5.0};
  std::vector<GaussianPrediction> scaled(200);
  std::vector<double> y_scaled(200), y_raw(200);
  for (std::size_t i = 0; i < 200; ++i) {
    scaled[i] = {rng.uniform(), 0.05 + 0.1 * rng.uniform()};
    y_scaled[i] = scaled[i].mu + scaled[i].sigma * rng.normal();
    y_raw[i] = scaler.descale(y_scaled[i]);
  }
  const auto raw = denormalize(scaled, scaler);
  const auto grid = ConfidenceGrid::standard();
  const auto a = empirical_coverage(scaled, y_scaled, grid);
  const auto b = empirical_coverage(raw, y_raw, grid);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < 200; ++i) {
    const auto s = central_interval(scaled[i], 0.9);
    const auto r = central_interval(raw[i], 0.9);
    EXPECT_NEAR(r.lower, scaler.descale(s.lower), 1e-10);
    EXPECT_NEAR(r.upper, scaler.descale(s.upper), 1e-10);
  }
  EXPECT_NEAR(epiw_mpiw(raw, 0.9).epiw, scaler.range() * epiw_mpiw(scaled, 0.9).epiw, 1e-10);
}

TEST(Grid, Validation) {
  EXPECT_EQ(ConfidenceGrid::standard().size(), 19u);
  EXPECT_NEAR(ConfidenceGrid::standard().levels.back(), 0.95, 1e-15);
  EXPECT_THROW((ConfidenceGrid{{0.5, 0.4}}.validate()), Error);
  EXPECT_THROW((ConfidenceGrid{{0.0, 0.4}}.validate()), Error);
  EXPECT_THROW((ConfidenceGrid{{}}.validate()), Error);
}

TEST(OneSided, CountsBelowQuantile) {
  const auto preds = standard_normals(4);
  const std::vector<double> y{-1.0, -0.1, 0.1, 2.0};
  const auto c = one_sided_coverage(preds, y, ConfidenceGrid{{0.5}});
  EXPECT_EQ(c[0], 0.5);
}

}  // namespace
}  // namespace mmdcal
