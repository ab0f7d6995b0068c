#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <tuple>

#include "mmdcal/dataset.hpp"
#include "mmdcal/errors.hpp"

namespace mmdcal {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mmdcal_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const auto path = dir_ / name;
    std::ofstream(path) << text;
    return path;
  }

  fs::path dir_;
};

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::kConfigError;
}

Dataset counting_series(std::size_t n, double start = 1.0) {
  Dataset d;
  d.rows = n;
  for (std::size_t i = 0; i < n; ++i) d.y.push_back(start + static_cast<double>(i));
  return d;
}

using Csv = TempDir;

TEST_F(Csv, ExactRoundTrip) {
  const auto path = write("a.csv", "a,b,y\n1.5,-2,0.25\n3,4e-3,1\n+7,8,-9.125\n");
  const auto d = load_csv(path, "y");
  ASSERT_EQ(d.rows, 3u);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.x, (std::vector<double>{1.5, -2, 3, 4e-3, 7, 8}));
  EXPECT_EQ(d.y, (std::vector<double>{0.25, 1, -9.125}));

  const auto copy = dir_ / "b.csv";
  save_csv(d, copy);
  const auto back = load_csv(copy, "y");
  EXPECT_EQ(back.x, d.x);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.feature_names, d.feature_names);
}

TEST_F(Csv, ConstantColumnDropped) {
  const auto d = load_csv(write("c.csv", "a,k,y\n1,5,1\n2,5,2\n3,5,3\n"), "y");
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a"}));
  EXPECT_EQ(d.x, (std::vector<double>{1, 2, 3}));
  EXPECT_FALSE(d.warnings.empty());
}

TEST_F(Csv, MissingTargetRowRejected) {
  const auto d = load_csv(write("m.csv", "a,y\n1,1\n2,NA\n3,3\n4,\n"), "y");
  EXPECT_EQ(d.rows, 2u);
  EXPECT_EQ(d.y, (std::vector<double>{1, 3}));
}

TEST_F(Csv, FeatureSelection) {
  const auto d = load_csv(write("f.csv", "a,b,c,y\n1,2,3,4\n5,6,7,8\n"), "y", {"c", "a"});
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"c", "a"}));
  EXPECT_EQ(d.x, (std::vector<double>{3, 1, 7, 5}));
}

TEST_F(Csv, Errors) {
  const auto ok = write("ok.csv", "a,y\n1,2\n3,4\n");
  EXPECT_EQ(code_of([&] { load_csv(dir_ / "absent.csv", "y"); }), Errc::kFileNotFound);
  EXPECT_EQ(code_of([&] { load_csv(ok, "target"); }), Errc::kColumnMissing);
  EXPECT_EQ(code_of([&] { load_csv(ok, "y", {"zzz"}); }), Errc::kColumnMissing);
  const auto bad = write("bad.csv", "a,y\n1,2\nx1,4\n");
  EXPECT_EQ(code_of([&] { load_csv(bad, "y"); }), Errc::kParseError);
}

TEST_F(Csv, InterpolatesSeriesGaps) {
  const auto path = write("s.csv", "a,y\n1,10\nNA,20\n3,\n4,40\n");
  CsvOptions options;
  options.interpolate_missing = true;
  const auto d = load_csv(path, "y", {}, options);
  ASSERT_EQ(d.rows, 4u);
  EXPECT_EQ(d.x, (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(d.y, (std::vector<double>{10, 20, 30, 40}));
}

TEST(Windows, CountAndFirstRow) {
  const auto w = make_windows(counting_series(10), 5, 1);
  ASSERT_EQ(w.rows, 5u);
  ASSERT_EQ(w.features(), 5u);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(w.at(0, k), 1.0 + static_cast<double>(k));
  EXPECT_EQ(w.y[0], 6.0);
  EXPECT_EQ(w.y.back(), 10.0);
}

TEST(Windows, Horizon) {
  const auto w = make_windows(counting_series(10), 3, 2);
  ASSERT_EQ(w.rows, 6u);
  EXPECT_EQ(w.y[0], 5.0);
}

TEST(Windows, CovariatesInterleavedWithTarget) {
  Dataset s = counting_series(8);
  s.feature_names = {"c"};
  for (std::size_t i = 0; i < 8; ++i) s.x.push_back(100.0 + static_cast<double>(i));
  const auto w = make_windows(s, 2, 1);
  ASSERT_EQ(w.features(), 4u);
  EXPECT_EQ((std::vector<double>{w.at(0, 0), w.at(0, 1), w.at(0, 2), w.at(0, 3)}),
            (std::vector<double>{100, 1, 101, 2}));
  EXPECT_EQ(w.y[0], 3.0);
}

TEST(Windows, TooShort) {
  EXPECT_EQ(code_of([] { make_windows(counting_series(6), 5, 1); }), Errc::kSeriesTooShort);
}

TEST(Windows, ShiftEquivariant) {
  const auto base = make_windows(counting_series(20, 1.0), 4, 1);
  auto longer = counting_series(23, -2.0);
  const auto shifted = make_windows(longer, 4, 1);
  ASSERT_EQ(shifted.rows, base.rows + 3);
  for (std::size_t r = 0; r < base.rows; ++r) {
    for (std::size_t k = 0; k < base.features(); ++k) EXPECT_EQ(shifted.at(r + 3, k), base.at(r, k));
    EXPECT_EQ(shifted.y[r + 3], base.y[r]);
  }
}

TEST(Windows, NoLeakageAcrossSplitBoundary) {
  const auto series = counting_series(200);
  SplitSpec spec;
  spec.mode = SplitMode::kChronological;
  const auto parts = split_series(series, spec, 5, 1);
  // Values equal time steps + 1, so a window's raw lag values identify its steps.
  const auto boundary = [&](const SplitPart& p) {
    double lo = INFINITY, hi = -INFINITY;
    for (double v : p.y_raw) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    return std::pair{lo, hi};
  };
  const auto [train_lo, train_hi] = boundary(parts.train);
  const auto [val_lo, val_hi] = boundary(parts.val);
  const auto [test_lo, test_hi] = boundary(parts.test);
  EXPECT_LT(train_hi, val_lo);
  EXPECT_LT(val_hi, test_lo);
  for (std::size_t r = 0; r < parts.test.rows; ++r) {
    for (std::size_t k = 0; k < parts.test.cols; ++k) {
      const double raw = parts.scalers.features[k].descale(parts.test.x[r * parts.test.cols + k]);
      EXPECT_GT(raw, val_hi - 1e-9);
    }
  }
  for (std::size_t r = 0; r < parts.val.rows; ++r) {
    for (std::size_t k = 0; k < parts.val.cols; ++k) {
      const double raw = parts.scalers.features[k].descale(parts.val.x[r * parts.val.cols + k]);
      EXPECT_GT(raw, train_hi - 1e-9);
    }
  }
}

Dataset linear_table(std::size_t n) {
  Dataset d;
  d.feature_names = {"a"};
  d.rows = n;
  for (std::size_t i = 0; i < n; ++i) {
    d.x.push_back(static_cast<double>(i));
    d.y.push_back(2.0 * static_cast<double>(i));
  }
  return d;
}

TEST(Split, SizesAndDeterminism) {
  const auto d = linear_table(100);
  SplitSpec spec;
  spec.seed = 4;
  const auto a = split(d, spec);
  const auto b = split(d, spec);
  EXPECT_EQ(a.train.rows, 80u);
  EXPECT_EQ(a.val.rows, 10u);
  EXPECT_EQ(a.test.rows, 10u);
  EXPECT_EQ(a.train.index, b.train.index);
  EXPECT_EQ(a.test.index, b.test.index);
  spec.seed = 5;
  EXPECT_NE(split(d, spec).train.index, a.train.index);

  std::vector<std::size_t> all = a.train.index;
  all.insert(all.end(), a.val.index.begin(), a.val.index.end());
  all.insert(all.end(), a.test.index.begin(), a.test.index.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
}

TEST(Split, ChronologicalOrdering) {
  SplitSpec spec;
  spec.mode = SplitMode::kChronological;
  const auto s = split(linear_table(100), spec);
  EXPECT_LT(*std::max_element(s.train.index.begin(), s.train.index.end()),
            *std::min_element(s.val.index.begin(), s.val.index.end()));
  EXPECT_LT(*std::max_element(s.val.index.begin(), s.val.index.end()),
            *std::min_element(s.test.index.begin(), s.test.index.end()));
}

TEST(Split, TrainFitScalersLeaveTestUnclipped) {
  SplitSpec spec;
  spec.mode = SplitMode::kChronological;
  const auto s = split(linear_table(100), spec);
  for (double v : s.train.y) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
  EXPECT_GT(*std::max_element(s.test.y.begin(), s.test.y.end()), 1.0);
  EXPECT_EQ(s.scalers.target.max, 2.0 * 79.0);
  for (std::size_t i = 0; i < s.test.rows; ++i) EXPECT_NEAR(s.scalers.target.descale(s.test.y[i]), s.test.y_raw[i], 1e-12);
}

TEST(Split, InvalidFractions) {
  for (auto [tr, va, te] : {std::tuple{0.8, 0.1, 0.2}, std::tuple{0.0, 0.5, 0.5}, std::tuple{1.1, -0.05, -0.05}}) {
    SplitSpec spec;
    spec.train = tr;
    spec.val = va;
    spec.test = te;
    EXPECT_EQ(code_of([&] { spec.validate(); }), Errc::kFractionInvalid);
  }
}

TEST(Split, EmptySplit) {
  EXPECT_EQ(code_of([] { split(linear_table(4), SplitSpec{}); }), Errc::kEmptySplit);
}

TEST(Scaler, RoundTrip) {
  const std::vector<double> v{-3.25, 0.0, 17.5, 1e-3, 4.0};
  const auto s = MinMaxScaler::fit(v);
  EXPECT_EQ(s.scale(-3.25), 0.0);
  EXPECT_EQ(s.scale(17.5), 1.0);
  for (double x : v) EXPECT_NEAR(s.descale(s.scale(x)), x, 1e-12);
}

TEST(Scaler, DegenerateColumnStaysFinite) {
  const std::vector<double> v{2.0, 2.0};
  const auto s = MinMaxScaler::fit(v);
  EXPECT_TRUE(std::isfinite(s.scale(3.0)));
}

TEST(Synth, Deterministic) {
  const auto a = synth_heteroscedastic(500, 3);
  const auto b = synth_heteroscedastic(500, 3);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(synth_heteroscedastic(500, 4).y, a.y);
}

TEST(Synth, ResidualSpreadInTopBin) {
  const auto d = synth_heteroscedastic(100000, 1);
  double sum2 = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < d.rows; ++i) {
    const double x = d.at(i, 0);
    if (x < 0.9) continue;
    const double r = d.y[i] - std::sin(2.0 * std::numbers::pi * x);
    sum2 += r * r;
    ++count;
  }
  const double spread = std::sqrt(sum2 / static_cast<double>(count));
  EXPECT_NEAR(spread, 0.275, 0.02);
  // RMS of sigma(x) = 0.05 + 0.25 x over the bin.
  const double a = 0.05 + 0.25 * 0.9, b = 0.05 + 0.25;
  const double rms = std::sqrt((b * b * b - a * a * a) / (3.0 * 0.25 * 0.1));
  EXPECT_NEAR(spread, rms, 0.005);
}

TEST(Synth, Noiseless) {
  SynthOptions options;
  options.noise_scale = 0.0;
  const auto d = synth_heteroscedastic(200, 2, options);
  for (std::size_t i = 0; i < d.rows; ++i) EXPECT_EQ(d.y[i], std::sin(2.0 * std::numbers::pi * d.at(i, 0)));
}

TEST(Synth, TooSmall) { EXPECT_EQ(code_of([] { synth_heteroscedastic(50, 0); }), Errc::kConfigError); }

TEST(Denormalize, AffineInMeanAndScaleInSigma) {
  const MinMaxScaler target{10.0, 14.0};
  const auto p = denormalize(GaussianPrediction{0.5, 0.25}, target);
  EXPECT_EQ(p.mu, 12.0);
  EXPECT_EQ(p.sigma, 1.0);
}

}  // namespace
}  // namespace mmdcal
