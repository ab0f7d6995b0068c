#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmdcal/hnn.hpp"
#include "mmdcal/tensor.hpp"

namespace mmdcal {

/// Affine map of [min, max] onto [0, 1].
struct MinMaxScaler {
  double min = 0.0;
  double max = 1.0;

  /// Degenerate columns (max == min) get a unit range so scaling stays finite.
  static MinMaxScaler fit(std::span<const double> values);
  double range() const noexcept { return max - min; }
  double scale(double v) const noexcept { return (v - min) / range(); }
  double descale(double v) const noexcept { return min + v * range(); }
};

/// Raw (unscaled) table: x is rows x features, row-major.
struct Dataset {
  std::vector<std::string> feature_names;
  std::string target_name = "y";
  std::size_t rows = 0;
  std::vector<double> x;
  std::vector<double> y;
  /// Generator noise std per row, synthetic data only (diagnostics).
  std::vector<double> true_sigma;
  std::vector<std::string> warnings;

  std::size_t features() const noexcept { return feature_names.size(); }
  double at(std::size_t row, std::size_t col) const { return x[row * features() + col]; }
};

struct CsvOptions {
  /// Time-series mode: missing cells are linearly interpolated along rows
  /// instead of rejecting the row.
  bool interpolate_missing = false;
};

/// Header row required, ',' separator (';' when the header has no comma),
/// '.' decimals. Empty, NA, NaN and ?
/// cells count as missing. `feature_columns` empty means every non-target
/// column. Constant feature columns are dropped with a warning.
Dataset load_csv(const std::filesystem::path& path, const std::string& target_column,
                 const std::vector<std::string>& feature_columns = {}, const CsvOptions& options = {});

void save_csv(const Dataset& data, const std::filesystem::path& path);

/// Supervised framing of a chronologically ordered series. Row t has the
/// covariates and the target of steps t-window+1 .. t (flattened step by step)
/// and label target[t + horizon].
Dataset make_windows(const Dataset& series, std::size_t window = 5, std::size_t horizon = 1);

enum class SplitMode { kRandom, kChronological };

struct SplitSpec {
  SplitMode mode = SplitMode::kRandom;
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Scalers {
  std::vector<MinMaxScaler> features;
  MinMaxScaler target;
};

/// One split in model units: x and y scaled with the training scalers.
struct SplitPart {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> y_raw;
  std::vector<std::size_t> index;  ///< row ids in the source dataset
  std::vector<double> true_sigma;  ///< raw units, synthetic data only

  Tensor x_tensor() const { return Tensor::from({rows, cols}, x); }
  /// The listed rows, in order, as a standalone part.
  SplitPart slice(std::span<const std::size_t> rows_to_take) const;
};

struct SplitResult {
  SplitPart train;
  SplitPart val;
  SplitPart test;
  Scalers scalers;
};

/// Random (seeded shuffle) or chronological split; scalers are fit on the
/// training rows only and applied unclipped to every split.
SplitResult split(const Dataset& data, const SplitSpec& spec);

/// Chronological split of a raw series followed by per-segment windowing, so
/// no window spans two splits.
SplitResult split_series(const Dataset& series, const SplitSpec& spec, std::size_t window, std::size_t horizon);

struct SynthOptions {
  std::size_t dims = 1;
  double noise_scale = 1.0;
};

/// x ~ U(0,1)^d, y = sin(2 pi x_0) + sigma(x_0) eps with sigma(x) = 0.05 + 0.25 x.
Dataset synth_heteroscedastic(std::size_t n, std::uint64_t seed, const SynthOptions& options = {});

GaussianPrediction denormalize(const GaussianPrediction& pred, const MinMaxScaler& target);
std::vector<GaussianPrediction> denormalize(std::span<const GaussianPrediction> preds, const MinMaxScaler& target);

void save_scalers(const Scalers& scalers, const std::vector<std::string>& feature_names,
                  const std::filesystem::path& path);

}  // namespace mmdcal
