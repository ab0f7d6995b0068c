#include "mmdcal/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

#include "mmdcal/errors.hpp"
#include "mmdcal/rng.hpp"

namespace mmdcal {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      continue;
    }
    if (c == sep && !quoted) {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == "?" || cell == "null";
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Fills NaN gaps by linear interpolation between the nearest observed values;
// leading and trailing gaps take the nearest observation.
void interpolate(std::vector<double>& column, const std::string& name) {
  std::vector<std::size_t> known;
  for (std::size_t i = 0; i < column.size(); ++i)
    if (!std::isnan(column[i])) known.push_back(i);
  if (known.empty()) throw Error(Errc::kColumnMissing, "column '" + name + "' has no values");
  for (std::size_t i = 0; i < known.front(); ++i) column[i] = column[known.front()];
  for (std::size_t i = known.back() + 1; i < column.size(); ++i) column[i] = column[known.back()];
  for (std::size_t k = 0; k + 1 < known.size(); ++k) {
    const auto a = known[k], b = known[k + 1];
    for (std::size_t i = a + 1; i < b; ++i) {
      const double t = static_cast<double>(i - a) / static_cast<double>(b - a);
      column[i] = column[a] + t * (column[b] - column[a]);
    }
  }
}

Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  Dataset out;
  out.feature_names = data.feature_names;
  out.target_name = data.target_name;
  out.rows = rows.size();
  const auto d = data.features();
  out.x.reserve(rows.size() * d);
  for (auto r : rows) {
    out.x.insert(out.x.end(), data.x.begin() + static_cast<std::ptrdiff_t>(r * d),
                 data.x.begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
    out.y.push_back(data.y[r]);
    if (!data.true_sigma.empty()) out.true_sigma.push_back(data.true_sigma[r]);
  }
  return out;
}

SplitPart scale_part(const Dataset& data, std::span<const std::size_t> rows, const Scalers& scalers) {
  SplitPart part;
  part.rows = rows.size();
  part.cols = data.features();
  part.x.reserve(part.rows * part.cols);
  for (auto r : rows) {
    for (std::size_t c = 0; c < part.cols; ++c) part.x.push_back(scalers.features[c].scale(data.at(r, c)));
    part.y.push_back(scalers.target.scale(data.y[r]));
    part.y_raw.push_back(data.y[r]);
    part.index.push_back(r);
    if (!data.true_sigma.empty()) part.true_sigma.push_back(data.true_sigma[r]);
  }
  return part;
}

Scalers fit_scalers(const Dataset& data, std::span<const std::size_t> train_rows) {
  Scalers s;
  std::vector<double> column(train_rows.size());
  for (std::size_t c = 0; c < data.features(); ++c) {
    for (std::size_t i = 0; i < train_rows.size(); ++i) column[i] = data.at(train_rows[i], c);
    s.features.push_back(MinMaxScaler::fit(column));
  }
  for (std::size_t i = 0; i < train_rows.size(); ++i) column[i] = data.y[train_rows[i]];
  s.target = MinMaxScaler::fit(column);
  return s;
}

struct Counts {
  std::size_t train, val, test;
};

Counts split_counts(std::size_t n, const SplitSpec& spec) {
  const auto train = static_cast<std::size_t>(std::llround(spec.train * static_cast<double>(n)));
  const auto val = static_cast<std::size_t>(std::llround(spec.val * static_cast<double>(n)));
  if (train == 0 || val == 0 || train + val >= n) {
    throw Error(Errc::kEmptySplit, "dataset of " + std::to_string(n) + " rows is too small for the split");
  }
  return {train, val, n - train - val};
}

}  // namespace

MinMaxScaler MinMaxScaler::fit(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::kEmptySplit, "cannot fit a scaler on no values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  MinMaxScaler s{*lo, *hi};
  if (!(s.max > s.min)) s.max = s.min + 1.0;
  return s;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& target_column,
                 const std::vector<std::string>& feature_columns, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kFileNotFound, path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::kParseError, path.string() + ": missing header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  // Semicolon-separated files are detected from the header.
  const char sep = line.find(',') == std::string::npos && line.find(';') != std::string::npos ? ';' : ',';
  const auto header = split_fields(line, sep);

  auto find_column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(Errc::kColumnMissing, "column '" + name + "' not in " + path.string());
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto target_idx = find_column(target_column);
  std::vector<std::size_t> feature_idx;
  if (feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (c != target_idx) feature_idx.push_back(c);
  } else {
    for (const auto& name : feature_columns) feature_idx.push_back(find_column(name));
  }

  // Column-major staging with NaN for missing cells.
  std::vector<std::vector<double>> features(feature_idx.size());
  std::vector<double> target;
  std::size_t rejected = 0;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, sep);
    auto cell_value = [&](std::size_t col) -> double {
      if (col >= fields.size() || is_missing(fields[col])) return std::numeric_limits<double>::quiet_NaN();
      const auto v = parse_number(fields[col]);
      if (!v) {
        throw Error(Errc::kParseError, path.string() + " row " + std::to_string(row_number) + ", column '" +
                                           header[col] + "': '" + fields[col] + "'");
      }
      return *v;
    };
    const double y = cell_value(target_idx);
    std::vector<double> xs(feature_idx.size());
    bool complete = !std::isnan(y);
    for (std::size_t k = 0; k < feature_idx.size(); ++k) {
      xs[k] = cell_value(feature_idx[k]);
      complete = complete && !std::isnan(xs[k]);
    }
    if (!complete && !options.interpolate_missing) {
      ++rejected;
      continue;
    }
    target.push_back(y);
    for (std::size_t k = 0; k < xs.size(); ++k) features[k].push_back(xs[k]);
  }

  Dataset data;
  data.target_name = target_column;
  if (rejected > 0) data.warnings.push_back(std::to_string(rejected) + " row(s) with missing values rejected");
  if (options.interpolate_missing) {
    interpolate(target, target_column);
    for (std::size_t k = 0; k < features.size(); ++k) interpolate(features[k], header[feature_idx[k]]);
  }

  std::vector<std::size_t> kept;
  for (std::size_t k = 0; k < features.size(); ++k) {
    const auto [lo, hi] = std::minmax_element(features[k].begin(), features[k].end());
    if (features[k].empty() || *lo == *hi) {
      data.warnings.push_back("constant column '" + header[feature_idx[k]] + "' dropped");
      continue;
    }
    kept.push_back(k);
    data.feature_names.push_back(header[feature_idx[k]]);
  }
  data.rows = target.size();
  data.y = std::move(target);
  data.x.reserve(data.rows * kept.size());
  for (std::size_t r = 0; r < data.rows; ++r)
    for (auto k : kept) data.x.push_back(features[k][r]);
  for (const auto& w : data.warnings) std::cerr << "warning: " << path.string() << ": " << w << '\n';
  return data;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kFileNotFound, "cannot write " + path.string());
  for (const auto& name : data.feature_names) out << name << ',';
  out << data.target_name << '\n';
  char buf[32];
  for (std::size_t r = 0; r < data.rows; ++r) {
    for (std::size_t c = 0; c < data.features(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g,", data.at(r, c));
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g\n", data.y[r]);
    out << buf;
  }
}

Dataset make_windows(const Dataset& series, std::size_t window, std::size_t horizon) {
  if (window < 1 || horizon < 1) throw Error(Errc::kConfigError, "window and horizon must be >= 1");
  if (series.rows <= window + horizon) {
    throw Error(Errc::kSeriesTooShort, "series of " + std::to_string(series.rows) + " steps, window " +
                                           std::to_string(window) + ", horizon " + std::to_string(horizon));
  }
  Dataset out;
  out.target_name = series.target_name;
  for (std::size_t lag = window; lag-- > 0;) {
    const std::string suffix = "_lag" + std::to_string(lag);
    for (const auto& name : series.feature_names) out.feature_names.push_back(name + suffix);
    out.feature_names.push_back(series.target_name + suffix);
  }
  out.rows = series.rows - window - horizon + 1;
  for (std::size_t r = 0; r < out.rows; ++r) {
    const std::size_t t = r + window - 1;
    for (std::size_t step = t + 1 - window; step <= t; ++step) {
      for (std::size_t c = 0; c < series.features(); ++c) out.x.push_back(series.at(step, c));
      out.x.push_back(series.y[step]);
    }
    out.y.push_back(series.y[t + horizon]);
    if (!series.true_sigma.empty()) out.true_sigma.push_back(series.true_sigma[t + horizon]);
  }
  return out;
}

void SplitSpec::validate() const {
  if (!(train > 0.0 && val > 0.0 && test > 0.0) || std::abs(train + val + test - 1.0) > 1e-9) {
    throw Error(Errc::kFractionInvalid, "split fractions must be positive and sum to 1");
  }
}

SplitPart SplitPart::slice(std::span<const std::size_t> rows_to_take) const {
  SplitPart out;
  out.rows = rows_to_take.size();
  out.cols = cols;
  for (auto r : rows_to_take) {
    out.x.insert(out.x.end(), x.begin() + static_cast<std::ptrdiff_t>(r * cols),
                 x.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
    out.y.push_back(y[r]);
    out.y_raw.push_back(y_raw[r]);
    out.index.push_back(index[r]);
    if (!true_sigma.empty()) out.true_sigma.push_back(true_sigma[r]);
  }
  return out;
}

SplitResult split(const Dataset& data, const SplitSpec& spec) {
  spec.validate();
  const auto counts = split_counts(data.rows, spec);
  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (spec.mode == SplitMode::kRandom) {
    Rng rng(spec.seed);
    rng.shuffle(order);
  }
  const std::span<const std::size_t> all(order);
  const auto train_rows = all.subspan(0, counts.train);
  const auto val_rows = all.subspan(counts.train, counts.val);
  const auto test_rows = all.subspan(counts.train + counts.val);

  SplitResult result;
  result.scalers = fit_scalers(data, train_rows);
  result.train = scale_part(data, train_rows, result.scalers);
  result.val = scale_part(data, val_rows, result.scalers);
  result.test = scale_part(data, test_rows, result.scalers);
  return result;
}

SplitResult split_series(const Dataset& series, const SplitSpec& spec, std::size_t window, std::size_t horizon) {
  spec.validate();
  const auto counts = split_counts(series.rows, spec);
  std::vector<std::size_t> order(series.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::span<const std::size_t> all(order);

  const auto train = make_windows(subset(series, all.subspan(0, counts.train)), window, horizon);
  const auto val = make_windows(subset(series, all.subspan(counts.train, counts.val)), window, horizon);
  const auto test = make_windows(subset(series, all.subspan(counts.train + counts.val)), window, horizon);

  auto rows_of = [](const Dataset& d) {
    std::vector<std::size_t> r(d.rows);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
  };
  const auto train_rows = rows_of(train);
  SplitResult result;
  result.scalers = fit_scalers(train, train_rows);
  result.train = scale_part(train, train_rows, result.scalers);
  result.val = scale_part(val, rows_of(val), result.scalers);
  result.test = scale_part(test, rows_of(test), result.scalers);
  // Report label positions in the original series.
  const std::size_t offsets[] = {0, counts.train, counts.train + counts.val};
  SplitPart* parts[] = {&result.train, &result.val, &result.test};
  for (int k = 0; k < 3; ++k)
    for (auto& idx : parts[k]->index) idx += offsets[k] + window - 1 + horizon;
  return result;
}

Dataset synth_heteroscedastic(std::size_t n, std::uint64_t seed, const SynthOptions& options) {
  if (n < 100) throw Error(Errc::kConfigError, "synthetic dataset needs n >= 100");
  if (options.dims < 1) throw Error(Errc::kConfigError, "synthetic dataset needs dims >= 1");
  Dataset data;
  for (std::size_t c = 0; c < options.dims; ++c) data.feature_names.push_back("x" + std::to_string(c));
  data.rows = n;
  data.x.reserve(n * options.dims);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < options.dims; ++c) data.x.push_back(rng.uniform());
    const double x0 = data.x[i * options.dims];
    const double sigma = options.noise_scale * (0.05 + 0.25 * x0);
    const double eps = rng.normal();
    data.y.push_back(std::sin(2.0 * std::numbers::pi * x0) + sigma * eps);
    data.true_sigma.push_back(sigma);
  }
  return data;
}

GaussianPrediction denormalize(const GaussianPrediction& pred, const MinMaxScaler& target) {
  return {target.descale(pred.mu), pred.sigma * target.range()};
}

std::vector<GaussianPrediction> denormalize(std::span<const GaussianPrediction> preds, const MinMaxScaler& target) {
  std::vector<GaussianPrediction> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) out[i] = denormalize(preds[i], target);
  return out;
}

void save_scalers(const Scalers& scalers, const std::vector<std::string>& feature_names,
                  const std::filesystem::path& path) {
  nlohmann::json j;
  j["target"] = {{"min", scalers.target.min}, {"max", scalers.target.max}};
  for (std::size_t c = 0; c < scalers.features.size(); ++c) {
    j["features"].push_back({{"name", c < feature_names.size() ? feature_names[c] : "x" + std::to_string(c)},
                             {"min", scalers.features[c].min},
                             {"max", scalers.features[c].max}});
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::kFileNotFound, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace mmdcal
