#include "mmdcal/isotonic.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mmdcal/errors.hpp"
#include "mmdcal/metrics.hpp"

namespace mmdcal {
namespace {

// Keeps recalibrated levels strictly inside (0,1) for the Gaussian quantile.
constexpr double kLevelFloor = 1e-15;

}  // namespace

std::vector<double> pav(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw Error(Errc::kLengthMismatch, "pav: values and weights differ");
  struct Block {
    double weight;
    double mean;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(weights[i] > 0.0)) throw Error(Errc::kConfigError, "pav: weights must be positive");
    blocks.push_back({weights[i], values[i], 1});
    while (blocks.size() >= 2 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      const double w = prev.weight + top.weight;
      prev.mean = (prev.weight * prev.mean + top.weight * top.mean) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  std::vector<double> fit;
  fit.reserve(values.size());
  for (const auto& b : blocks) fit.insert(fit.end(), b.count, b.mean);
  return fit;
}

IsotonicRecalibrator::IsotonicRecalibrator(std::vector<double> inputs, std::vector<double> outputs)
    : inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
  if (inputs_.size() != outputs_.size() || inputs_.empty()) {
    throw Error(Errc::kLengthMismatch, "recalibrator needs equal, non-empty breakpoint lists");
  }
  for (std::size_t k = 0; k < inputs_.size(); ++k) {
    if (k > 0 && (!(inputs_[k] > inputs_[k - 1]) || outputs_[k] < outputs_[k - 1])) {
      throw Error(Errc::kConfigError, "recalibrator breakpoints must be increasing and monotone");
    }
    if (outputs_[k] < 0.0 || outputs_[k] > 1.0) throw Error(Errc::kConfigError, "recalibrator output outside [0,1]");
  }
}

double IsotonicRecalibrator::operator()(double u) const {
  const auto it = std::upper_bound(inputs_.begin(), inputs_.end(), u);
  if (it == inputs_.begin()) return 0.0;
  return outputs_[static_cast<std::size_t>(it - inputs_.begin()) - 1];
}

double IsotonicRecalibrator::inverse(double p) const {
  const auto it = std::lower_bound(outputs_.begin(), outputs_.end(), p);
  const double u = it == outputs_.end() ? inputs_.back() : inputs_[static_cast<std::size_t>(it - outputs_.begin())];
  return std::clamp(u, kLevelFloor, 1.0 - kLevelFloor);
}

void IsotonicRecalibrator::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kFileNotFound, "cannot write " + path.string());
  out << "input_level,output_level\n";
  char buf[64];
  for (std::size_t k = 0; k < inputs_.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", inputs_[k], outputs_[k]);
    out << buf;
  }
}

IsotonicRecalibrator IsotonicRecalibrator::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kFileNotFound, path.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> inputs, outputs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ss(line);
    double a = 0.0, b = 0.0;
    char comma = 0;
    if (!(ss >> a >> comma >> b) || comma != ',') {
      throw Error(Errc::kParseError, path.string() + " row " + std::to_string(row));
    }
    inputs.push_back(a);
    outputs.push_back(b);
  }
  return {std::move(inputs), std::move(outputs)};
}

IsotonicRecalibrator fit_isotonic(std::span<const GaussianPrediction> preds, std::span<const double> y) {
  if (preds.size() != y.size()) throw Error(Errc::kLengthMismatch, "fit_isotonic: preds and y differ");
  if (y.size() < 2) throw Error(Errc::kTooFewPoints, "isotonic recalibration needs >= 2 points");

  std::vector<double> levels(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) levels[i] = gaussian_cdf(preds[i], y[i]);
  std::sort(levels.begin(), levels.end());

  // Empirical CDF at each distinct level: fraction of levels <= it.
  std::vector<double> inputs, frequencies, weights;
  const double n = static_cast<double>(levels.size());
  std::size_t tied = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    ++tied;
    if (i + 1 < levels.size() && levels[i + 1] == levels[i]) continue;
    inputs.push_back(levels[i]);
    frequencies.push_back(static_cast<double>(i + 1) / n);
    weights.push_back(static_cast<double>(tied));
    tied = 0;
  }
  auto fitted = pav(frequencies, weights);
  for (auto& v : fitted) v = std::clamp(v, 0.0, 1.0);
  return {std::move(inputs), std::move(fitted)};
}

double apply_recalibration(const IsotonicRecalibrator& recal, const GaussianPrediction& pred, double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(Errc::kPOutOfRange, "recalibration level " + std::to_string(p));
  return gaussian_quantile(pred, recal.inverse(p));
}

}  // namespace mmdcal
