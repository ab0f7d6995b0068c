#include "mmdcal/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mmdcal/errors.hpp"
#include "mmdcal/gradcheck.hpp"
#include "mmdcal/isotonic.hpp"
#include "mmdcal/kernels.hpp"
#include "mmdcal/losses.hpp"
#include "mmdcal/metrics.hpp"
#include "mmdcal/normal.hpp"
#include "mmdcal/rng.hpp"

namespace mmdcal {
namespace {

constexpr std::uint64_t kSampleStream = 0xd1b54a32d192ed03ULL;

std::string join(std::span<const double> v, std::size_t limit = 8) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < v.size() && i < limit; ++i) out << (i ? "," : "") << v[i];
  if (v.size() > limit) out << ",...(" << v.size() << ")";
  out << ']';
  return out.str();
}

SelfTestResult gradient_self_test(std::uint64_t seed) {
  constexpr std::size_t kPoints = 20;
  constexpr double kTol = 1e-5;
  Rng rng(seed);
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t point = 0; point < kPoints; ++point) {
    const std::size_t n = 6;
    HnnModel model(2, 8, seed + point);
    std::vector<double> xs(n * 2), y(n);
    for (auto& v : xs) v = rng.uniform();
    for (auto& v : y) v = rng.uniform();
    const auto x = Tensor::from({n, 2}, xs);
    const auto noise = rng.normals(n);
    auto mu = Tensor::vector(rng.normals(n), true);
    auto s = Tensor::vector(rng.normals(n), true);

    const std::pair<const char*, GradCheckResult> checks[] = {
        {"nll", finite_difference_check([&](Tape& t) { return nll_loss(t, mu, s, y); }, {mu, s})},
        {"mmd",
         finite_difference_check(
             [&](Tape& t) { return mmd2_biased(t, y, sample_predictions(t, {mu, s}, noise, true), {}); }, {mu, s})},
        {"nll_end_to_end", finite_difference_check(
                               [&](Tape& t) {
                                 const auto out = model.forward(t, x);
                                 return nll_loss(t, out.mu, out.s, y);
                               },
                               model.parameters())},
        {"mmd_end_to_end", finite_difference_check(
                               [&](Tape& t) {
                                 const auto out = model.forward(t, x);
                                 return mmd2_biased(t, y, sample_predictions(t, out, noise, true), {});
                               },
                               model.parameters())},
    };
    for (const auto& [name, r] : checks) {
      if (r.max_relative_error >= worst) {
        worst = r.max_relative_error;
        worst_name = name;
      }
    }
  }
  char detail[160];
  std::snprintf(detail, sizeof detail, "%zu points x 4 objectives, worst relative error %.3g (%s), tolerance %.0e",
                kPoints, worst, worst_name.c_str(), kTol);
  return {"gradient_check", worst < kTol, detail};
}

SelfTestResult mmd_oracle_self_test(std::uint64_t seed) {
  constexpr double kTol = 1e-10;
  Rng rng(seed);
  const KernelMixture mixture;
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    const auto n = 1 + static_cast<std::size_t>(rng.below(200));
    const auto m = 1 + static_cast<std::size_t>(rng.below(200));
    const double scale = std::pow(10.0, rng.uniform(-1.0, 1.0));
    std::vector<double> real(n), model(m);
    for (auto& v : real) v = scale * rng.normal();
    for (auto& v : model) v = scale * rng.normal() + rng.uniform(-0.5, 0.5);
    const double fast = mmd2_biased(real, model, mixture).value;
    const double slow = mmd2_oracle(real, model, mixture);
    const double diff = std::abs(fast - slow);
    worst = std::max(worst, diff);
    if (!(diff <= kTol)) {
      return {"mmd_oracle", false,
              "case " + std::to_string(c) + ": |diff| " + std::to_string(diff) + " real=" + join(real) +
                  " model=" + join(model)};
    }
  }
  char detail[96];
  std::snprintf(detail, sizeof detail, "200 cases, worst |diff| %.3g", worst);
  return {"mmd_oracle", true, detail};
}

SelfTestResult pav_self_test(std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int c = 0; c < 300; ++c) {
    const auto n = 1 + static_cast<std::size_t>(rng.below(9));
    std::vector<double> values(n), weights(n);
    for (auto& v : values) v = static_cast<double>(rng.below(5)) + (rng.below(2) ? rng.uniform() : 0.0);
    for (auto& w : weights) w = rng.below(3) ? 1.0 : rng.uniform(0.1, 3.0);
    const auto fast = pav(values, weights);
    const auto slow = pav_oracle(values, weights);
    for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
    if (!(worst <= 1e-9)) {
      return {"pav_oracle", false, "values=" + join(values) + " weights=" + join(weights)};
    }
  }
  char detail[96];
  std::snprintf(detail, sizeof detail, "300 instances up to n=9, worst |diff| %.3g", worst);
  return {"pav_oracle", true, detail};
}

SelfTestResult quantile_self_test() {
  double worst_p = 0.0;
  for (int k = -10; k <= 10; ++k) {
    for (double base : {1.0, 2.5, 5.0}) {
      double p = base * std::pow(10.0, -std::abs(k));
      if (p >= 1.0) continue;
      if (k > 0) p = 1.0 - p;
      const double back = normal_cdf(normal_quantile(p));
      worst_p = std::max(worst_p, std::abs(back - p) / std::min(p, 1.0 - p));
    }
  }
  double worst_z = 0.0;
  // Above z = 4 the upper tail of the CDF is too close to 1 for a z round trip.
  for (double z = -7.0; z <= 4.0; z += 0.25) worst_z = std::max(worst_z, std::abs(normal_quantile(normal_cdf(z)) - z));
  char detail[128];
  std::snprintf(detail, sizeof detail, "max relative level error %.3g, max z error %.3g", worst_p, worst_z);
  return {"quantile_round_trip", worst_p < 1e-9 && worst_z < 1e-7, detail};
}

}  // namespace

void ConvergenceConfig::validate() const {
  if (sizes.empty() || seeds.empty()) throw Error(Errc::kConfigError, "convergence study needs sizes and seeds");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 100) throw Error(Errc::kConfigError, "study sizes must be >= 100");
    if (i > 0 && sizes[i] <= sizes[i - 1]) throw Error(Errc::kConfigError, "study sizes must strictly increase");
  }
  train.validate();
  split.validate();
}

double ConvergenceStudy::median(std::size_t size, double ConvergencePoint::*field) const {
  std::vector<double> v;
  for (const auto& p : points)
    if (p.size == size) v.push_back(p.*field);
  if (v.empty()) throw Error(Errc::kEmptySample, "no study points at size " + std::to_string(size));
  std::sort(v.begin(), v.end());
  const auto mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

void ConvergenceStudy::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kFileNotFound, "cannot write " + path.string());
  out << "size,ecpe_one_sided,ecpe_two_sided,mmd2,seed\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%llu\n", p.size, p.ecpe_one_sided, p.ecpe_two_sided,
                  p.mmd2, static_cast<unsigned long long>(p.seed));
    out << buf;
  }
}

ConvergenceStudy run_convergence_study(const ConvergenceConfig& config) {
  config.validate();
  ConvergenceStudy study;
  study.sizes = config.sizes;
  for (auto size : config.sizes) {
    for (auto seed : config.seeds) {
      const auto data = synth_heteroscedastic(size, seed, config.synth);
      SplitSpec spec = config.split;
      spec.seed = seed;
      const auto parts = split(data, spec);
      TrainConfig train = config.train;
      train.seed = seed;
      HnnModel model(parts.train.cols, config.hidden, seed);
      train_two_stage(model, parts.train, parts.val, train);

      const auto scaled = model.predict_distribution(parts.test.x_tensor());
      const auto report = make_report(denormalize(scaled, parts.scalers.target), parts.test.y_raw, train.grid);
      Rng rng(seed ^ kSampleStream);
      const auto samples = sample_predictions(scaled, rng.normals(scaled.size()));

      ConvergencePoint p;
      p.size = size;
      p.seed = seed;
      p.ecpe_one_sided = report.ecpe_one_sided;
      p.ecpe_two_sided = report.ecpe;
      p.mmd2 = mmd2_biased(parts.test.y, samples, train.kernels).value;
      if (!std::isfinite(p.ecpe_one_sided) || !std::isfinite(p.ecpe_two_sided) || !std::isfinite(p.mmd2)) {
        throw Error(Errc::kNonFinite, "convergence study produced a non-finite value");
      }
      study.points.push_back(p);
    }
  }
  return study;
}

std::vector<double> pav_oracle(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size()) throw Error(Errc::kLengthMismatch, "pav_oracle: values and weights differ");
  const std::size_t n = values.size();
  if (n == 0) return {};
  if (n > 20) throw Error(Errc::kConfigError, "pav_oracle is exponential; n must be <= 20");
  std::vector<double> best, fit(n);
  double best_sse = std::numeric_limits<double>::infinity();
  // Bit i of cuts set: a block ends after element i.
  for (std::uint64_t cuts = 0; cuts < (std::uint64_t{1} << (n - 1)); ++cuts) {
    bool monotone = true;
    double previous = -std::numeric_limits<double>::infinity();
    std::size_t start = 0;
    for (std::size_t i = 0; i < n && monotone; ++i) {
      if (i + 1 < n && !(cuts >> i & 1U)) continue;
      long double wsum = 0.0L, vsum = 0.0L;
      for (std::size_t k = start; k <= i; ++k) {
        wsum += weights[k];
        vsum += static_cast<long double>(weights[k]) * values[k];
      }
      const auto mean = static_cast<double>(vsum / wsum);
      if (mean < previous - 1e-12) monotone = false;
      for (std::size_t k = start; k <= i; ++k) fit[k] = mean;
      previous = mean;
      start = i + 1;
    }
    if (!monotone) continue;
    double sse = 0.0;
    for (std::size_t k = 0; k < n; ++k) sse += weights[k] * (fit[k] - values[k]) * (fit[k] - values[k]);
    if (sse < best_sse - 1e-15) {
      best_sse = sse;
      best = fit;
    }
  }
  return best;
}

SelfTestResult run_self_test(std::string_view name, std::uint64_t seed) {
  try {
    if (name == "gradient_check") return gradient_self_test(seed);
    if (name == "mmd_oracle") return mmd_oracle_self_test(seed);
    if (name == "pav_oracle") return pav_self_test(seed);
    if (name == "quantile_round_trip") return quantile_self_test();
  } catch (const std::exception& e) {
    return {std::string(name), false, std::string("threw: ") + e.what()};
  }
  throw Error(Errc::kConfigError, "unknown self-test '" + std::string(name) + "'");
}

std::vector<SelfTestResult> run_self_tests(std::uint64_t seed) {
  std::vector<SelfTestResult> results;
  for (auto name : kSelfTests) results.push_back(run_self_test(name, seed));
  return results;
}

}  // namespace mmdcal
