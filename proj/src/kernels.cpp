#include "mmdcal/kernels.hpp"

#include <cmath>

#include <Eigen/Core>

#include "mmdcal/errors.hpp"
#include "mmdcal/rng.hpp"

namespace mmdcal {
namespace {

// Kernel sums over one row of pairs, vectorized across the row.
class MixtureRows {
 public:
  explicit MixtureRows(const KernelMixture& mixture) {
    mixture.validate();
    c_.reserve(mixture.bandwidths.size());
    for (double s : mixture.bandwidths) c_.push_back(-0.5 / (s * s));
  }

  double diagonal() const { return static_cast<double>(c_.size()); }

  // Sum over j of k(x, b_j).
  double sum(double x, std::span<const double> b) {
    if (b.empty()) return 0.0;
    load(x, b);
    double total = 0.0;
    for (double c : c_) total += (c * d2_).exp().sum();
    return total;
  }

  // As sum(), and fills slope_j = d/dx k(x, b_j).
  double sum_with_slope(double x, std::span<const double> b, Eigen::ArrayXd& slope) {
    slope.setZero(static_cast<Eigen::Index>(b.size()));
    if (b.empty()) return 0.0;
    load(x, b);
    double total = 0.0;
    for (double c : c_) {
      e_ = (c * d2_).exp();
      total += e_.sum();
      slope += (2.0 * c) * e_;
    }
    slope *= d_;
    return total;
  }

 private:
  void load(double x, std::span<const double> b) {
    const Eigen::Map<const Eigen::ArrayXd> bm(b.data(), static_cast<Eigen::Index>(b.size()));
    d_ = x - bm;
    d2_ = d_.square();
  }

  std::vector<double> c_;
  Eigen::ArrayXd d_, d2_, e_;
};

double cross_sum(std::span<const double> a, std::span<const double> b, MixtureRows& k) {
  double total = 0.0;
  for (double ai : a) total += k.sum(ai, b);
  return total;
}

// sum over all ordered pairs (i, j), using symmetry of the kernel.
double self_sum(std::span<const double> a, MixtureRows& k, bool include_diagonal) {
  double off = 0.0;
  for (std::size_t i = 0; i + 1 < a.size(); ++i) off += k.sum(a[i], a.subspan(i + 1));
  return 2.0 * off + (include_diagonal ? static_cast<double>(a.size()) * k.diagonal() : 0.0);
}

void require_nonempty(std::span<const double> real, std::size_t n_model) {
  if (real.empty() || n_model == 0) throw Error(Errc::kEmptySample, "MMD needs non-empty samples");
}

}  // namespace

void KernelMixture::validate() const {
  if (bandwidths.empty()) throw Error(Errc::kConfigError, "kernel mixture has no bandwidths");
  for (double s : bandwidths) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(Errc::kConfigError, "kernel bandwidth must be positive and finite");
    }
  }
}

double rbf_kernel(double a, double b, double sigma) {
  if (std::isinf(sigma)) return 1.0;
  const double d = a - b;
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

double mixture_kernel(double a, double b, const KernelMixture& mixture) {
  double k = 0.0;
  for (double s : mixture.bandwidths) k += rbf_kernel(a, b, s);
  return k;
}

MmdEstimate mmd2_biased(std::span<const double> real, std::span<const double> model,
                        const KernelMixture& mixture) {
  require_nonempty(real, model.size());
  MixtureRows k(mixture);
  const double n = static_cast<double>(real.size());
  const double m = static_cast<double>(model.size());
  const double value =
      self_sum(real, k, true) / (n * n) + self_sum(model, k, true) / (m * m) - 2.0 * cross_sum(real, model, k) / (n * m);
  return {value, EstimatorKind::kBiased, real.size(), model.size()};
}

namespace {

Tensor mmd2_on_tape(Tape& tape, std::span<const double> real, const Tensor& model, const KernelMixture& mixture,
                    EstimatorKind kind) {
  if (model.rank() != 1) throw Error(Errc::kShapeMismatch, "model samples must be a vector");
  const auto yhat = model.data();
  require_nonempty(real, yhat.size());
  const bool unbiased = kind == EstimatorKind::kUnbiased;
  if (unbiased && (real.size() < 2 || yhat.size() < 2)) {
    throw Error(Errc::kEmptySample, "unbiased MMD needs at least two points per sample");
  }
  MixtureRows k(mixture);
  const double n = static_cast<double>(real.size());
  const double m = static_cast<double>(yhat.size());

  // Value and d/dyhat in one pass over the pairs.
  std::vector<double> self_slope(yhat.size(), 0.0), cross_slope(yhat.size(), 0.0);
  Eigen::ArrayXd slope;
  double model_off = 0.0, cross = 0.0;
  for (std::size_t j = 0; j < yhat.size(); ++j) {
    const auto rest = yhat.subspan(j + 1);
    model_off += k.sum_with_slope(yhat[j], rest, slope);
    self_slope[j] += slope.sum();
    for (std::size_t l = 0; l < rest.size(); ++l) self_slope[j + 1 + l] -= slope[static_cast<Eigen::Index>(l)];
    cross += k.sum_with_slope(yhat[j], real, slope);
    cross_slope[j] = slope.sum();
  }
  const double model_pairs = unbiased ? m * (m - 1.0) : m * m;
  const double real_term =
      unbiased ? self_sum(real, k, false) / (n * (n - 1.0)) : self_sum(real, k, true) / (n * n);
  const double model_term = (2.0 * model_off + (unbiased ? 0.0 : m * k.diagonal())) / model_pairs;
  const double value = real_term + model_term - 2.0 * cross / (n * m);
  std::vector<double> grad(yhat.size());
  for (std::size_t j = 0; j < grad.size(); ++j) {
    grad[j] = 2.0 / model_pairs * self_slope[j] - 2.0 / (n * m) * cross_slope[j];
  }
  return tape.custom(unbiased ? "mmd2_unbiased" : "mmd2_biased", {model}, {}, {value},
                     [grad = std::move(grad)](std::span<const double> g, std::span<std::vector<double>> in) {
                       for (std::size_t j = 0; j < grad.size(); ++j) in[0][j] += g[0] * grad[j];
                     });
}

}  // namespace

Tensor mmd2_biased(Tape& tape, std::span<const double> real, const Tensor& model, const KernelMixture& mixture) {
  return mmd2_on_tape(tape, real, model, mixture, EstimatorKind::kBiased);
}

Tensor mmd2_unbiased(Tape& tape, std::span<const double> real, const Tensor& model, const KernelMixture& mixture) {
  return mmd2_on_tape(tape, real, model, mixture, EstimatorKind::kUnbiased);
}

MmdEstimate mmd2_unbiased(std::span<const double> real, std::span<const double> model,
                          const KernelMixture& mixture) {
  require_nonempty(real, model.size());
  if (real.size() < 2 || model.size() < 2) {
    throw Error(Errc::kEmptySample, "unbiased MMD needs at least two points per sample");
  }
  MixtureRows k(mixture);
  const double n = static_cast<double>(real.size());
  const double m = static_cast<double>(model.size());
  const double value = self_sum(real, k, false) / (n * (n - 1.0)) + self_sum(model, k, false) / (m * (m - 1.0)) -
                       2.0 * cross_sum(real, model, k) / (n * m);
  return {value, EstimatorKind::kUnbiased, real.size(), model.size()};
}

Tensor sample_predictions(Tape& tape, const HnnOutput& out, std::span<const double> noise, bool reparameterized) {
  if (noise.size() != out.mu.numel() || noise.size() != out.s.numel()) {
    throw Error(Errc::kLengthMismatch, "one noise draw per prediction is required");
  }
  auto eps = Tensor::vector({noise.begin(), noise.end()});
  if (!reparameterized) {
    std::vector<double> y(noise.size());
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = out.mu[j] + std::exp(0.5 * out.s[j]) * noise[j];
    return Tensor::vector(std::move(y));
  }
  auto sigma = tape.exp(tape.scalar_mul(out.s, 0.5));
  return tape.add(out.mu, tape.mul(sigma, eps));
}

std::vector<double> sample_predictions(std::span<const GaussianPrediction> predictions,
                                       std::span<const double> noise) {
  if (noise.size() != predictions.size()) {
    throw Error(Errc::kLengthMismatch, "one noise draw per prediction is required");
  }
  std::vector<double> y(noise.size());
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = predictions[j].mu + predictions[j].sigma * noise[j];
  return y;
}

double permutation_two_sample_test(std::span<const double> real, std::span<const double> model,
                                   const KernelMixture& mixture, std::size_t n_permutations,
                                   std::uint64_t seed) {
  require_nonempty(real, model.size());
  if (n_permutations < 100) throw Error(Errc::kConfigError, "permutation test needs >= 100 permutations");
  MixtureRows k(mixture);
  const std::size_t n = real.size();
  const std::size_t total = n + model.size();

  std::vector<double> pooled(real.begin(), real.end());
  pooled.insert(pooled.end(), model.begin(), model.end());
  std::vector<double> gram(total * total);
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t j = 0; j < total; ++j) gram[i * total + j] = k.sum(pooled[i], std::span(&pooled[j], 1));
  }

  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(model.size());
  // Statistic for a labelling where label[i] marks membership in the first sample.
  std::vector<char> label(total);
  auto statistic = [&] {
    double xx = 0.0, yy = 0.0, xy = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      const double* row = &gram[i * total];
      for (std::size_t j = 0; j < total; ++j) {
        if (label[i] && label[j]) xx += row[j];
        else if (!label[i] && !label[j]) yy += row[j];
        else if (label[i]) xy += row[j];
      }
    }
    return xx / (nn * nn) + yy / (mm * mm) - 2.0 * xy / (nn * mm);
  };

  for (std::size_t i = 0; i < total; ++i) label[i] = i < n;
  const double observed = statistic();

  Rng rng(seed);
  std::vector<std::size_t> order(total);
  std::size_t at_least = 0;
  for (std::size_t p = 0; p < n_permutations; ++p) {
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < total; ++i) label[order[i]] = i < n;
    if (statistic() >= observed - 1e-12) ++at_least;
  }
  return static_cast<double>(at_least) / static_cast<double>(n_permutations);
}

}  // namespace mmdcal
