#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmdcal/hnn.hpp"
#include "mmdcal/tape.hpp"

namespace mmdcal {

/// Sum of RBF kernels k(a,b) = sum_i exp(-(a-b)^2 / (2 sigma_i^2)).
/// Bandwidths are in [0,1]-scaled target units.
struct KernelMixture {
  std::vector<double> bandwidths{1.0, 4.0, 8.0, 16.0, 32.0, 64.0};

  /// Throws ConfigError when empty or any bandwidth is not a positive finite number.
  void validate() const;
};

double rbf_kernel(double a, double b, double sigma);
double mixture_kernel(double a, double b, const KernelMixture& mixture);

enum class EstimatorKind { kBiased, kUnbiased };

struct MmdEstimate {
  double value = 0.0;
  EstimatorKind kind = EstimatorKind::kBiased;
  std::size_t n_real = 0;
  std::size_t n_model = 0;
};

/// V-statistic estimate of squared MMD:
///   mean k(y,y') + mean k(yhat,yhat') - 2 mean k(y,yhat), diagonals included.
MmdEstimate mmd2_biased(std::span<const double> real, std::span<const double> model,
                        const KernelMixture& mixture);

/// Same estimate recorded on `tape`; gradients flow to `model` ([m]).
Tensor mmd2_biased(Tape& tape, std::span<const double> real, const Tensor& model, const KernelMixture& mixture);

/// U-statistic (diagonals excluded); needs >= 2 points per side.
MmdEstimate mmd2_unbiased(std::span<const double> real, std::span<const double> model,
                          const KernelMixture& mixture);

/// Same estimate recorded on `tape`; gradients flow to `model` ([m]).
Tensor mmd2_unbiased(Tape& tape, std::span<const double> real, const Tensor& model, const KernelMixture& mixture);

/// Brute-force nested-loop reference for mmd2_biased, with its own kernel
/// evaluation. Used as a test oracle.
double mmd2_oracle(std::span<const double> real, std::span<const double> model, const KernelMixture& mixture);

/// yhat_j = mu_j + exp(s_j / 2) * noise_j on the tape. With reparameterized =
/// false the sample is produced as a constant (no gradient path).
Tensor sample_predictions(Tape& tape, const HnnOutput& out, std::span<const double> noise, bool reparameterized);

/// yhat_j = mu_j + sigma_j * noise_j.
std::vector<double> sample_predictions(std::span<const GaussianPrediction> predictions,
                                       std::span<const double> noise);

/// Permutation test of H0: real and model share a distribution, with biased
/// MMD^2 as the statistic. Returns the fraction of permuted statistics that
/// reach the observed one (within 1e-12 to absorb rounding).
double permutation_two_sample_test(std::span<const double> real, std::span<const double> model,
                                   const KernelMixture& mixture, std::size_t n_permutations,
                                   std::uint64_t seed);

}  // namespace mmdcal
