#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mmdcal/tape.hpp"
#include "mmdcal/tensor.hpp"

namespace mmdcal {

/// Predictive Gaussian for one input row, in whatever units the model was fed.
struct GaussianPrediction {
  double mu = 0.0;
  double sigma = 1.0;
};

struct HnnOutput {
  Tensor mu;  ///< [n]
  Tensor s;   ///< [n], log variance
};

/// Heteroscedastic MLP: input -> ReLU(hidden) -> ReLU(hidden) -> [mu, log sigma^2].
///
/// The trunk is shared and the final layer is one linear map with two output
/// columns (column 0 = mu, column 1 = s). Inputs are expected in [0,1]-scaled
/// units; the data layer owns scaling.
class HnnModel {
 public:
  static constexpr std::size_t kDefaultHidden = 256;

  /// Glorot-uniform weights, zero biases.
  HnnModel(std::size_t input_dim, std::size_t hidden_dim, std::uint64_t seed);

  /// x is [n, input_dim]. Participates in `tape` when it records.
  HnnOutput forward(Tape& tape, const Tensor& x) const;
  /// Inference only: one prediction per row with sigma = exp(s / 2).
  std::vector<GaussianPrediction> predict_distribution(const Tensor& x) const;

  /// w1, b1, w2, b2, w3, b3. Handles alias the model's storage.
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  std::vector<double> flat_parameters() const;

  /// Deep copy with independent storage.
  HnnModel clone() const;
  void copy_parameters_from(const HnnModel& other);

  /// Adds delta to the log-variance output bias, i.e. scales every sigma by
  /// exp(delta / 2).
  void shift_log_variance(double delta);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t hidden_dim() const noexcept { return hidden_dim_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// JSON checkpoint, see README for the layout.
  void save(const std::filesystem::path& path) const;
  static HnnModel load(const std::filesystem::path& path);

 private:
  std::size_t input_dim_;
  std::size_t hidden_dim_;
  std::uint64_t seed_;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

}  // namespace mmdcal
