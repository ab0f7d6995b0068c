#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mmdcal/tensor.hpp"

namespace mmdcal {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;  ///< added to the gradient as weight_decay * theta

  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place. State vectors are
/// allocated on first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& config);

/// Adam over a fixed set of parameter tensors.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  /// Restrict updates of parameter `index` to entries where mask is nonzero.
  /// Masked-out entries are left untouched, weight decay included.
  void set_mask(std::size_t index, std::vector<double> mask);

  void zero_grad();
  /// Applies one update from the gradients currently held by the parameters.
  void step();

  const std::vector<Tensor>& params() const noexcept { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamState> states_;
  std::vector<std::vector<double>> masks_;
  AdamConfig config_;
};

}  // namespace mmdcal
