#pragma once

#include <span>

#include "mmdcal/tape.hpp"

namespace mmdcal {

/// Heteroscedastic Gaussian NLL in log-variance form, mean over the batch:
///   mean_i [ 0.5 * exp(-s_i) * (y_i - mu_i)^2 + 0.5 * s_i ]
/// The additive log(2 pi) / 2 constant is dropped.
Tensor nll_loss(Tape& tape, const Tensor& mu, const Tensor& s, std::span<const double> y);

/// Same value without a tape.
double nll_value(std::span<const double> mu, std::span<const double> s, std::span<const double> y);

}  // namespace mmdcal
