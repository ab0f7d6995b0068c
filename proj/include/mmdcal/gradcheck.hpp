#pragma once

#include <functional>
#include <vector>

#include "mmdcal/tape.hpp"
#include "mmdcal/tensor.hpp"

namespace mmdcal {

/// Scalar-valued function of the current values of some leaf tensors. It is
/// evaluated repeatedly, each time on a fresh tape.
using LossFn = std::function<Tensor(Tape&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares tape gradients of `loss` with respect to `params` against central
/// differences. Error per coordinate is |analytic - numeric| / max(1, |numeric|).
/// Parameter values are restored on return; their grads are left zeroed.
GradCheckResult finite_difference_check(const LossFn& loss, std::vector<Tensor> params, double eps = 1e-5);

/// Single-tensor form: f maps (tape, point) to a scalar.
double finite_difference_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& point,
                               double eps = 1e-5);

}  // namespace mmdcal
