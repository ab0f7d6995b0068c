#include "mmdcal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mmdcal/errors.hpp"

namespace mmdcal {

GradCheckResult finite_difference_check(const LossFn& loss, std::vector<Tensor> params, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");

  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    tape.backward(loss(tape));
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    analytic.emplace_back(p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                       : std::vector<double>(p.numel(), 0.0));
    p.zero_grad();
  }

  auto evaluate = [&] {
    Tape tape(Tape::Mode::kInference);
    return loss(tape).item();
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = evaluate();
      values[i] = saved - eps;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > result.max_relative_error || (pi == 0 && i == 0)) {
        result = {err, pi, i, analytic[pi][i], numeric};
      }
    }
  }
  return result;
}

double finite_difference_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& point,
                               double eps) {
  Tensor x = point.clone();
  return finite_difference_check([&](Tape& tape) { return f(tape, x); }, {x}, eps).max_relative_error;
}

}  // namespace mmdcal
