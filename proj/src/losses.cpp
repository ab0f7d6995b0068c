#include "mmdcal/losses.hpp"

#include <cmath>

#include "mmdcal/errors.hpp"

namespace mmdcal {

Tensor nll_loss(Tape& tape, const Tensor& mu, const Tensor& s, std::span<const double> y) {
  if (mu.numel() != y.size() || s.numel() != y.size() || mu.rank() != 1 || s.rank() != 1) {
    throw Error(Errc::kLengthMismatch, "nll_loss: mu, s and y must be vectors of equal length");
  }
  const auto target = Tensor::vector({y.begin(), y.end()});
  auto precision = tape.exp(tape.scalar_mul(s, -1.0));
  auto fit = tape.mul(precision, tape.square(tape.sub(target, mu)));
  return tape.scalar_mul(tape.mean(tape.add(fit, s)), 0.5);
}

double nll_value(std::span<const double> mu, std::span<const double> s, std::span<const double> y) {
  if (mu.size() != y.size() || s.size() != y.size()) {
    throw Error(Errc::kLengthMismatch, "nll_value: mu, s and y must have equal length");
  }
  if (y.empty()) throw Error(Errc::kEmptySplit, "nll_value on empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - mu[i];
    total += 0.5 * std::exp(-s[i]) * r * r + 0.5 * s[i];
  }
  return total / static_cast<double>(y.size());
}

}  // namespace mmdcal
