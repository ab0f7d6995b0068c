// Reference MMD^2 by explicit double loops. Deliberately shares nothing with
// kernels.cpp beyond the KernelMixture struct.

#include <cmath>

#include "mmdcal/errors.hpp"
#include "mmdcal/kernels.hpp"

namespace mmdcal {

double mmd2_oracle(std::span<const double> real, std::span<const double> model, const KernelMixture& mixture) {
  if (real.empty() || model.empty()) throw Error(Errc::kEmptySample, "MMD needs non-empty samples");
  auto k = [&](double a, double b) {
    double total = 0.0;
    for (double bw : mixture.bandwidths) total += std::exp(-std::pow(a - b, 2) / (2.0 * std::pow(bw, 2)));
    return total;
  };
  long double xx = 0.0L, yy = 0.0L, xy = 0.0L;
  for (double a : real)
    for (double b : real) xx += k(a, b);
  for (double a : model)
    for (double b : model) yy += k(a, b);
  for (double a : real)
    for (double b : model) xy += k(a, b);
  const long double n = real.size();
  const long double m = model.size();
  return static_cast<double>(xx / (n * n) + yy / (m * m) - 2.0L * xy / (n * m));
}

}  // namespace mmdcal
