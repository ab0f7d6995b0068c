#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mmdcal {

/// Seeded generator with platform-stable derived distributions.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard library distributions are not (their algorithms are
/// implementation-defined), so uniforms, normals and shuffles are derived here
/// from raw engine output:
///   uniform()  = (bits >> 11) * 2^-53            in [0, 1)
///   normal()   = Box-Muller on two uniforms, both outputs used
///   below(n)   = rejection sampling on 64-bit words
///   shuffle()  = Fisher-Yates from the back using below()
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::vector<double> normals(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mmdcal
