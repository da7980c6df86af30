#pragma once

#include <cmath>
#include <cstdint>

#include "uniconv/tensor.hpp"

namespace uniconv {

// Deterministic stream generator. The integer stream is SplitMix64
// (Steele/Lea/Flood constants), so the same seed gives the same stream on any
// platform. Floating-point draws are derived from the integer stream with
// fixed formulas.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (cosine branch). One draw consumes two
  // uniforms; the sine counterpart is discarded to keep the stream layout
  // independent of call history.
  double normal() {
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Normal(0, std) truncated at +/- 2*std by rejection.
  double trunc_normal(double std_dev) {
    if (std_dev == 0.0)
      return 0.0;
    for (;;) {
      double z = normal();
      if (z >= -2.0 && z <= 2.0)
        return z * std_dev;
    }
  }

  // Independent child stream, e.g. one per ERF sample. Mixes the stream index
  // into the current state without advancing this generator.
  Rng child(std::uint64_t stream) const {
    return Rng(state_ ^ (0xD1B54A32D192ED03ull * (stream + 1)));
  }

private:
  std::uint64_t state_;
};

// Tensor filled with iid truncated-normal draws (mean 0, given std, cut at
// +/- 2*std), in flat index order.
template <typename T> Tensor4<T> tensor_random_normal(Shape4 shape, double std_dev, Rng &rng) {
  if (std_dev < 0.0)
    throw Error("tensor_random_normal: std must be >= 0");
  Tensor4<T> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(rng.trunc_normal(std_dev));
  return t;
}

template <typename T> Tensor4<T> tensor_random_uniform(Shape4 shape, double lo, double hi, Rng &rng) {
  Tensor4<T> t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i)
    t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

} // namespace uniconv
