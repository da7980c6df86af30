#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "uniconv/rng.hpp"
#include "uniconv/tape.hpp"

namespace uniconv {

// Builds the graph under test on the given tape from pre-registered leaves
// and returns the output node.
using GradCheckOp = std::function<NodeId(Tape<double> &, const std::vector<NodeId> &)>;

struct GradCheckOptions {
  double input_lo = -1.0;
  double input_hi = 1.0;
  // Coordinates with |value| below this are resampled (kink avoidance, e.g.
  // GELU near zero under finite differencing).
  double resample_below = 0.0;
  // At most this many coordinates are finite-differenced per input tensor;
  // larger tensors get a deterministic random subset.
  std::size_t max_coords_per_input = 4096;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::size_t checked_coords = 0;
  std::string worst_coord; // "input 2, flat index 17"
};

// Central-difference check, always in 64-bit. Compares the tape gradient of
// <g, op(inputs)> (g a fixed random seed) against (L(x+eps)-L(x-eps))/(2 eps)
// per coordinate. Relative error uses denominator max(|a|,|b|,1e-8); pass iff
// the max over checked coordinates is <= tol.
GradCheckReport grad_check(const GradCheckOp &op, const std::vector<Shape4> &input_shapes,
                           Rng &rng, double eps, double tol,
                           const GradCheckOptions &options = {});

} // namespace uniconv
