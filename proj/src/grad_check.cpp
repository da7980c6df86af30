#include "uniconv/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace uniconv {

namespace {

double loss_at(const GradCheckOp &op, const std::vector<Tensor4<double>> &inputs,
               const Tensor4<double> &seed) {
  Tape<double> tape;
  std::vector<NodeId> leaves;
  leaves.reserve(inputs.size());
  for (const auto &t : inputs)
    leaves.push_back(tape.leaf(t));
  NodeId y = op(tape, leaves);
  const Tensor4<double> &yv = tape.value(y);
  if (!(yv.shape() == seed.shape()))
    throw ShapeError("grad_check: op output shape changed between evaluations");
  double loss = 0.0;
  for (std::size_t i = 0; i < yv.numel(); ++i)
    loss += yv.data()[i] * seed.data()[i];
  return loss;
}

std::vector<std::size_t> pick_coords(std::size_t numel, std::size_t budget, Rng &rng) {
  std::vector<std::size_t> coords;
  if (numel <= budget) {
    coords.resize(numel);
    for (std::size_t i = 0; i < numel; ++i)
      coords[i] = i;
    return coords;
  }
  std::unordered_set<std::size_t> seen;
  while (seen.size() < budget) {
    std::size_t idx = static_cast<std::size_t>(rng.uniform() * static_cast<double>(numel));
    if (idx >= numel)
      idx = numel - 1;
    seen.insert(idx);
  }
  coords.assign(seen.begin(), seen.end());
  std::sort(coords.begin(), coords.end());
  return coords;
}

} // namespace

GradCheckReport grad_check(const GradCheckOp &op, const std::vector<Shape4> &input_shapes,
                           Rng &rng, double eps, double tol, const GradCheckOptions &options) {
  std::vector<Tensor4<double>> inputs;
  inputs.reserve(input_shapes.size());
  for (const Shape4 &s : input_shapes) {
    Tensor4<double> t(s);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      double v = rng.uniform(options.input_lo, options.input_hi);
      while (std::abs(v) < options.resample_below)
        v = rng.uniform(options.input_lo, options.input_hi);
      t.data()[i] = v;
    }
    inputs.push_back(std::move(t));
  }

  // Analytic gradients.
  Tape<double> tape;
  std::vector<NodeId> leaves;
  for (const auto &t : inputs)
    leaves.push_back(tape.leaf(t));
  NodeId y = op(tape, leaves);
  Tensor4<double> seed(tape.value(y).shape());
  for (std::size_t i = 0; i < seed.numel(); ++i)
    seed.data()[i] = rng.uniform(0.5, 1.5);
  Gradients<double> grads = tape.backward(y, seed);

  GradCheckReport report;
  report.pass = true;
  for (std::size_t in = 0; in < inputs.size(); ++in) {
    const Tensor4<double> &analytic = grads.at(leaves[in]);
    const std::vector<std::size_t> coords =
        pick_coords(inputs[in].numel(), options.max_coords_per_input, rng);
    for (std::size_t idx : coords) {
      const double keep = inputs[in].data()[idx];
      inputs[in].data()[idx] = keep + eps;
      const double lp = loss_at(op, inputs, seed);
      inputs[in].data()[idx] = keep - eps;
      const double lm = loss_at(op, inputs, seed);
      inputs[in].data()[idx] = keep;

      const double fd = (lp - lm) / (2.0 * eps);
      const double a = analytic.data()[idx];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-8});
      ++report.checked_coords;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        std::ostringstream os;
        os << "input " << in << ", flat index " << idx;
        report.worst_coord = os.str();
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

} // namespace uniconv
