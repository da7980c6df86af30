#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "uniconv/model.hpp"

namespace uniconv {

// Per-category parameter / MAC / elementwise-op accounting. "macs" counts one
// fused multiply-add per tap (the convnet FLOPs convention); elementwise ops
// (LN, GELU, add, mul, scale, pool) are counted once per input element and
// reported separately.
struct CostBreakdown {
  struct Entry {
    std::int64_t params = 0;
    std::int64_t macs = 0;
    std::int64_t elementwise = 0;
  };
  Entry rfa, small_conv, ffn, stem_downsample, head;

  Entry &bucket(Category c);
  const Entry &bucket(Category c) const;
  Entry total() const;
  static CostBreakdown merge(const CostBreakdown &params_side, const CostBreakdown &macs_side);
};

// Exact parameter count by enumerating every stored weight/bias/affine
// element, bucketed by category.
template <typename T> CostBreakdown count_params(const Model<T> &m);

// MAC count from the model structure for one image (B=1) of the given input
// extents: conv = Hout*Wout*Cout*(Cin/groups)*K^2, linear = Cin*Cout.
template <typename T> CostBreakdown count_flops(const Model<T> &m, int input_h, int input_w);

// ---------------------------------------------------------------------------
// Receptive-field support
// ---------------------------------------------------------------------------

struct SupportBox {
  int h_min = 0, h_max = -1, w_min = 0, w_max = -1;
  bool touches_border = false;
  bool empty = true;
  int height() const { return empty ? 0 : h_max - h_min + 1; }
  int width() const { return empty ? 0 : w_max - w_min + 1; }
};

struct SupportGroup {
  std::string name;
  int c_begin = 0, c_end = 0; // output channel range [begin, end)
};

// Differentiable map under test; builds the graph and returns the output node.
using ForwardFn = std::function<NodeId(Tape<double> &, NodeId)>;

// Backward from the center output pixel (summed over each group's channels)
// with random input in [0.1, 0.3]; returns per-group bounding boxes of the
// exactly-nonzero input gradient. 64-bit only.
std::vector<SupportBox> empirical_rf_support(const ForwardFn &f, Shape4 input_shape,
                                             const std::vector<SupportGroup> &groups, Rng &rng);

// ---------------------------------------------------------------------------
// Effective receptive field
// ---------------------------------------------------------------------------

enum class InputKind { kRandomUniform, kImageDir };

struct ErfMap {
  int h = 0, w = 0;
  std::vector<double> grid; // h*w, row-major, averaged |input gradient|
  int sample_count = 0;
  InputKind input_kind = InputKind::kRandomUniform;
  int center_h = 0, center_w = 0; // input-grid projection of the seed pixel

  double at(int r, int c) const { return grid[static_cast<std::size_t>(r) * w + c]; }
  double &at(int r, int c) { return grid[static_cast<std::size_t>(r) * w + c]; }
  std::pair<int, int> argmax() const;
  double max() const;
};

// Produces one input sample (deterministic per index).
template <typename T> using ErfInputFn = std::function<Tensor4<T>(int sample_index, Rng &rng)>;

// Called after each sample completes with (done, total).
using ErfProgressFn = std::function<void(int, int)>;

// Generic engine: for each sample, forward through `features`, seed backward
// with 1 at the center output pixel on every channel, accumulate |input
// gradient| summed over input channels. Samples may run on `threads`
// workers; the reduction is always in sample order. `center` is the input
// position the output seed projects to.
template <typename T>
ErfMap compute_erf(const std::function<NodeId(Tape<T> &, NodeId)> &features, Shape4 input_shape,
                   int n_samples, const ErfInputFn<T> &input_fn, std::uint64_t seed,
                   std::pair<int, int> center, int threads = 1,
                   const ErfProgressFn &progress = nullptr);

// ERF of a model's stage-4 feature map (pre-pooling) against uniform [0,1]
// random inputs or a fixed list of (1,3,H,W) image tensors.
template <typename T>
ErfMap compute_erf_model(const Model<T> &m, int n_samples, InputKind kind, std::uint64_t seed,
                         int input_h, int input_w,
                         const std::vector<Tensor4<T>> &images = {}, int threads = 1,
                         const ErfProgressFn &progress = nullptr);

// ---------------------------------------------------------------------------
// AGD (Gaussian-ness) metrics
// ---------------------------------------------------------------------------

struct AgdMetrics {
  std::vector<std::pair<double, double>> radial_profile; // (radius, mean value)
  double monotonicity_violation = 0.0; // max positive jump / peak
  double gauss_sigma = 0.0;
  double gauss_r2 = 0.0;
  std::map<double, double> area_ratio; // mass threshold -> area fraction
};

// Radial profile by 1-pixel annuli around the map center, log-space Gaussian
// least squares over radii with profile > 1e-3 * peak, and high-contribution
// area ratios at thresholds {0.2, 0.5, 0.9}. Throws on an all-zero map.
AgdMetrics agd_metrics(const ErfMap &e);

struct Image8 {
  int h = 0, w = 0;
  std::vector<std::uint8_t> pixels;
};

// v -> round(255 * (v / max)^gamma). Throws on gamma <= 0 or an all-zero map.
Image8 render_heatmap(const ErfMap &e, double gamma);

} // namespace uniconv
