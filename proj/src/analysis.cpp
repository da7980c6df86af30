#include "uniconv/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace uniconv {

CostBreakdown::Entry &CostBreakdown::bucket(Category c) {
  switch (c) {
  case Category::kRfa:
    return rfa;
  case Category::kSmallConv:
    return small_conv;
  case Category::kFfn:
    return ffn;
  case Category::kStemDownsample:
    return stem_downsample;
  case Category::kHead:
    return head;
  }
  return rfa;
}

const CostBreakdown::Entry &CostBreakdown::bucket(Category c) const {
  return const_cast<CostBreakdown *>(this)->bucket(c);
}

CostBreakdown::Entry CostBreakdown::total() const {
  Entry t;
  for (const Entry *e : {&rfa, &small_conv, &ffn, &stem_downsample, &head}) {
    t.params += e->params;
    t.macs += e->macs;
    t.elementwise += e->elementwise;
  }
  return t;
}

CostBreakdown CostBreakdown::merge(const CostBreakdown &params_side, const CostBreakdown &macs_side) {
  CostBreakdown out = macs_side;
  for (Category c : {Category::kRfa, Category::kSmallConv, Category::kFfn,
                     Category::kStemDownsample, Category::kHead})
    out.bucket(c).params = params_side.bucket(c).params;
  return out;
}

template <typename T> CostBreakdown count_params(const Model<T> &m) {
  CostBreakdown out;
  for (const auto &entry : m.params.items())
    out.bucket(entry.category).params += static_cast<std::int64_t>(entry.value.numel());
  return out;
}

namespace {

// Walks the model structure mirroring the forward pass, with spatial extents
// tracked analytically. Uses the stored weight shapes, not the config, so a
// builder bug shows up as a count mismatch.
template <typename T> class FlopWalker {
public:
  FlopWalker(const Model<T> &m, CostBreakdown &out) : m_(m), out_(out) {}

  void conv(const ConvRef &ref, Category cat, int &h, int &w) {
    const Shape4 ws = m_.params.items()[static_cast<std::size_t>(ref.weight)].value.shape();
    const int h_out = (h + 2 * ref.pad - ws.h) / ref.stride + 1;
    const int w_out = (w + 2 * ref.pad - ws.w) / ref.stride + 1;
    out_.bucket(cat).macs += static_cast<std::int64_t>(h_out) * w_out * ws.b * ws.c * ws.h * ws.w;
    h = h_out;
    w = w_out;
  }

  void elementwise(Category cat, int channels, int h, int w, int times = 1) {
    out_.bucket(cat).elementwise += static_cast<std::int64_t>(channels) * h * w * times;
  }

  void linear(int c_in, int c_out, Category cat) {
    out_.bucket(cat).macs += static_cast<std::int64_t>(c_in) * c_out;
  }

private:
  const Model<T> &m_;
  CostBreakdown &out_;
};

} // namespace

template <typename T> CostBreakdown count_flops(const Model<T> &m, int input_h, int input_w) {
  if (input_h % 32 != 0 || input_w % 32 != 0)
    throw ConfigError("count_flops: input extents must be divisible by 32");

  CostBreakdown out;
  FlopWalker<T> walk(m, out);
  int h = input_h, w = input_w;

  // Stem: conv -> LN -> GELU -> conv -> LN.
  const int c0 = m.config.stage_channels[0];
  walk.conv(m.refs.stem.conv1, Category::kStemDownsample, h, w);
  walk.elementwise(Category::kStemDownsample, c0 / 2, h, w, 2); // LN + GELU
  walk.conv(m.refs.stem.conv2, Category::kStemDownsample, h, w);
  walk.elementwise(Category::kStemDownsample, c0, h, w);

  for (int stage = 0; stage < 4; ++stage) {
    const int c = m.config.stage_channels[static_cast<std::size_t>(stage)];
    const RfaConfig rfa_cfg = m.config.stage_rfa(stage);
    const int head_c = rfa_cfg.head_channels();
    for (const BlockRefs &block : m.refs.stages[static_cast<std::size_t>(stage)]) {
      // RFA residual: LN, head projections, N layer operators, scale, add.
      walk.elementwise(Category::kRfa, c, h, w); // ln1
      for (const ConvRef &proj : block.rfa.head_projections) {
        int hh = h, ww = w;
        walk.conv(proj, Category::kRfa, hh, ww);
      }
      for (std::size_t n = 1; n <= block.rfa.layers.size(); ++n) {
        const LayerOperatorRefs &lo = block.rfa.layers[n - 1];
        int hh = h, ww = w;
        walk.conv(lo.proj_a1, Category::kRfa, hh, ww);
        walk.conv(lo.proj_a2, Category::kRfa, hh, ww);
        walk.conv(lo.proj_h, Category::kRfa, hh, ww);
        walk.conv(lo.dw_large_amp, Category::kRfa, hh, ww);
        walk.conv(lo.dw_large_dis, Category::kRfa, hh, ww);
        walk.conv(lo.dw_small_dis, Category::kRfa, hh, ww);
        walk.conv(lo.fuse_dis, Category::kRfa, hh, ww);
        const int amp_c = static_cast<int>(n) * head_c;
        walk.elementwise(Category::kRfa, amp_c, h, w, 2);  // gelu + mul
        walk.elementwise(Category::kRfa, head_c, h, w);    // dis sum (sum topology)
      }
      walk.elementwise(Category::kRfa, c, h, w, 2); // scale + residual add

      // Depthwise 3x3 residual.
      walk.elementwise(Category::kSmallConv, c, h, w); // ln2
      {
        int hh = h, ww = w;
        walk.conv(block.dw_small, Category::kSmallConv, hh, ww);
      }
      walk.elementwise(Category::kSmallConv, c, h, w, 2); // scale + add

      // FFN residual.
      const int hidden = m.config.ffn_hidden(c);
      walk.elementwise(Category::kFfn, c, h, w); // ln3
      {
        int hh = h, ww = w;
        walk.conv(block.ffn_in, Category::kFfn, hh, ww);
        walk.elementwise(Category::kFfn, hidden, hh, ww); // gelu
        walk.conv(block.ffn_out, Category::kFfn, hh, ww);
      }
      walk.elementwise(Category::kFfn, c, h, w, 2); // scale + add
    }
    if (stage < 3) {
      walk.elementwise(Category::kStemDownsample, c, h, w); // downsample LN
      walk.conv(m.refs.downsamples[static_cast<std::size_t>(stage)].conv,
                Category::kStemDownsample, h, w);
    }
  }

  const int c3 = m.config.stage_channels[3];
  walk.elementwise(Category::kHead, c3, h, w); // pool reads every element
  walk.elementwise(Category::kHead, c3, 1, 1); // head LN
  walk.linear(c3, m.config.num_classes, Category::kHead);
  return out;
}

// ---------------------------------------------------------------------------
// Receptive-field support
// ---------------------------------------------------------------------------

std::vector<SupportBox> empirical_rf_support(const ForwardFn &f, Shape4 input_shape,
                                             const std::vector<SupportGroup> &groups, Rng &rng) {
  std::vector<SupportBox> boxes;
  const Tensor4<double> x_value = tensor_random_uniform<double>(input_shape, 0.1, 0.3, rng);

  for (const SupportGroup &group : groups) {
    Tape<double> tape;
    NodeId x = tape.leaf(x_value);
    NodeId y = f(tape, x);
    const Shape4 ys = tape.value(y).shape();
    if (group.c_begin < 0 || group.c_end > ys.c || group.c_begin >= group.c_end)
      throw ShapeError("empirical_rf_support: channel group out of range for output " +
                       ys.to_string());

    Tensor4<double> seed(ys);
    const int ch = ys.h / 2, cw = ys.w / 2;
    for (int c = group.c_begin; c < group.c_end; ++c)
      seed.at(0, c, ch, cw) = 1.0;

    const Gradients<double> grads = tape.backward(y, seed);
    const Tensor4<double> &g = grads.at(x);
    SupportBox box;
    for (int h = 0; h < input_shape.h; ++h)
      for (int w = 0; w < input_shape.w; ++w) {
        double mass = 0.0;
        for (int b = 0; b < input_shape.b; ++b)
          for (int c = 0; c < input_shape.c; ++c)
            mass += std::abs(g.at(b, c, h, w));
        if (mass != 0.0) {
          if (box.empty) {
            box = SupportBox{h, h, w, w, false, false};
          } else {
            box.h_min = std::min(box.h_min, h);
            box.h_max = std::max(box.h_max, h);
            box.w_min = std::min(box.w_min, w);
            box.w_max = std::max(box.w_max, w);
          }
        }
      }
    box.touches_border = !box.empty && (box.h_min == 0 || box.w_min == 0 ||
                                        box.h_max == input_shape.h - 1 ||
                                        box.w_max == input_shape.w - 1);
    boxes.push_back(box);
  }
  return boxes;
}

// ---------------------------------------------------------------------------
// Effective receptive field
// ---------------------------------------------------------------------------

std::pair<int, int> ErfMap::argmax() const {
  int best_r = 0, best_c = 0;
  double best = grid.empty() ? 0.0 : grid[0];
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (at(r, c) > best) {
        best = at(r, c);
        best_r = r;
        best_c = c;
      }
  return {best_r, best_c};
}

double ErfMap::max() const {
  double best = 0.0;
  for (double v : grid)
    best = std::max(best, v);
  return best;
}

template <typename T>
ErfMap compute_erf(const std::function<NodeId(Tape<T> &, NodeId)> &features, Shape4 input_shape,
                   int n_samples, const ErfInputFn<T> &input_fn, std::uint64_t seed,
                   std::pair<int, int> center, int threads, const ErfProgressFn &progress) {
  if (n_samples < 1)
    throw Error("compute_erf: need at least one sample");

  const Rng root(seed);
  std::vector<std::vector<double>> per_sample(static_cast<std::size_t>(n_samples));
  std::atomic<int> done{0};

  auto run_sample = [&](int i) {
    Rng sample_rng = root.child(static_cast<std::uint64_t>(i));
    Tensor4<T> input = input_fn(i, sample_rng);
    if (!(input.shape() == input_shape))
      throw ShapeError("compute_erf: input sample shape " + input.shape().to_string() +
                       " does not match " + input_shape.to_string());
    Tape<T> tape;
    NodeId x = tape.leaf(std::move(input));
    NodeId y = features(tape, x);
    const Shape4 ys = tape.value(y).shape();

    Tensor4<T> grad_seed(ys);
    const int ch = ys.h / 2, cw = ys.w / 2;
    for (int b = 0; b < ys.b; ++b)
      for (int c = 0; c < ys.c; ++c)
        grad_seed.at(b, c, ch, cw) = T(1);

    const Gradients<T> grads = tape.backward(y, grad_seed);
    const Tensor4<T> &g = grads.at(x);
    std::vector<double> grid(static_cast<std::size_t>(input_shape.h) * input_shape.w, 0.0);
    for (int b = 0; b < input_shape.b; ++b)
      for (int c = 0; c < input_shape.c; ++c)
        for (int h = 0; h < input_shape.h; ++h)
          for (int w = 0; w < input_shape.w; ++w)
            grid[static_cast<std::size_t>(h) * input_shape.w + w] +=
                std::abs(static_cast<double>(g.at(b, c, h, w)));
    per_sample[static_cast<std::size_t>(i)] = std::move(grid);
    if (progress)
      progress(done.fetch_add(1) + 1, n_samples);
  };

  threads = std::max(1, threads);
  if (threads == 1) {
    for (int i = 0; i < n_samples; ++i)
      run_sample(i);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int i = next.fetch_add(1); i < n_samples; i = next.fetch_add(1))
          run_sample(i);
      });
    for (auto &th : pool)
      th.join();
  }

  ErfMap map;
  map.h = input_shape.h;
  map.w = input_shape.w;
  map.grid.assign(static_cast<std::size_t>(map.h) * map.w, 0.0);
  map.sample_count = n_samples;
  map.center_h = center.first;
  map.center_w = center.second;
  // Fixed-order reduction: sample 0, 1, 2, ... regardless of worker count.
  for (int i = 0; i < n_samples; ++i)
    for (std::size_t j = 0; j < map.grid.size(); ++j)
      map.grid[j] += per_sample[static_cast<std::size_t>(i)][j];
  const double inv = 1.0 / static_cast<double>(n_samples);
  for (double &v : map.grid)
    v *= inv;
  return map;
}

template <typename T>
ErfMap compute_erf_model(const Model<T> &m, int n_samples, InputKind kind, std::uint64_t seed,
                         int input_h, int input_w, const std::vector<Tensor4<T>> &images,
                         int threads, const ErfProgressFn &progress) {
  const Shape4 input_shape{1, 3, input_h, input_w};
  if (kind == InputKind::kImageDir) {
    if (images.empty())
      throw IoError("compute_erf: image input requested but no images supplied");
    n_samples = std::min<int>(n_samples, static_cast<int>(images.size()));
  }

  ErfInputFn<T> input_fn = [&](int i, Rng &rng) -> Tensor4<T> {
    if (kind == InputKind::kImageDir)
      return images[static_cast<std::size_t>(i)];
    return tensor_random_uniform<T>(input_shape, 0.0, 1.0, rng);
  };

  auto features = [&m](Tape<T> &tape, NodeId x) {
    Bound<T> b = bind(tape, m.params);
    return model_features_forward(b, m, x);
  };

  // Stage-4 extents are input/32; each 3x3 stride-2 layer maps its center tap
  // p -> 2p on the layer below, so the seed pixel projects to 32 * (H4/2).
  const std::pair<int, int> center{32 * (input_h / 32 / 2), 32 * (input_w / 32 / 2)};
  ErfMap map =
      compute_erf<T>(features, input_shape, n_samples, input_fn, seed, center, threads, progress);
  map.input_kind = kind;
  return map;
}

// ---------------------------------------------------------------------------
// AGD metrics
// ---------------------------------------------------------------------------

AgdMetrics agd_metrics(const ErfMap &e) {
  double total_mass = 0.0;
  for (double v : e.grid)
    total_mass += v;
  if (!(total_mass > 0.0))
    throw Error("agd_metrics: degenerate input (all-zero map)");

  AgdMetrics m;

  // Radial profile: 1-pixel annuli (nearest-integer radius) around center.
  const int max_r = static_cast<int>(std::ceil(std::hypot(std::max(e.center_h, e.h - 1 - e.center_h),
                                                          std::max(e.center_w, e.w - 1 - e.center_w))));
  std::vector<double> sum(static_cast<std::size_t>(max_r) + 1, 0.0);
  std::vector<std::int64_t> count(static_cast<std::size_t>(max_r) + 1, 0);
  for (int r = 0; r < e.h; ++r)
    for (int c = 0; c < e.w; ++c) {
      const double dist = std::hypot(static_cast<double>(r - e.center_h),
                                     static_cast<double>(c - e.center_w));
      const int bin = static_cast<int>(std::lround(dist));
      if (bin <= max_r) {
        sum[static_cast<std::size_t>(bin)] += e.at(r, c);
        ++count[static_cast<std::size_t>(bin)];
      }
    }
  for (int r = 0; r <= max_r; ++r)
    if (count[static_cast<std::size_t>(r)] > 0)
      m.radial_profile.emplace_back(static_cast<double>(r),
                                    sum[static_cast<std::size_t>(r)] /
                                        static_cast<double>(count[static_cast<std::size_t>(r)]));

  double peak = 0.0;
  for (const auto &[r, v] : m.radial_profile)
    peak = std::max(peak, v);

  for (std::size_t i = 0; i + 1 < m.radial_profile.size(); ++i) {
    const double jump = m.radial_profile[i + 1].second - m.radial_profile[i].second;
    if (jump > 0.0)
      m.monotonicity_violation = std::max(m.monotonicity_violation, jump / peak);
  }

  // Least squares of ln(profile) against a - r^2 / (2 sigma^2), over radii
  // with profile above 1e-3 * peak.
  std::vector<double> us, ys;
  for (const auto &[r, v] : m.radial_profile)
    if (v > 1e-3 * peak) {
      us.push_back(r * r);
      ys.push_back(std::log(v));
    }
  if (us.size() >= 2) {
    double mu = 0, my = 0;
    for (std::size_t i = 0; i < us.size(); ++i) {
      mu += us[i];
      my += ys[i];
    }
    mu /= static_cast<double>(us.size());
    my /= static_cast<double>(us.size());
    double suu = 0, suy = 0, syy = 0;
    for (std::size_t i = 0; i < us.size(); ++i) {
      suu += (us[i] - mu) * (us[i] - mu);
      suy += (us[i] - mu) * (ys[i] - my);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    if (suu > 0.0 && syy > 1e-12) {
      const double slope = suy / suu;
      if (slope < 0.0) {
        m.gauss_sigma = std::sqrt(-1.0 / (2.0 * slope));
        double ss_res = 0.0;
        const double intercept = my - slope * mu;
        for (std::size_t i = 0; i < us.size(); ++i) {
          const double pred = intercept + slope * us[i];
          ss_res += (ys[i] - pred) * (ys[i] - pred);
        }
        m.gauss_r2 = 1.0 - ss_res / syy;
      }
    }
  }

  // Smallest centered square (odd side, clipped at the borders) holding each
  // mass fraction; report its area as a fraction of the full grid.
  for (double threshold : {0.2, 0.5, 0.9}) {
    const double want = threshold * total_mass;
    double ratio = 1.0;
    for (int half = 0;; ++half) {
      const int r0 = std::max(0, e.center_h - half), r1 = std::min(e.h - 1, e.center_h + half);
      const int c0 = std::max(0, e.center_w - half), c1 = std::min(e.w - 1, e.center_w + half);
      double mass = 0.0;
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
          mass += e.at(r, c);
      const bool covers_all = r0 == 0 && c0 == 0 && r1 == e.h - 1 && c1 == e.w - 1;
      if (mass >= want || covers_all) {
        ratio = static_cast<double>((r1 - r0 + 1)) * (c1 - c0 + 1) /
                (static_cast<double>(e.h) * e.w);
        break;
      }
    }
    m.area_ratio[threshold] = ratio;
  }
  return m;
}

Image8 render_heatmap(const ErfMap &e, double gamma) {
  if (!(gamma > 0.0))
    throw Error("render_heatmap: gamma must be > 0");
  const double max_v = e.max();
  if (!(max_v > 0.0))
    throw Error("render_heatmap: degenerate input (all-zero map)");

  Image8 img;
  img.h = e.h;
  img.w = e.w;
  img.pixels.resize(e.grid.size());
  for (std::size_t i = 0; i < e.grid.size(); ++i) {
    const double v = std::pow(e.grid[i] / max_v, gamma);
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return img;
}

#define UNICONV_INSTANTIATE_ANALYSIS(T)                                                            \
  template CostBreakdown count_params<T>(const Model<T> &);                                       \
  template CostBreakdown count_flops<T>(const Model<T> &, int, int);                              \
  template ErfMap compute_erf<T>(const std::function<NodeId(Tape<T> &, NodeId)> &, Shape4, int,    \
                                 const ErfInputFn<T> &, std::uint64_t, std::pair<int, int>, int,   \
                                 const ErfProgressFn &);                                           \
  template ErfMap compute_erf_model<T>(const Model<T> &, int, InputKind, std::uint64_t, int, int,  \
                                       const std::vector<Tensor4<T>> &, int,                       \
                                       const ErfProgressFn &);

UNICONV_INSTANTIATE_ANALYSIS(float)
UNICONV_INSTANTIATE_ANALYSIS(double)

#undef UNICONV_INSTANTIATE_ANALYSIS

} // namespace uniconv
