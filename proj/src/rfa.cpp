#include "uniconv/rfa.hpp"

#include <algorithm>
#include <sstream>

namespace uniconv {

const char *to_string(Category c) {
  switch (c) {
  case Category::kRfa:
    return "rfa";
  case Category::kSmallConv:
    return "small_conv";
  case Category::kFfn:
    return "ffn";
  case Category::kStemDownsample:
    return "stem_downsample";
  case Category::kHead:
    return "head";
  }
  return "?";
}

int kernel_schedule(int n) {
  if (n < 1)
    throw ConfigError("kernel_schedule: layer index must be >= 1");
  return 2 * n + 5;
}

std::vector<int> RfaConfig::formula_kernels(int layer_count) {
  std::vector<int> ks;
  for (int n = 1; n <= layer_count; ++n)
    ks.push_back(kernel_schedule(n));
  return ks;
}

RfaConfig RfaConfig::with_channels(int c) const {
  RfaConfig out = *this;
  out.channels = c;
  return out;
}

void RfaConfig::validate() const {
  if (layer_count < 1)
    throw ConfigError("rfa.layer_count must be >= 1");
  if (channels < 1)
    throw ConfigError("rfa.channels must be >= 1");
  if (channels % (layer_count + 1) != 0) {
    std::ostringstream os;
    os << "rfa.channels (" << channels << ") must be divisible by layer_count+1 ("
       << layer_count + 1 << ")";
    throw ConfigError(os.str());
  }
  if (static_cast<int>(large_kernels.size()) != layer_count)
    throw ConfigError("rfa.large_kernels must list exactly layer_count kernels");
  for (int k : large_kernels)
    if (k < 3 || k % 2 == 0)
      throw ConfigError("rfa.large_kernels entries must be odd and >= 3");
  if (small_kernel < 3 || small_kernel % 2 == 0)
    throw ConfigError("rfa.small_kernel must be odd and >= 3");
  if (small_kernel > *std::min_element(large_kernels.begin(), large_kernels.end()))
    throw ConfigError("rfa.small_kernel must not exceed the smallest large kernel");
}

namespace {

template <typename T>
Tensor4<T> init_tensor(Shape4 shape, Rng &rng, const InitSpec &init, bool is_bias) {
  if (is_bias)
    return Tensor4<T>(shape); // zeros
  if (init.kind == InitSpec::Kind::kUniform)
    return tensor_random_uniform<T>(shape, init.lo, init.hi, rng);
  return tensor_random_normal<T>(shape, init.std_dev, rng);
}

template <typename T>
ConvRef add_conv(ParamStore<T> &store, const std::string &name, Category cat, int c_in, int c_out,
                 int kernel, int stride, int pad, int groups, Rng &rng, const InitSpec &init) {
  ConvRef ref;
  ref.stride = stride;
  ref.pad = pad;
  ref.groups = groups;
  ref.weight = store.add(name + ".weight", cat,
                         init_tensor<T>(Shape4{c_out, c_in / groups, kernel, kernel}, rng, init,
                                        /*is_bias=*/false));
  ref.bias = store.add(name + ".bias", cat,
                       init_tensor<T>(Shape4{1, c_out, 1, 1}, rng, init, /*is_bias=*/true));
  return ref;
}

template <typename T>
ConvRef add_pointwise(ParamStore<T> &store, const std::string &name, Category cat, int c_in,
                      int c_out, Rng &rng, const InitSpec &init) {
  return add_conv(store, name, cat, c_in, c_out, 1, 1, 0, 1, rng, init);
}

template <typename T>
ConvRef add_depthwise(ParamStore<T> &store, const std::string &name, Category cat, int channels,
                      int kernel, Rng &rng, const InitSpec &init) {
  return add_conv(store, name, cat, channels, channels, kernel, 1, (kernel - 1) / 2, channels, rng,
                  init);
}

} // namespace

template <typename T>
RfaRefs build_rfa(ParamStore<T> &store, const std::string &prefix, const RfaConfig &cfg, Rng &rng,
                  Category category, const InitSpec &init) {
  cfg.validate();
  const int c = cfg.head_channels();
  RfaRefs refs;
  for (int i = 0; i <= cfg.layer_count; ++i) {
    refs.head_projections.push_back(
        add_pointwise(store, prefix + ".head_proj" + std::to_string(i), category, c, c, rng, init));
  }
  for (int n = 1; n <= cfg.layer_count; ++n) {
    const std::string lo = prefix + ".lo" + std::to_string(n);
    const int k_large = cfg.large_kernels[static_cast<std::size_t>(n - 1)];
    LayerOperatorRefs l;
    l.proj_a1 = add_pointwise(store, lo + ".proj_a1", category, n * c, n * c, rng, init);
    l.proj_a2 = add_pointwise(store, lo + ".proj_a2", category, n * c, n * c, rng, init);
    l.proj_h = add_pointwise(store, lo + ".proj_h", category, c, c, rng, init);
    l.dw_large_amp = add_depthwise(store, lo + ".dw_large_amp", category, n * c, k_large, rng, init);
    l.dw_large_dis = add_depthwise(store, lo + ".dw_large_dis", category, c, k_large, rng, init);
    l.dw_small_dis =
        add_depthwise(store, lo + ".dw_small_dis", category, c, cfg.small_kernel, rng, init);
    l.fuse_dis = add_pointwise(store, lo + ".fuse_dis", category, c, c, rng, init);
    refs.layers.push_back(l);
  }
  return refs;
}

template <typename T>
NodeId layer_operator_forward(Bound<T> &b, const LayerOperatorRefs &refs, NodeId a_n, NodeId h_n,
                              int layer, const RfaConfig &cfg) {
  const int c = cfg.head_channels();
  const Shape4 as = b.tape->value(a_n).shape();
  const Shape4 hs = b.tape->value(h_n).shape();
  if (as.c != layer * c) {
    std::ostringstream os;
    os << "layer_operator: A_" << layer << " must have " << layer * c << " channels, got " << as.c;
    throw ShapeError(os.str());
  }
  if (hs.c != c) {
    std::ostringstream os;
    os << "layer_operator: H_" << layer << " must have " << c << " channels, got " << hs.c;
    throw ShapeError(os.str());
  }
  if (as.b != hs.b || as.h != hs.h || as.w != hs.w)
    throw ShapeError("layer_operator: A and H disagree on B/H/W");

  NodeId a1 = apply_conv(b, refs.proj_a1, a_n);
  NodeId a2 = apply_conv(b, refs.proj_a2, a_n);
  NodeId h = apply_conv(b, refs.proj_h, h_n);

  NodeId amp = ops::elementwise_mul(*b.tape, a2, ops::gelu(*b.tape, apply_conv(b, refs.dw_large_amp, a1)));

  NodeId dis;
  if (cfg.dis_topology == DisTopology::kSum) {
    NodeId sum = ops::add(*b.tape, apply_conv(b, refs.dw_large_dis, h),
                          apply_conv(b, refs.dw_small_dis, h));
    dis = apply_conv(b, refs.fuse_dis, sum);
  } else {
    dis = apply_conv(b, refs.fuse_dis,
                     apply_conv(b, refs.dw_small_dis, apply_conv(b, refs.dw_large_dis, h)));
  }
  return ops::concat_channels(*b.tape, {amp, dis});
}

template <typename T>
NodeId rfa_forward(Bound<T> &b, const RfaRefs &refs, NodeId x, const RfaConfig &cfg) {
  cfg.validate();
  const Shape4 s = b.tape->value(x).shape();
  if (s.c != cfg.channels) {
    std::ostringstream os;
    os << "rfa_forward: input has " << s.c << " channels, config expects " << cfg.channels;
    throw ShapeError(os.str());
  }
  const int c = cfg.head_channels();

  std::vector<int> sizes(static_cast<std::size_t>(cfg.layer_count) + 1, c);
  std::vector<NodeId> heads = ops::split_channels(*b.tape, x, sizes);
  for (std::size_t i = 0; i < heads.size(); ++i)
    heads[i] = apply_conv(b, refs.head_projections[i], heads[i]);

  NodeId a = heads[0];
  for (int n = 1; n <= cfg.layer_count; ++n) {
    a = layer_operator_forward(b, refs.layers[static_cast<std::size_t>(n - 1)], a,
                               heads[static_cast<std::size_t>(n)], n, cfg);
    const int got = b.tape->value(a).shape().c;
    if (got != (n + 1) * c) {
      std::ostringstream os;
      os << "rfa_forward: channel pyramid broken after layer " << n << " (expected " << (n + 1) * c
         << ", got " << got << ")";
      throw ShapeError(os.str());
    }
  }
  return a;
}

TheoreticalRf theoretical_rf(const RfaConfig &cfg) {
  cfg.validate();
  TheoreticalRf rf;
  rf.amp_chain_rf = 1;
  for (int k : cfg.large_kernels) {
    rf.amp_chain_rf += k - 1;
    rf.dis_rf_per_layer.push_back(k);
  }
  return rf;
}

#define UNICONV_INSTANTIATE_RFA(T)                                                                 \
  template RfaRefs build_rfa<T>(ParamStore<T> &, const std::string &, const RfaConfig &, Rng &,    \
                                Category, const InitSpec &);                                       \
  template NodeId layer_operator_forward<T>(Bound<T> &, const LayerOperatorRefs &, NodeId,         \
                                            NodeId, int, const RfaConfig &);                       \
  template NodeId rfa_forward<T>(Bound<T> &, const RfaRefs &, NodeId, const RfaConfig &);

UNICONV_INSTANTIATE_RFA(float)
UNICONV_INSTANTIATE_RFA(double)

#undef UNICONV_INSTANTIATE_RFA

} // namespace uniconv
