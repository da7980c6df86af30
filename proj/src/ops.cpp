#include "uniconv/ops.hpp"

#include <cmath>
#include <sstream>

namespace uniconv::ops {

using kernels::ConvMeta;

template <typename T>
NodeId conv2d(Tape<T> &tape, NodeId x, NodeId weight, std::optional<NodeId> bias,
              const ConvMeta &meta) {
  const Tensor4<T> &xv = tape.value(x);
  const Tensor4<T> &wv = tape.value(weight);
  const Tensor4<T> *bv = bias ? &tape.value(*bias) : nullptr;
  Tensor4<T> y = kernels::conv2d_forward(xv, wv, bv, meta);

  std::vector<NodeId> inputs{x, weight};
  if (bias)
    inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return tape.apply(
      "conv2d", std::move(inputs), std::move(y),
      [x, weight, meta, has_bias](const Tape<T> &t, const Tensor4<T> &go) {
        Tensor4<T> gx, gw, gb;
        kernels::conv2d_backward(t.value(x), t.value(weight), meta, go, &gx, &gw,
                                 has_bias ? &gb : nullptr);
        std::vector<Tensor4<T>> grads{std::move(gx), std::move(gw)};
        if (has_bias)
          grads.push_back(std::move(gb));
        return grads;
      });
}

template <typename T> NodeId gelu(Tape<T> &tape, NodeId x) {
  Tensor4<T> y = kernels::gelu_forward(tape.value(x));
  return tape.apply("gelu", {x}, std::move(y),
                    [x](const Tape<T> &t, const Tensor4<T> &go) {
                      std::vector<Tensor4<T>> grads;
                      grads.push_back(kernels::gelu_backward(t.value(x), go));
                      return grads;
                    });
}

template <typename T>
NodeId layer_norm_channels(Tape<T> &tape, NodeId x, NodeId gamma, NodeId beta, T eps) {
  Tensor4<T> y = kernels::layer_norm_forward(tape.value(x), tape.value(gamma), tape.value(beta), eps);
  return tape.apply("layer_norm", {x, gamma, beta}, std::move(y),
                    [x, gamma, eps](const Tape<T> &t, const Tensor4<T> &go) {
                      Tensor4<T> gx, gg, gb;
                      kernels::layer_norm_backward(t.value(x), t.value(gamma), eps, go, &gx, &gg, &gb);
                      std::vector<Tensor4<T>> grads;
                      grads.push_back(std::move(gx));
                      grads.push_back(std::move(gg));
                      grads.push_back(std::move(gb));
                      return grads;
                    });
}

template <typename T> NodeId add(Tape<T> &tape, NodeId a, NodeId b) {
  Tensor4<T> y = kernels::add_forward(tape.value(a), tape.value(b));
  return tape.apply("add", {a, b}, std::move(y),
                    [](const Tape<T> &, const Tensor4<T> &go) {
                      std::vector<Tensor4<T>> grads{go, go};
                      return grads;
                    });
}

template <typename T> NodeId elementwise_mul(Tape<T> &tape, NodeId a, NodeId b) {
  Tensor4<T> y = kernels::mul_forward(tape.value(a), tape.value(b));
  return tape.apply("mul", {a, b}, std::move(y),
                    [a, b](const Tape<T> &t, const Tensor4<T> &go) {
                      std::vector<Tensor4<T>> grads;
                      grads.push_back(kernels::mul_forward(go, t.value(b)));
                      grads.push_back(kernels::mul_forward(go, t.value(a)));
                      return grads;
                    });
}

template <typename T> NodeId scale_channels(Tape<T> &tape, NodeId x, NodeId s) {
  Tensor4<T> y = kernels::scale_channels_forward(tape.value(x), tape.value(s));
  return tape.apply("scale_channels", {x, s}, std::move(y),
                    [x, s](const Tape<T> &t, const Tensor4<T> &go) {
                      const Tensor4<T> &xv = t.value(x);
                      const Tensor4<T> &sv = t.value(s);
                      Tensor4<T> gx = kernels::scale_channels_forward(go, sv);
                      Tensor4<T> gs(sv.shape());
                      const Shape4 sh = xv.shape();
                      for (int b = 0; b < sh.b; ++b)
                        for (int c = 0; c < sh.c; ++c) {
                          T acc = 0;
                          for (int h = 0; h < sh.h; ++h)
                            for (int w = 0; w < sh.w; ++w)
                              acc += go.at(b, c, h, w) * xv.at(b, c, h, w);
                          gs.at(0, c, 0, 0) += acc;
                        }
                      std::vector<Tensor4<T>> grads;
                      grads.push_back(std::move(gx));
                      grads.push_back(std::move(gs));
                      return grads;
                    });
}

template <typename T> NodeId global_avg_pool(Tape<T> &tape, NodeId x) {
  const Shape4 in_shape = tape.value(x).shape();
  Tensor4<T> y = kernels::global_avg_pool_forward(tape.value(x));
  return tape.apply("global_avg_pool", {x}, std::move(y),
                    [in_shape](const Tape<T> &, const Tensor4<T> &go) {
                      Tensor4<T> gx(in_shape);
                      const T inv =
                          T(1) / static_cast<T>(static_cast<std::size_t>(in_shape.h) * in_shape.w);
                      for (int b = 0; b < in_shape.b; ++b)
                        for (int c = 0; c < in_shape.c; ++c) {
                          const T g = go.at(b, c, 0, 0) * inv;
                          for (int h = 0; h < in_shape.h; ++h)
                            for (int w = 0; w < in_shape.w; ++w)
                              gx.at(b, c, h, w) = g;
                        }
                      std::vector<Tensor4<T>> grads;
                      grads.push_back(std::move(gx));
                      return grads;
                    });
}

template <typename T>
NodeId linear(Tape<T> &tape, NodeId x, NodeId weight, std::optional<NodeId> bias) {
  const Tensor4<T> *bv = bias ? &tape.value(*bias) : nullptr;
  Tensor4<T> y = kernels::linear_forward(tape.value(x), tape.value(weight), bv);
  std::vector<NodeId> inputs{x, weight};
  if (bias)
    inputs.push_back(*bias);
  const bool has_bias = bias.has_value();
  return tape.apply("linear", std::move(inputs), std::move(y),
                    [x, weight, has_bias](const Tape<T> &t, const Tensor4<T> &go) {
                      Tensor4<T> gx, gw, gb;
                      kernels::linear_backward(t.value(x), t.value(weight), go, &gx, &gw,
                                               has_bias ? &gb : nullptr);
                      std::vector<Tensor4<T>> grads{std::move(gx), std::move(gw)};
                      if (has_bias)
                        grads.push_back(std::move(gb));
                      return grads;
                    });
}

template <typename T>
std::vector<NodeId> split_channels(Tape<T> &tape, NodeId x, const std::vector<int> &sizes) {
  const Shape4 s = tape.value(x).shape();
  int sum = 0;
  for (int sz : sizes) {
    if (sz <= 0)
      throw ShapeError("split_channels: sizes must be positive");
    sum += sz;
  }
  if (sum != s.c) {
    std::ostringstream os;
    os << "split_channels: sizes sum to " << sum << " but input has " << s.c << " channels";
    throw ShapeError(os.str());
  }

  std::vector<NodeId> out;
  int begin = 0;
  for (int sz : sizes) {
    Tensor4<T> part = kernels::slice_channels(tape.value(x), begin, sz);
    const int c_begin = begin;
    out.push_back(tape.apply("split_channels", {x}, std::move(part),
                             [s, c_begin](const Tape<T> &, const Tensor4<T> &go) {
                               Tensor4<T> gx(s); // zeros outside the slice
                               kernels::place_channels(gx, go, c_begin);
                               std::vector<Tensor4<T>> grads;
                               grads.push_back(std::move(gx));
                               return grads;
                             }));
    begin += sz;
  }
  return out;
}

template <typename T> NodeId concat_channels(Tape<T> &tape, const std::vector<NodeId> &parts) {
  if (parts.empty())
    throw ShapeError("concat_channels: no parts");
  const Shape4 first = tape.value(parts[0]).shape();
  int total_c = 0;
  std::vector<int> sizes;
  for (NodeId p : parts) {
    const Shape4 s = tape.value(p).shape();
    if (s.b != first.b || s.h != first.h || s.w != first.w)
      throw ShapeError("concat_channels: parts disagree on B/H/W (" + first.to_string() + " vs " +
                       s.to_string() + ")");
    sizes.push_back(s.c);
    total_c += s.c;
  }

  Tensor4<T> y(Shape4{first.b, total_c, first.h, first.w});
  int begin = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    kernels::place_channels(y, tape.value(parts[i]), begin);
    begin += sizes[i];
  }
  return tape.apply("concat_channels", parts, std::move(y),
                    [sizes](const Tape<T> &, const Tensor4<T> &go) {
                      std::vector<Tensor4<T>> grads;
                      int b = 0;
                      for (int sz : sizes) {
                        grads.push_back(kernels::slice_channels(go, b, sz));
                        b += sz;
                      }
                      return grads;
                    });
}

template <typename T>
XentResult<T> softmax_cross_entropy(const Tensor4<T> &logits, const std::vector<int> &labels) {
  const Shape4 s = logits.shape();
  if (s.h != 1 || s.w != 1)
    throw ShapeError("softmax_cross_entropy: logits must be (B,K,1,1)");
  if (static_cast<int>(labels.size()) != s.b)
    throw ShapeError("softmax_cross_entropy: one label per batch row required");

  XentResult<T> r{T(0), Tensor4<T>(s)};
  const T inv_b = T(1) / static_cast<T>(s.b);
  for (int b = 0; b < s.b; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= s.c)
      throw Error("softmax_cross_entropy: label out of range");
    T max_z = logits.at(b, 0, 0, 0);
    for (int k = 1; k < s.c; ++k)
      max_z = std::max(max_z, logits.at(b, k, 0, 0));
    T sum_exp = 0;
    for (int k = 0; k < s.c; ++k)
      sum_exp += std::exp(logits.at(b, k, 0, 0) - max_z);
    const T log_sum = max_z + std::log(sum_exp);
    r.loss += (log_sum - logits.at(b, y, 0, 0)) * inv_b;
    for (int k = 0; k < s.c; ++k) {
      const T p = std::exp(logits.at(b, k, 0, 0) - log_sum);
      r.dlogits.at(b, k, 0, 0) = (p - (k == y ? T(1) : T(0))) * inv_b;
    }
  }
  return r;
}

#define UNICONV_INSTANTIATE_OPS(T)                                                                 \
  template NodeId conv2d<T>(Tape<T> &, NodeId, NodeId, std::optional<NodeId>, const ConvMeta &);   \
  template NodeId gelu<T>(Tape<T> &, NodeId);                                                      \
  template NodeId layer_norm_channels<T>(Tape<T> &, NodeId, NodeId, NodeId, T);                    \
  template NodeId add<T>(Tape<T> &, NodeId, NodeId);                                               \
  template NodeId elementwise_mul<T>(Tape<T> &, NodeId, NodeId);                                   \
  template NodeId scale_channels<T>(Tape<T> &, NodeId, NodeId);                                    \
  template NodeId global_avg_pool<T>(Tape<T> &, NodeId);                                           \
  template NodeId linear<T>(Tape<T> &, NodeId, NodeId, std::optional<NodeId>);                     \
  template std::vector<NodeId> split_channels<T>(Tape<T> &, NodeId, const std::vector<int> &);     \
  template NodeId concat_channels<T>(Tape<T> &, const std::vector<NodeId> &);                      \
  template XentResult<T> softmax_cross_entropy<T>(const Tensor4<T> &, const std::vector<int> &);

UNICONV_INSTANTIATE_OPS(float)
UNICONV_INSTANTIATE_OPS(double)

#undef UNICONV_INSTANTIATE_OPS

} // namespace uniconv::ops
