#include "uniconv/kernels.hpp"

#include <cmath>
#include <sstream>

namespace uniconv::kernels {

namespace {
thread_local MacCounterScope *g_active_scope = nullptr;
thread_local std::uint64_t *g_active_count = nullptr;
} // namespace

MacCounterScope::MacCounterScope() {
  previous_ = g_active_scope;
  g_active_scope = this;
  g_active_count = &count_;
}

MacCounterScope::~MacCounterScope() {
  g_active_scope = previous_;
  g_active_count = previous_ ? &previous_->count_ : nullptr;
}

namespace detail {
void add_macs(std::uint64_t n) {
  if (g_active_count)
    *g_active_count += n;
}
} // namespace detail

ConvShapes conv2d_check(const Shape4 &x, const Shape4 &weight, const ConvMeta &meta) {
  const int groups = meta.groups;
  if (groups <= 0 || meta.stride <= 0 || meta.pad < 0)
    throw ShapeError("conv2d: stride/groups must be positive, pad non-negative");
  const int c_in = x.c;
  const int c_out = weight.b;
  if (c_in % groups != 0 || c_out % groups != 0) {
    std::ostringstream os;
    os << "conv2d: channels not divisible by groups (C_in=" << c_in << ", C_out=" << c_out
       << ", groups=" << groups << ")";
    throw ShapeError(os.str());
  }
  if (weight.c != c_in / groups) {
    std::ostringstream os;
    os << "conv2d: weight shape " << weight.to_string() << " expects C_in/groups = " << weight.c
       << " but input has " << c_in / groups;
    throw ShapeError(os.str());
  }
  const int h_out = (x.h + 2 * meta.pad - weight.h) / meta.stride + 1;
  const int w_out = (x.w + 2 * meta.pad - weight.w) / meta.stride + 1;
  if (x.h + 2 * meta.pad < weight.h || x.w + 2 * meta.pad < weight.w || h_out < 1 || w_out < 1) {
    std::ostringstream os;
    os << "conv2d: non-positive output extent for input " << x.to_string() << " with kernel "
       << weight.h << "x" << weight.w << " stride " << meta.stride << " pad " << meta.pad;
    throw ShapeError(os.str());
  }
  return ConvShapes{c_out, c_in, weight.h, weight.w, h_out, w_out};
}

template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T> &x, const Tensor4<T> &weight, const Tensor4<T> *bias,
                          const ConvMeta &meta) {
  const ConvShapes s = conv2d_check(x.shape(), weight.shape(), meta);
  if (bias && !(bias->shape() == Shape4{1, s.c_out, 1, 1}))
    throw ShapeError("conv2d: bias must be (1,C_out,1,1)");

  Tensor4<T> y(Shape4{x.shape().b, s.c_out, s.h_out, s.w_out});
  const int cig = s.c_in / meta.groups;  // channels per group, input side
  const int cog = s.c_out / meta.groups; // output side
  std::uint64_t taps = 0;

  for (int b = 0; b < x.shape().b; ++b) {
    for (int g = 0; g < meta.groups; ++g) {
      for (int ocl = 0; ocl < cog; ++ocl) {
        const int oc = g * cog + ocl;
        const T bias_v = bias ? bias->at(0, oc, 0, 0) : T(0);
        for (int oh = 0; oh < s.h_out; ++oh) {
          for (int ow = 0; ow < s.w_out; ++ow) {
            T acc = 0;
            for (int icl = 0; icl < cig; ++icl) {
              const int ic = g * cig + icl;
              for (int kh = 0; kh < s.k_h; ++kh) {
                const int ih = oh * meta.stride - meta.pad + kh;
                const bool h_ok = ih >= 0 && ih < x.shape().h;
                for (int kw = 0; kw < s.k_w; ++kw) {
                  const int iw = ow * meta.stride - meta.pad + kw;
                  const T xv = (h_ok && iw >= 0 && iw < x.shape().w) ? x.at(b, ic, ih, iw) : T(0);
                  acc += xv * weight.at(oc, icl, kh, kw);
                  ++taps;
                }
              }
            }
            y.at(b, oc, oh, ow) = acc + bias_v;
          }
        }
      }
    }
  }
  detail::add_macs(taps);
  return y;
}

template <typename T>
void conv2d_backward(const Tensor4<T> &x, const Tensor4<T> &weight, const ConvMeta &meta,
                     const Tensor4<T> &grad_out, Tensor4<T> *grad_x, Tensor4<T> *grad_w,
                     Tensor4<T> *grad_b) {
  const ConvShapes s = conv2d_check(x.shape(), weight.shape(), meta);
  if (!(grad_out.shape() == Shape4{x.shape().b, s.c_out, s.h_out, s.w_out}))
    throw ShapeError("conv2d backward: grad_out shape mismatch");
  if (grad_x)
    *grad_x = Tensor4<T>(x.shape());
  if (grad_w)
    *grad_w = Tensor4<T>(weight.shape());
  if (grad_b)
    *grad_b = Tensor4<T>(Shape4{1, s.c_out, 1, 1});

  const int cig = s.c_in / meta.groups;
  const int cog = s.c_out / meta.groups;

  for (int b = 0; b < x.shape().b; ++b) {
    for (int g = 0; g < meta.groups; ++g) {
      for (int ocl = 0; ocl < cog; ++ocl) {
        const int oc = g * cog + ocl;
        for (int oh = 0; oh < s.h_out; ++oh) {
          for (int ow = 0; ow < s.w_out; ++ow) {
            const T go = grad_out.at(b, oc, oh, ow);
            if (grad_b)
              grad_b->at(0, oc, 0, 0) += go;
            for (int icl = 0; icl < cig; ++icl) {
              const int ic = g * cig + icl;
              for (int kh = 0; kh < s.k_h; ++kh) {
                const int ih = oh * meta.stride - meta.pad + kh;
                if (ih < 0 || ih >= x.shape().h)
                  continue;
                for (int kw = 0; kw < s.k_w; ++kw) {
                  const int iw = ow * meta.stride - meta.pad + kw;
                  if (iw < 0 || iw >= x.shape().w)
                    continue;
                  if (grad_x)
                    grad_x->at(b, ic, ih, iw) += go * weight.at(oc, icl, kh, kw);
                  if (grad_w)
                    grad_w->at(oc, icl, kh, kw) += go * x.at(b, ic, ih, iw);
                }
              }
            }
          }
        }
      }
    }
  }
}

namespace {
template <typename T> inline T norm_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x * T(0.7071067811865475244)));
}
template <typename T> inline T norm_pdf(T x) {
  return T(0.3989422804014326779) * std::exp(T(-0.5) * x * x);
}
} // namespace

template <typename T> Tensor4<T> gelu_forward(const Tensor4<T> &x) {
  Tensor4<T> y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x.data()[i];
    y.data()[i] = v * norm_cdf(v);
  }
  return y;
}

template <typename T> Tensor4<T> gelu_backward(const Tensor4<T> &x, const Tensor4<T> &grad_out) {
  Tensor4<T> g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const T v = x.data()[i];
    g.data()[i] = grad_out.data()[i] * (norm_cdf(v) + v * norm_pdf(v));
  }
  return g;
}

template <typename T>
Tensor4<T> layer_norm_forward(const Tensor4<T> &x, const Tensor4<T> &gamma, const Tensor4<T> &beta,
                              T eps) {
  const Shape4 s = x.shape();
  if (!(gamma.shape() == Shape4{1, s.c, 1, 1}) || !(beta.shape() == Shape4{1, s.c, 1, 1}))
    throw ShapeError("layer_norm: gamma/beta must be (1,C,1,1) with C matching input");
  if (eps <= T(0))
    throw Error("layer_norm: eps must be > 0");

  Tensor4<T> y(s);
  const T inv_c = T(1) / static_cast<T>(s.c);
  for (int b = 0; b < s.b; ++b) {
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) {
        T mean = 0;
        for (int c = 0; c < s.c; ++c)
          mean += x.at(b, c, h, w);
        mean *= inv_c;
        T var = 0;
        for (int c = 0; c < s.c; ++c) {
          const T d = x.at(b, c, h, w) - mean;
          var += d * d;
        }
        var *= inv_c;
        const T inv_std = T(1) / std::sqrt(var + eps);
        for (int c = 0; c < s.c; ++c) {
          const T xhat = (x.at(b, c, h, w) - mean) * inv_std;
          y.at(b, c, h, w) = xhat * gamma.at(0, c, 0, 0) + beta.at(0, c, 0, 0);
        }
      }
    }
  }
  return y;
}

template <typename T>
void layer_norm_backward(const Tensor4<T> &x, const Tensor4<T> &gamma, T eps,
                         const Tensor4<T> &grad_out, Tensor4<T> *grad_x, Tensor4<T> *grad_gamma,
                         Tensor4<T> *grad_beta) {
  const Shape4 s = x.shape();
  if (grad_x)
    *grad_x = Tensor4<T>(s);
  if (grad_gamma)
    *grad_gamma = Tensor4<T>(Shape4{1, s.c, 1, 1});
  if (grad_beta)
    *grad_beta = Tensor4<T>(Shape4{1, s.c, 1, 1});

  const T inv_c = T(1) / static_cast<T>(s.c);
  std::vector<T> xhat(static_cast<std::size_t>(s.c));
  for (int b = 0; b < s.b; ++b) {
    for (int h = 0; h < s.h; ++h) {
      for (int w = 0; w < s.w; ++w) {
        T mean = 0;
        for (int c = 0; c < s.c; ++c)
          mean += x.at(b, c, h, w);
        mean *= inv_c;
        T var = 0;
        for (int c = 0; c < s.c; ++c) {
          const T d = x.at(b, c, h, w) - mean;
          var += d * d;
        }
        var *= inv_c;
        const T inv_std = T(1) / std::sqrt(var + eps);

        T sum_g = 0, sum_gx = 0;
        for (int c = 0; c < s.c; ++c) {
          xhat[c] = (x.at(b, c, h, w) - mean) * inv_std;
          const T g = grad_out.at(b, c, h, w) * gamma.at(0, c, 0, 0);
          sum_g += g;
          sum_gx += g * xhat[c];
        }
        for (int c = 0; c < s.c; ++c) {
          const T go = grad_out.at(b, c, h, w);
          if (grad_gamma)
            grad_gamma->at(0, c, 0, 0) += go * xhat[c];
          if (grad_beta)
            grad_beta->at(0, c, 0, 0) += go;
          if (grad_x) {
            const T g = go * gamma.at(0, c, 0, 0);
            grad_x->at(b, c, h, w) = inv_std * (g - inv_c * sum_g - xhat[c] * inv_c * sum_gx);
          }
        }
      }
    }
  }
}

namespace {
template <typename T> void require_same_shape(const Tensor4<T> &a, const Tensor4<T> &b, const char *op) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().to_string() + " vs " +
                     b.shape().to_string());
}
} // namespace

template <typename T> Tensor4<T> add_forward(const Tensor4<T> &a, const Tensor4<T> &b) {
  require_same_shape(a, b, "add");
  Tensor4<T> y(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    y.data()[i] = a.data()[i] + b.data()[i];
  return y;
}

template <typename T> Tensor4<T> mul_forward(const Tensor4<T> &a, const Tensor4<T> &b) {
  require_same_shape(a, b, "elementwise_mul");
  Tensor4<T> y(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i)
    y.data()[i] = a.data()[i] * b.data()[i];
  return y;
}

template <typename T>
Tensor4<T> scale_channels_forward(const Tensor4<T> &x, const Tensor4<T> &s) {
  if (!(s.shape() == Shape4{1, x.shape().c, 1, 1}))
    throw ShapeError("scale_channels: scale must be (1,C,1,1)");
  Tensor4<T> y(x.shape());
  for (int b = 0; b < x.shape().b; ++b)
    for (int c = 0; c < x.shape().c; ++c) {
      const T sv = s.at(0, c, 0, 0);
      for (int h = 0; h < x.shape().h; ++h)
        for (int w = 0; w < x.shape().w; ++w)
          y.at(b, c, h, w) = x.at(b, c, h, w) * sv;
    }
  return y;
}

template <typename T> Tensor4<T> global_avg_pool_forward(const Tensor4<T> &x) {
  const Shape4 s = x.shape();
  Tensor4<T> y(Shape4{s.b, s.c, 1, 1});
  const T inv = T(1) / static_cast<T>(static_cast<std::size_t>(s.h) * s.w);
  for (int b = 0; b < s.b; ++b)
    for (int c = 0; c < s.c; ++c) {
      T acc = 0;
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w)
          acc += x.at(b, c, h, w);
      y.at(b, c, 0, 0) = acc * inv;
    }
  return y;
}

template <typename T>
Tensor4<T> linear_forward(const Tensor4<T> &x, const Tensor4<T> &weight, const Tensor4<T> *bias) {
  const Shape4 xs = x.shape();
  if (xs.h != 1 || xs.w != 1)
    throw ShapeError("linear: input must be (B,C,1,1), got " + xs.to_string());
  if (weight.shape().c != xs.c || weight.shape().h != 1 || weight.shape().w != 1)
    throw ShapeError("linear: weight must be (C_out,C,1,1) with C matching input");
  const int c_out = weight.shape().b;
  if (bias && !(bias->shape() == Shape4{1, c_out, 1, 1}))
    throw ShapeError("linear: bias must be (1,C_out,1,1)");

  Tensor4<T> y(Shape4{xs.b, c_out, 1, 1});
  std::uint64_t taps = 0;
  for (int b = 0; b < xs.b; ++b)
    for (int o = 0; o < c_out; ++o) {
      T acc = bias ? bias->at(0, o, 0, 0) : T(0);
      for (int c = 0; c < xs.c; ++c) {
        acc += weight.at(o, c, 0, 0) * x.at(b, c, 0, 0);
        ++taps;
      }
      y.at(b, o, 0, 0) = acc;
    }
  detail::add_macs(taps);
  return y;
}

template <typename T>
void linear_backward(const Tensor4<T> &x, const Tensor4<T> &weight, const Tensor4<T> &grad_out,
                     Tensor4<T> *grad_x, Tensor4<T> *grad_w, Tensor4<T> *grad_b) {
  const Shape4 xs = x.shape();
  const int c_out = weight.shape().b;
  if (grad_x)
    *grad_x = Tensor4<T>(xs);
  if (grad_w)
    *grad_w = Tensor4<T>(weight.shape());
  if (grad_b)
    *grad_b = Tensor4<T>(Shape4{1, c_out, 1, 1});
  for (int b = 0; b < xs.b; ++b)
    for (int o = 0; o < c_out; ++o) {
      const T go = grad_out.at(b, o, 0, 0);
      if (grad_b)
        grad_b->at(0, o, 0, 0) += go;
      for (int c = 0; c < xs.c; ++c) {
        if (grad_x)
          grad_x->at(b, c, 0, 0) += go * weight.at(o, c, 0, 0);
        if (grad_w)
          grad_w->at(o, c, 0, 0) += go * x.at(b, c, 0, 0);
      }
    }
}

template <typename T> Tensor4<T> slice_channels(const Tensor4<T> &x, int c_begin, int c_count) {
  const Shape4 s = x.shape();
  if (c_begin < 0 || c_count <= 0 || c_begin + c_count > s.c)
    throw ShapeError("slice_channels: range out of bounds");
  Tensor4<T> y(Shape4{s.b, c_count, s.h, s.w});
  for (int b = 0; b < s.b; ++b)
    for (int c = 0; c < c_count; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w)
          y.at(b, c, h, w) = x.at(b, c_begin + c, h, w);
  return y;
}

template <typename T> void place_channels(Tensor4<T> &dst, const Tensor4<T> &src, int c_begin) {
  const Shape4 s = src.shape();
  if (c_begin < 0 || c_begin + s.c > dst.shape().c || dst.shape().b != s.b ||
      dst.shape().h != s.h || dst.shape().w != s.w)
    throw ShapeError("place_channels: destination range mismatch");
  for (int b = 0; b < s.b; ++b)
    for (int c = 0; c < s.c; ++c)
      for (int h = 0; h < s.h; ++h)
        for (int w = 0; w < s.w; ++w)
          dst.at(b, c_begin + c, h, w) = src.at(b, c, h, w);
}

#define UNICONV_INSTANTIATE_KERNELS(T)                                                             \
  template Tensor4<T> conv2d_forward<T>(const Tensor4<T> &, const Tensor4<T> &,                    \
                                        const Tensor4<T> *, const ConvMeta &);                     \
  template void conv2d_backward<T>(const Tensor4<T> &, const Tensor4<T> &, const ConvMeta &,      \
                                   const Tensor4<T> &, Tensor4<T> *, Tensor4<T> *, Tensor4<T> *); \
  template Tensor4<T> gelu_forward<T>(const Tensor4<T> &);                                         \
  template Tensor4<T> gelu_backward<T>(const Tensor4<T> &, const Tensor4<T> &);                    \
  template Tensor4<T> layer_norm_forward<T>(const Tensor4<T> &, const Tensor4<T> &,                \
                                            const Tensor4<T> &, T);                                \
  template void layer_norm_backward<T>(const Tensor4<T> &, const Tensor4<T> &, T,                  \
                                       const Tensor4<T> &, Tensor4<T> *, Tensor4<T> *,             \
                                       Tensor4<T> *);                                              \
  template Tensor4<T> add_forward<T>(const Tensor4<T> &, const Tensor4<T> &);                      \
  template Tensor4<T> mul_forward<T>(const Tensor4<T> &, const Tensor4<T> &);                      \
  template Tensor4<T> scale_channels_forward<T>(const Tensor4<T> &, const Tensor4<T> &);           \
  template Tensor4<T> global_avg_pool_forward<T>(const Tensor4<T> &);                              \
  template Tensor4<T> linear_forward<T>(const Tensor4<T> &, const Tensor4<T> &,                    \
                                        const Tensor4<T> *);                                       \
  template void linear_backward<T>(const Tensor4<T> &, const Tensor4<T> &, const Tensor4<T> &,     \
                                   Tensor4<T> *, Tensor4<T> *, Tensor4<T> *);                      \
  template Tensor4<T> slice_channels<T>(const Tensor4<T> &, int, int);                             \
  template void place_channels<T>(Tensor4<T> &, const Tensor4<T> &, int);

UNICONV_INSTANTIATE_KERNELS(float)
UNICONV_INSTANTIATE_KERNELS(double)

#undef UNICONV_INSTANTIATE_KERNELS

} // namespace uniconv::kernels
