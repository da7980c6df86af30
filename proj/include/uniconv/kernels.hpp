#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "uniconv/tensor.hpp"

namespace uniconv::kernels {

struct ConvMeta {
  int stride = 1;
  int pad = 0; // symmetric zero padding
  int groups = 1;
};

// While a scope is alive on the current thread, conv2d_forward and
// linear_forward count every multiply they execute into it. Used to verify
// the analytical MAC accounting against the kernels themselves.
class MacCounterScope {
public:
  MacCounterScope();
  ~MacCounterScope();
  MacCounterScope(const MacCounterScope &) = delete;
  MacCounterScope &operator=(const MacCounterScope &) = delete;
  std::uint64_t count() const { return count_; }

private:
  std::uint64_t count_ = 0;
  MacCounterScope *previous_ = nullptr;
};

namespace detail {
void add_macs(std::uint64_t n);
}

struct ConvShapes {
  int c_out, c_in, k_h, k_w, h_out, w_out;
};

// Validates x/weight/meta compatibility and returns the derived extents.
// Throws ShapeError on group divisibility violations or non-positive output.
ConvShapes conv2d_check(const Shape4 &x, const Shape4 &weight, const ConvMeta &meta);

// Cross-correlation (no kernel flip). Padding reads as exact zeros; the
// kernel multiplies through every tap so the executed multiply count equals
// Hout*Wout*Cout*(Cin/groups)*Kh*Kw.
template <typename T>
Tensor4<T> conv2d_forward(const Tensor4<T> &x, const Tensor4<T> &weight,
                          const Tensor4<T> *bias, const ConvMeta &meta);

template <typename T>
void conv2d_backward(const Tensor4<T> &x, const Tensor4<T> &weight, const ConvMeta &meta,
                     const Tensor4<T> &grad_out, Tensor4<T> *grad_x, Tensor4<T> *grad_w,
                     Tensor4<T> *grad_b);

// Exact GELU: x * Phi(x) with the erf-based standard normal CDF.
template <typename T> Tensor4<T> gelu_forward(const Tensor4<T> &x);
template <typename T> Tensor4<T> gelu_backward(const Tensor4<T> &x, const Tensor4<T> &grad_out);

// Per-position normalization over the channel vector (biased variance,
// eps inside the square root) followed by per-channel affine gamma/beta.
// gamma/beta are (1,C,1,1).
template <typename T>
Tensor4<T> layer_norm_forward(const Tensor4<T> &x, const Tensor4<T> &gamma,
                              const Tensor4<T> &beta, T eps);
template <typename T>
void layer_norm_backward(const Tensor4<T> &x, const Tensor4<T> &gamma, T eps,
                         const Tensor4<T> &grad_out, Tensor4<T> *grad_x, Tensor4<T> *grad_gamma,
                         Tensor4<T> *grad_beta);

template <typename T> Tensor4<T> add_forward(const Tensor4<T> &a, const Tensor4<T> &b);
template <typename T> Tensor4<T> mul_forward(const Tensor4<T> &a, const Tensor4<T> &b);

// Per-channel scalar multiply; s is (1,C,1,1).
template <typename T> Tensor4<T> scale_channels_forward(const Tensor4<T> &x, const Tensor4<T> &s);

template <typename T> Tensor4<T> global_avg_pool_forward(const Tensor4<T> &x);

// x: (B,C,1,1), weight: (C_out,C,1,1), bias: (1,C_out,1,1) -> (B,C_out,1,1).
template <typename T>
Tensor4<T> linear_forward(const Tensor4<T> &x, const Tensor4<T> &weight, const Tensor4<T> *bias);
template <typename T>
void linear_backward(const Tensor4<T> &x, const Tensor4<T> &weight, const Tensor4<T> &grad_out,
                     Tensor4<T> *grad_x, Tensor4<T> *grad_w, Tensor4<T> *grad_b);

// Contiguous channel slice [c_begin, c_begin+c_count).
template <typename T> Tensor4<T> slice_channels(const Tensor4<T> &x, int c_begin, int c_count);
// Writes src into dst's channel range starting at c_begin (dst preallocated).
template <typename T> void place_channels(Tensor4<T> &dst, const Tensor4<T> &src, int c_begin);

} // namespace uniconv::kernels
