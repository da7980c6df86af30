#pragma once

#include <optional>
#include <vector>

#include "uniconv/kernels.hpp"
#include "uniconv/tape.hpp"

namespace uniconv::ops {

using kernels::ConvMeta;

inline constexpr double kLayerNormEps = 1e-6;

// Grouped cross-correlation. weight is (C_out, C_in/groups, Kh, Kw); bias, if
// present, is a (1,C_out,1,1) leaf. Gradients flow to x, weight and bias.
template <typename T>
NodeId conv2d(Tape<T> &tape, NodeId x, NodeId weight, std::optional<NodeId> bias,
              const ConvMeta &meta);

template <typename T> NodeId gelu(Tape<T> &tape, NodeId x);

template <typename T>
NodeId layer_norm_channels(Tape<T> &tape, NodeId x, NodeId gamma, NodeId beta,
                           T eps = T(kLayerNormEps));

template <typename T> NodeId add(Tape<T> &tape, NodeId a, NodeId b);
template <typename T> NodeId elementwise_mul(Tape<T> &tape, NodeId a, NodeId b);
template <typename T> NodeId scale_channels(Tape<T> &tape, NodeId x, NodeId s);
template <typename T> NodeId global_avg_pool(Tape<T> &tape, NodeId x);
template <typename T>
NodeId linear(Tape<T> &tape, NodeId x, NodeId weight, std::optional<NodeId> bias);

// Channel partition into contiguous, ordered slices. sum(sizes) must equal C.
template <typename T>
std::vector<NodeId> split_channels(Tape<T> &tape, NodeId x, const std::vector<int> &sizes);

template <typename T> NodeId concat_channels(Tape<T> &tape, const std::vector<NodeId> &parts);

// Softmax cross-entropy averaged over the batch, with its gradient w.r.t. the
// logits. Not a tape op: the gradient is used as a backward seed.
template <typename T> struct XentResult {
  T loss;
  Tensor4<T> dlogits;
};
template <typename T>
XentResult<T> softmax_cross_entropy(const Tensor4<T> &logits, const std::vector<int> &labels);

} // namespace uniconv::ops
