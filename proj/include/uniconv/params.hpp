#pragma once

#include <string>
#include <vector>

#include "uniconv/ops.hpp"
#include "uniconv/tape.hpp"
#include "uniconv/tensor.hpp"

namespace uniconv {

// Accounting buckets, mirroring the params/FLOPs breakdown reported by
// `describe`.
enum class Category { kRfa, kSmallConv, kFfn, kStemDownsample, kHead };

const char *to_string(Category c);

template <typename T> struct ParamEntry {
  std::string name; // hierarchical, e.g. "stage1.block0.rfa.lo1.proj_a1.weight"
  Category category;
  Tensor4<T> value;
};

// Flat, ordered store of every learnable tensor of a network (or of a
// standalone module under test). Order is the serialization order.
template <typename T> class ParamStore {
public:
  int add(std::string name, Category category, Tensor4<T> value) {
    items_.push_back(ParamEntry<T>{std::move(name), category, std::move(value)});
    return static_cast<int>(items_.size()) - 1;
  }

  const std::vector<ParamEntry<T>> &items() const { return items_; }
  std::vector<ParamEntry<T>> &items() { return items_; }
  std::size_t size() const { return items_.size(); }

  template <typename U> ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto &e : items_)
      out.add(e.name, e.category, e.value.template cast<U>());
    return out;
  }

private:
  std::vector<ParamEntry<T>> items_;
};

// Indices into a ParamStore plus the convolution hyperparameters; -1 marks an
// absent bias.
struct ConvRef {
  int weight = -1;
  int bias = -1;
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

struct NormRef {
  int gamma = -1;
  int beta = -1;
};

// A parameter store bound to a tape: every entry registered as a leaf so
// gradients can be routed back to the store (e.g. for SGD).
template <typename T> struct Bound {
  Tape<T> *tape = nullptr;
  const ParamStore<T> *store = nullptr;
  std::vector<NodeId> nodes; // one per store item, same order

  NodeId node(int param_index) const { return nodes[static_cast<std::size_t>(param_index)]; }
};

template <typename T> Bound<T> bind(Tape<T> &tape, const ParamStore<T> &store) {
  Bound<T> b{&tape, &store, {}};
  b.nodes.reserve(store.size());
  for (const auto &e : store.items())
    b.nodes.push_back(tape.leaf(e.value));
  return b;
}

template <typename T> NodeId apply_conv(Bound<T> &b, const ConvRef &ref, NodeId x) {
  std::optional<NodeId> bias;
  if (ref.bias >= 0)
    bias = b.node(ref.bias);
  return ops::conv2d(*b.tape, x, b.node(ref.weight), bias,
                     kernels::ConvMeta{ref.stride, ref.pad, ref.groups});
}

template <typename T> NodeId apply_layer_norm(Bound<T> &b, const NormRef &ref, NodeId x) {
  return ops::layer_norm_channels(*b.tape, x, b.node(ref.gamma), b.node(ref.beta));
}

} // namespace uniconv
