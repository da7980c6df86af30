#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uniconv/tensor.hpp"

namespace uniconv {

// Handle to one tensor recorded on a GradTape.
struct NodeId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool operator==(const NodeId &other) const = default;
};

template <typename T> class Tape;

// Gradient of a scalar objective with respect to every tape node. Leaves that
// the output does not reach get zero tensors.
template <typename T> class Gradients {
public:
  const Tensor4<T> &at(NodeId id) const {
    if (id.index >= grads_.size())
      throw TapeError("gradient query for unknown node id");
    return grads_[id.index];
  }

private:
  friend class Tape<T>;
  std::vector<Tensor4<T>> grads_;
};

// Append-only reverse-mode record. Node ids are topologically ordered by
// construction: every node's inputs have smaller ids. Single-threaded during
// both construction and backward.
template <typename T> class Tape {
public:
  // Backward rule: given this tape and the gradient flowing into the node's
  // output, produce one gradient tensor per input (same order as `inputs`).
  using BackwardFn =
      std::function<std::vector<Tensor4<T>>(const Tape<T> &, const Tensor4<T> &)>;

  // Records an input or parameter tensor. Leaves have no backward rule.
  NodeId leaf(Tensor4<T> value) {
    nodes_.push_back(Node{"leaf", {}, std::move(value), nullptr});
    return NodeId{nodes_.size() - 1};
  }

  NodeId apply(const char *tag, std::vector<NodeId> inputs, Tensor4<T> value, BackwardFn backward) {
    for (const NodeId &in : inputs) {
      check(in);
    }
    nodes_.push_back(Node{tag, std::move(inputs), std::move(value), std::move(backward)});
    return NodeId{nodes_.size() - 1};
  }

  const Tensor4<T> &value(NodeId id) const {
    check(id);
    return nodes_[id.index].value;
  }

  bool is_leaf(NodeId id) const {
    check(id);
    return !nodes_[id.index].backward && nodes_[id.index].inputs.empty();
  }

  const char *tag(NodeId id) const {
    check(id);
    return nodes_[id.index].tag;
  }

  std::size_t size() const { return nodes_.size(); }

  // Gradient of <seed, value(output)> with respect to every node. One sweep,
  // reverse id order, each node visited exactly once.
  Gradients<T> backward(NodeId output, const Tensor4<T> &seed) const {
    check(output);
    const Tensor4<T> &out_value = nodes_[output.index].value;
    if (!(seed.shape() == out_value.shape()))
      throw ShapeError("backward seed shape " + seed.shape().to_string() +
                       " does not match output shape " + out_value.shape().to_string());

    std::vector<std::optional<Tensor4<T>>> grad(nodes_.size());
    grad[output.index] = seed;
    for (std::size_t i = output.index + 1; i-- > 0;) {
      const Node &node = nodes_[i];
      if (!grad[i] || !node.backward)
        continue;
      std::vector<Tensor4<T>> input_grads = node.backward(*this, *grad[i]);
      if (input_grads.size() != node.inputs.size())
        throw TapeError(std::string("backward rule of '") + node.tag +
                        "' returned wrong number of gradients");
      for (std::size_t j = 0; j < node.inputs.size(); ++j)
        accumulate(grad, node.inputs[j], std::move(input_grads[j]));
    }

    Gradients<T> out;
    out.grads_.reserve(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (grad[i])
        out.grads_.push_back(std::move(*grad[i]));
      else
        out.grads_.push_back(Tensor4<T>(nodes_[i].value.shape())); // zeros
    }
    return out;
  }

private:
  struct Node {
    const char *tag;
    std::vector<NodeId> inputs;
    Tensor4<T> value;
    BackwardFn backward;
  };

  void check(NodeId id) const {
    if (id.index >= nodes_.size())
      throw TapeError("unknown node id");
  }

  static void accumulate(std::vector<std::optional<Tensor4<T>>> &grad, NodeId id, Tensor4<T> g) {
    if (!grad[id.index]) {
      grad[id.index] = std::move(g);
      return;
    }
    Tensor4<T> &dst = *grad[id.index];
    if (!(dst.shape() == g.shape()))
      throw ShapeError("gradient accumulation shape mismatch");
    for (std::size_t i = 0; i < dst.numel(); ++i)
      dst.data()[i] += g.data()[i];
  }

  std::vector<Node> nodes_;
};

} // namespace uniconv
