#pragma once

#include <array>
#include <string>
#include <vector>

#include "uniconv/rfa.hpp"

namespace uniconv {

struct ModelConfig {
  std::array<int, 4> stage_channels{};
  std::array<int, 4> stage_depths{};
  double ffn_ratio = 4.0;
  int num_classes = 0;
  double layer_scale_init = 1e-6;
  RfaConfig rfa; // template; channels field is replaced per stage

  void validate() const;
  RfaConfig stage_rfa(int stage) const {
    return rfa.with_channels(stage_channels[static_cast<std::size_t>(stage)]);
  }
  int ffn_hidden(int channels) const;
};

struct StemRefs {
  ConvRef conv1;
  NormRef ln1;
  ConvRef conv2;
  NormRef ln2;
};

struct DownsampleRefs {
  NormRef ln;
  ConvRef conv;
};

// One basic block: three residual components (RFA, depthwise 3x3, FFN), each
// LayerNorm-led and gated by a per-channel layer scale.
struct BlockRefs {
  NormRef ln1;
  RfaRefs rfa;
  int scale1 = -1;
  NormRef ln2;
  ConvRef dw_small;
  int scale2 = -1;
  NormRef ln3;
  ConvRef ffn_in, ffn_out;
  int scale3 = -1;
};

struct ModelRefs {
  StemRefs stem;
  std::vector<std::vector<BlockRefs>> stages; // 4 stages
  std::array<DownsampleRefs, 3> downsamples;
  NormRef head_ln;
  int head_w = -1, head_b = -1;
};

template <typename T> struct Model {
  ModelConfig config;
  ParamStore<T> params;
  ModelRefs refs;

  template <typename U> Model<U> cast() const {
    return Model<U>{config, params.template cast<U>(), refs};
  }
};

// Deterministic build: trunc-normal(0.02) conv/linear weights, zero biases,
// LN gamma=1 beta=0, layer scales at config.layer_scale_init.
template <typename T> Model<T> build_model(const ModelConfig &cfg, Rng &rng);

template <typename T> NodeId stem_forward(Bound<T> &b, const StemRefs &refs, NodeId x);
template <typename T> NodeId downsample_forward(Bound<T> &b, const DownsampleRefs &refs, NodeId x);
template <typename T>
NodeId basic_block_forward(Bound<T> &b, const BlockRefs &refs, NodeId x, const RfaConfig &rfa_cfg);

// Stem -> stages with downsampling -> final stage-4 feature map (pre-pool).
template <typename T> NodeId model_features_forward(Bound<T> &b, const Model<T> &m, NodeId x);
// Features -> global average pool -> LayerNorm -> linear logits (B,K,1,1).
template <typename T> NodeId model_forward(Bound<T> &b, const Model<T> &m, NodeId x);

// p <- p - lr * g for every parameter leaf of the bound store.
template <typename T>
void sgd_step(ParamStore<T> &store, const Bound<T> &bound, const Gradients<T> &grads, T lr);

// Synthetic two-class batch for the learnability smoke run: near-uniform
// color fields, class 0 magenta-leaning and class 1 green-leaning. The class
// signal lives in the cross-channel pattern, which survives the network's
// LayerNorms (a global brightness offset would not).
template <typename T> struct OverfitBatch {
  Tensor4<T> inputs;       // (n, 3, hw, hw)
  std::vector<int> labels; // alternating 0, 1
};
template <typename T> OverfitBatch<T> make_overfit_batch(int n, int hw, Rng &rng);

// Full-batch gradient descent on the synthetic two-class batch. The model is
// built from the config with Rng(seed); the batch comes from Rng(seed)'s
// child stream 1. Returns the batch loss before each update, then the final
// loss (steps+1 entries).
template <typename T>
std::vector<double> run_overfit(const ModelConfig &cfg, std::uint64_t seed, int n_samples,
                                int input_hw, int steps, T lr);

} // namespace uniconv
