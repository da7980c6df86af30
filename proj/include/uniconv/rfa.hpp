#pragma once

#include <string>
#include <vector>

#include "uniconv/params.hpp"
#include "uniconv/rng.hpp"

namespace uniconv {

// Progressive large-kernel size for layer n (1-based): K = 2n + 5.
int kernel_schedule(int n);

// How the Discriminator combines its large- and small-kernel responses:
// kSum fuses DW_K(h) + DW_k(h); kSequential fuses DW_k(DW_K(h)).
enum class DisTopology { kSum, kSequential };

struct RfaConfig {
  int layer_count = 3;                 // N
  int channels = 0;                    // C, divisible by N+1
  std::vector<int> large_kernels;      // K_1..K_N, odd, >= 3
  int small_kernel = 3;                // k, odd, >= 3, <= min(K_n)
  DisTopology dis_topology = DisTopology::kSum;

  int head_channels() const { return channels / (layer_count + 1); }
  void validate() const; // throws ConfigError naming the violated field

  // Kernels from the K = 2n+5 schedule for a given layer count.
  static std::vector<int> formula_kernels(int layer_count);
  // Same config with a different channel count (used per stage).
  RfaConfig with_channels(int c) const;
};

// One Layer Operator: three input projections, the Amplifier's large
// depthwise kernel, the Discriminator's two depthwise kernels and its fuse.
struct LayerOperatorRefs {
  ConvRef proj_a1, proj_a2, proj_h;
  ConvRef dw_large_amp;
  ConvRef dw_large_dis, dw_small_dis;
  ConvRef fuse_dis;
};

struct RfaRefs {
  std::vector<ConvRef> head_projections; // N+1, channel-preserving pointwise
  std::vector<LayerOperatorRefs> layers; // N
};

// Parameter initialization for module builders.
struct InitSpec {
  enum class Kind { kTruncNormal, kUniform } kind = Kind::kTruncNormal;
  double std_dev = 0.02; // trunc-normal case, cut at +/- 2 std
  double lo = 0.1, hi = 0.3; // uniform case (receptive-field support runs)
  bool zero_bias = true;     // uniform case keeps biases at zero anyway
};

template <typename T>
RfaRefs build_rfa(ParamStore<T> &store, const std::string &prefix, const RfaConfig &cfg, Rng &rng,
                  Category category = Category::kRfa, const InitSpec &init = {});

// Amp: a2 (.) gelu(DW_K(a1)); Dis per cfg.dis_topology; output is
// concat(amp, dis) with (n+1) * C/(N+1) channels. `layer` is 1-based.
template <typename T>
NodeId layer_operator_forward(Bound<T> &b, const LayerOperatorRefs &refs, NodeId a_n, NodeId h_n,
                              int layer, const RfaConfig &cfg);

// Splits x into heads (A_1 first, then H_1..H_N), projects each head, then
// folds the Layer Operators. Output has the input's shape.
template <typename T>
NodeId rfa_forward(Bound<T> &b, const RfaRefs &refs, NodeId x, const RfaConfig &cfg);

struct TheoreticalRf {
  int amp_chain_rf = 0;                // 1 + sum(K_n - 1)
  std::vector<int> dis_rf_per_layer;   // K_n (the small kernel lies inside)
};

TheoreticalRf theoretical_rf(const RfaConfig &cfg);

} // namespace uniconv
