#include "uniconv/model.hpp"

#include <cmath>
#include <sstream>

namespace uniconv {

void ModelConfig::validate() const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (stage_channels[i] < 1) {
      throw ConfigError("model.stage_channels[" + std::to_string(i) + "] must be positive");
    }
    if (stage_channels[i] % (rfa.layer_count + 1) != 0) {
      std::ostringstream os;
      os << "model.stage_channels[" << i << "] (" << stage_channels[i]
         << ") must be divisible by rfa.layer_count+1 (" << rfa.layer_count + 1 << ")";
      throw ConfigError(os.str());
    }
    if (stage_depths[i] < 1)
      throw ConfigError("model.stage_depths[" + std::to_string(i) + "] must be positive");
  }
  if (stage_channels[0] % 2 != 0)
    throw ConfigError("model.stage_channels[0] must be even (stem halves it)");
  if (ffn_ratio <= 0.0)
    throw ConfigError("model.ffn_ratio must be positive");
  if (num_classes < 1)
    throw ConfigError("model.num_classes must be positive");
  for (int i = 0; i < 4; ++i)
    stage_rfa(i).validate();
}

int ModelConfig::ffn_hidden(int channels) const {
  const int hidden = static_cast<int>(std::llround(ffn_ratio * channels));
  if (hidden < 1)
    throw ConfigError("model.ffn_ratio too small: FFN hidden width would be < 1");
  return hidden;
}

namespace {

template <typename T>
Tensor4<T> weight_init(Shape4 shape, Rng &rng) {
  return tensor_random_normal<T>(shape, 0.02, rng);
}

template <typename T>
ConvRef add_conv(ParamStore<T> &store, const std::string &name, Category cat, int c_in, int c_out,
                 int kernel, int stride, int pad, int groups, Rng &rng) {
  ConvRef ref;
  ref.stride = stride;
  ref.pad = pad;
  ref.groups = groups;
  ref.weight =
      store.add(name + ".weight", cat, weight_init<T>(Shape4{c_out, c_in / groups, kernel, kernel}, rng));
  ref.bias = store.add(name + ".bias", cat, Tensor4<T>(Shape4{1, c_out, 1, 1}));
  return ref;
}

template <typename T>
NormRef add_norm(ParamStore<T> &store, const std::string &name, Category cat, int channels) {
  NormRef ref;
  ref.gamma = store.add(name + ".gamma", cat, Tensor4<T>::filled(Shape4{1, channels, 1, 1}, T(1)));
  ref.beta = store.add(name + ".beta", cat, Tensor4<T>(Shape4{1, channels, 1, 1}));
  return ref;
}

template <typename T>
int add_layer_scale(ParamStore<T> &store, const std::string &name, Category cat, int channels,
                    double init_value) {
  return store.add(name, cat,
                   Tensor4<T>::filled(Shape4{1, channels, 1, 1}, static_cast<T>(init_value)));
}

template <typename T>
BlockRefs build_block(ParamStore<T> &store, const std::string &prefix, const ModelConfig &cfg,
                      int channels, Rng &rng) {
  BlockRefs b;
  b.ln1 = add_norm<T>(store, prefix + ".ln1", Category::kRfa, channels);
  b.rfa = build_rfa(store, prefix + ".rfa", cfg.rfa.with_channels(channels), rng, Category::kRfa);
  b.scale1 = add_layer_scale<T>(store, prefix + ".scale1", Category::kRfa, channels,
                                cfg.layer_scale_init);

  b.ln2 = add_norm<T>(store, prefix + ".ln2", Category::kSmallConv, channels);
  b.dw_small = add_conv<T>(store, prefix + ".dw", Category::kSmallConv, channels, channels, 3, 1, 1,
                           channels, rng);
  b.scale2 = add_layer_scale<T>(store, prefix + ".scale2", Category::kSmallConv, channels,
                                cfg.layer_scale_init);

  const int hidden = cfg.ffn_hidden(channels);
  b.ln3 = add_norm<T>(store, prefix + ".ln3", Category::kFfn, channels);
  b.ffn_in = add_conv<T>(store, prefix + ".ffn.fc1", Category::kFfn, channels, hidden, 1, 1, 0, 1, rng);
  b.ffn_out = add_conv<T>(store, prefix + ".ffn.fc2", Category::kFfn, hidden, channels, 1, 1, 0, 1, rng);
  b.scale3 = add_layer_scale<T>(store, prefix + ".scale3", Category::kFfn, channels,
                                cfg.layer_scale_init);
  return b;
}

} // namespace

template <typename T> Model<T> build_model(const ModelConfig &cfg, Rng &rng) {
  cfg.validate();
  Model<T> m;
  m.config = cfg;
  ParamStore<T> &store = m.params;

  const int c0 = cfg.stage_channels[0];
  m.refs.stem.conv1 =
      add_conv<T>(store, "stem.conv1", Category::kStemDownsample, 3, c0 / 2, 3, 2, 1, 1, rng);
  m.refs.stem.ln1 = add_norm<T>(store, "stem.ln1", Category::kStemDownsample, c0 / 2);
  m.refs.stem.conv2 =
      add_conv<T>(store, "stem.conv2", Category::kStemDownsample, c0 / 2, c0, 3, 2, 1, 1, rng);
  m.refs.stem.ln2 = add_norm<T>(store, "stem.ln2", Category::kStemDownsample, c0);

  for (int stage = 0; stage < 4; ++stage) {
    const int c = cfg.stage_channels[static_cast<std::size_t>(stage)];
    std::vector<BlockRefs> blocks;
    for (int d = 0; d < cfg.stage_depths[static_cast<std::size_t>(stage)]; ++d) {
      std::ostringstream prefix;
      prefix << "stage" << stage + 1 << ".block" << d;
      blocks.push_back(build_block<T>(store, prefix.str(), cfg, c, rng));
    }
    m.refs.stages.push_back(std::move(blocks));
    if (stage < 3) {
      std::string dn = "down" + std::to_string(stage + 1);
      DownsampleRefs down;
      down.ln = add_norm<T>(store, dn + ".ln", Category::kStemDownsample, c);
      down.conv = add_conv<T>(store, dn + ".conv", Category::kStemDownsample, c,
                              cfg.stage_channels[static_cast<std::size_t>(stage) + 1], 3, 2, 1, 1, rng);
      m.refs.downsamples[static_cast<std::size_t>(stage)] = down;
    }
  }

  const int c3 = cfg.stage_channels[3];
  m.refs.head_ln = add_norm<T>(store, "head.ln", Category::kHead, c3);
  m.refs.head_w = store.add("head.fc.weight", Category::kHead,
                            weight_init<T>(Shape4{cfg.num_classes, c3, 1, 1}, rng));
  m.refs.head_b = store.add("head.fc.bias", Category::kHead, Tensor4<T>(Shape4{1, cfg.num_classes, 1, 1}));
  return m;
}

template <typename T> NodeId stem_forward(Bound<T> &b, const StemRefs &refs, NodeId x) {
  const Shape4 s = b.tape->value(x).shape();
  if (s.h % 4 != 0 || s.w % 4 != 0) {
    std::ostringstream os;
    os << "stem: spatial extents must be divisible by 4, got " << s.to_string();
    throw ShapeError(os.str());
  }
  NodeId y = apply_conv(b, refs.conv1, x);
  y = apply_layer_norm(b, refs.ln1, y);
  y = ops::gelu(*b.tape, y);
  y = apply_conv(b, refs.conv2, y);
  return apply_layer_norm(b, refs.ln2, y);
}

template <typename T> NodeId downsample_forward(Bound<T> &b, const DownsampleRefs &refs, NodeId x) {
  const Shape4 s = b.tape->value(x).shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    std::ostringstream os;
    os << "downsample: spatial extents must be even, got " << s.to_string();
    throw ShapeError(os.str());
  }
  return apply_conv(b, refs.conv, apply_layer_norm(b, refs.ln, x));
}

template <typename T>
NodeId basic_block_forward(Bound<T> &b, const BlockRefs &refs, NodeId x, const RfaConfig &rfa_cfg) {
  Tape<T> &tape = *b.tape;
  NodeId branch = rfa_forward(b, refs.rfa, apply_layer_norm(b, refs.ln1, x), rfa_cfg);
  NodeId y = ops::add(tape, x, ops::scale_channels(tape, branch, b.node(refs.scale1)));

  branch = apply_conv(b, refs.dw_small, apply_layer_norm(b, refs.ln2, y));
  y = ops::add(tape, y, ops::scale_channels(tape, branch, b.node(refs.scale2)));

  branch = apply_layer_norm(b, refs.ln3, y);
  branch = apply_conv(b, refs.ffn_in, branch);
  branch = ops::gelu(tape, branch);
  branch = apply_conv(b, refs.ffn_out, branch);
  return ops::add(tape, y, ops::scale_channels(tape, branch, b.node(refs.scale3)));
}

template <typename T> NodeId model_features_forward(Bound<T> &b, const Model<T> &m, NodeId x) {
  const Shape4 s = b.tape->value(x).shape();
  if (s.c != 3)
    throw ShapeError("model: input must have 3 channels, got " + s.to_string());
  if (s.h % 32 != 0 || s.w % 32 != 0) {
    std::ostringstream os;
    os << "model: input extents must be divisible by 32, got " << s.to_string();
    throw ShapeError(os.str());
  }
  NodeId y = stem_forward(b, m.refs.stem, x);
  for (int stage = 0; stage < 4; ++stage) {
    const RfaConfig rfa_cfg = m.config.stage_rfa(stage);
    for (const BlockRefs &block : m.refs.stages[static_cast<std::size_t>(stage)])
      y = basic_block_forward(b, block, y, rfa_cfg);
    if (stage < 3)
      y = downsample_forward(b, m.refs.downsamples[static_cast<std::size_t>(stage)], y);
  }
  return y;
}

template <typename T> NodeId model_forward(Bound<T> &b, const Model<T> &m, NodeId x) {
  NodeId y = model_features_forward(b, m, x);
  y = ops::global_avg_pool(*b.tape, y);
  y = apply_layer_norm(b, m.refs.head_ln, y);
  return ops::linear(*b.tape, y, b.node(m.refs.head_w), b.node(m.refs.head_b));
}

template <typename T>
void sgd_step(ParamStore<T> &store, const Bound<T> &bound, const Gradients<T> &grads, T lr) {
  if (bound.nodes.size() != store.size())
    throw TapeError("sgd_step: binding does not match the parameter store");
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor4<T> &p = store.items()[i].value;
    const Tensor4<T> &g = grads.at(bound.nodes[i]);
    if (!(g.shape() == p.shape()))
      throw ShapeError("sgd_step: gradient shape mismatch for " + store.items()[i].name);
    for (std::size_t j = 0; j < p.numel(); ++j)
      p.data()[j] -= lr * g.data()[j];
  }
}

template <typename T> OverfitBatch<T> make_overfit_batch(int n, int hw, Rng &rng) {
  OverfitBatch<T> batch{Tensor4<T>(Shape4{n, 3, hw, hw}), std::vector<int>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    batch.labels[static_cast<std::size_t>(i)] = label;
    const bool magenta = label == 0;
    for (int h = 0; h < hw; ++h)
      for (int w = 0; w < hw; ++w) {
        batch.inputs.at(i, 0, h, w) = static_cast<T>(rng.uniform(magenta ? 0.8 : 0.0, magenta ? 1.0 : 0.2));
        batch.inputs.at(i, 1, h, w) = static_cast<T>(rng.uniform(magenta ? 0.0 : 0.8, magenta ? 0.2 : 1.0));
        batch.inputs.at(i, 2, h, w) = static_cast<T>(rng.uniform(magenta ? 0.8 : 0.0, magenta ? 1.0 : 0.2));
      }
  }
  return batch;
}

template <typename T>
std::vector<double> run_overfit(const ModelConfig &cfg, std::uint64_t seed, int n_samples,
                                int input_hw, int steps, T lr) {
  Rng rng(seed);
  Model<T> m = build_model<T>(cfg, rng);
  Rng data_rng = Rng(seed).child(1);
  OverfitBatch<T> batch = make_overfit_batch<T>(n_samples, input_hw, data_rng);

  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(steps) + 1);
  for (int step = 0; step < steps; ++step) {
    Tape<T> tape;
    Bound<T> b = bind(tape, m.params);
    NodeId logits = model_forward(b, m, tape.leaf(batch.inputs));
    ops::XentResult<T> r = ops::softmax_cross_entropy(tape.value(logits), batch.labels);
    losses.push_back(static_cast<double>(r.loss));
    Gradients<T> grads = tape.backward(logits, r.dlogits);
    sgd_step(m.params, b, grads, lr);
  }
  {
    Tape<T> tape;
    Bound<T> b = bind(tape, m.params);
    NodeId logits = model_forward(b, m, tape.leaf(batch.inputs));
    losses.push_back(
        static_cast<double>(ops::softmax_cross_entropy(tape.value(logits), batch.labels).loss));
  }
  return losses;
}

#define UNICONV_INSTANTIATE_MODEL(T)                                                               \
  template Model<T> build_model<T>(const ModelConfig &, Rng &);                                    \
  template OverfitBatch<T> make_overfit_batch<T>(int, int, Rng &);                                 \
  template std::vector<double> run_overfit<T>(const ModelConfig &, std::uint64_t, int, int, int,   \
                                              T);                                                  \
  template NodeId stem_forward<T>(Bound<T> &, const StemRefs &, NodeId);                           \
  template NodeId downsample_forward<T>(Bound<T> &, const DownsampleRefs &, NodeId);               \
  template NodeId basic_block_forward<T>(Bound<T> &, const BlockRefs &, NodeId,                    \
                                         const RfaConfig &);                                       \
  template NodeId model_features_forward<T>(Bound<T> &, const Model<T> &, NodeId);                 \
  template NodeId model_forward<T>(Bound<T> &, const Model<T> &, NodeId);                          \
  template void sgd_step<T>(ParamStore<T> &, const Bound<T> &, const Gradients<T> &, T);

UNICONV_INSTANTIATE_MODEL(float)
UNICONV_INSTANTIATE_MODEL(double)

#undef UNICONV_INSTANTIATE_MODEL

} // namespace uniconv
