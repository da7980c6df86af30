#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "uniconv/analysis.hpp"
#include "uniconv/grad_check.hpp"
#include "uniconv/rfa.hpp"

using namespace uniconv;
using testutil::bit_equal;

namespace {

RfaConfig make_cfg(int n, int channels, std::vector<int> kernels, int small_k = 3) {
  RfaConfig cfg;
  cfg.layer_count = n;
  cfg.channels = channels;
  cfg.large_kernels = std::move(kernels);
  cfg.small_kernel = small_k;
  return cfg;
}

// Weights bounded away from zero and zero biases: gradient support equals the
// theoretical receptive field with probability 1.
template <typename T>
void randomize_support_weights(ParamStore<T> &store, Rng &rng) {
  for (auto &entry : store.items()) {
    const bool is_bias = entry.name.ends_with(".bias");
    for (std::size_t i = 0; i < entry.value.numel(); ++i)
      entry.value.data()[i] = is_bias ? T(0) : static_cast<T>(rng.uniform(0.1, 0.3));
  }
}

} // namespace

TEST_CASE("kernel_schedule: K = 2n + 5") {
  CHECK(kernel_schedule(1) == 7);
  CHECK(kernel_schedule(2) == 9);
  CHECK(kernel_schedule(3) == 11);
  CHECK(RfaConfig::formula_kernels(3) == std::vector<int>{7, 9, 11});
  CHECK_THROWS_AS(kernel_schedule(0), ConfigError);
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(make_cfg(3, 64, {7, 9, 11}).validate());
  CHECK_THROWS_AS(make_cfg(3, 10, {7, 9, 11}).validate(), ConfigError);  // 10 % 4 != 0
  CHECK_THROWS_AS(make_cfg(3, 64, {7, 9}).validate(), ConfigError);      // wrong count
  CHECK_THROWS_AS(make_cfg(3, 64, {7, 8, 11}).validate(), ConfigError);  // even kernel
  CHECK_THROWS_AS(make_cfg(3, 64, {7, 9, 11}, 9).validate(), ConfigError); // k > min K
  CHECK_THROWS_AS(make_cfg(3, 64, {1, 9, 11}).validate(), ConfigError);  // kernel < 3
}

TEST_CASE("theoretical_rf") {
  {
    TheoreticalRf rf = theoretical_rf(make_cfg(3, 8, {7, 9, 11}));
    CHECK(rf.amp_chain_rf == 25);
    CHECK(rf.dis_rf_per_layer == std::vector<int>{7, 9, 11});
  }
  CHECK(theoretical_rf(make_cfg(1, 4, {7})).amp_chain_rf == 7);
  CHECK(theoretical_rf(make_cfg(3, 8, {27, 29, 31})).amp_chain_rf == 85);
}

TEST_CASE("layer operator shapes and channel pyramid") {
  const RfaConfig cfg = make_cfg(3, 64, {7, 9, 11});
  Rng rng(3);
  ParamStore<double> store;
  RfaRefs refs = build_rfa(store, "rfa", cfg, rng);

  Tape<double> tape;
  Bound<double> b = bind(tape, store);

  SUBCASE("n=1: (1,16,14,14) x2 -> (1,32,14,14)") {
    NodeId a = tape.leaf(tensor_random_uniform<double>({1, 16, 14, 14}, -1, 1, rng));
    NodeId h = tape.leaf(tensor_random_uniform<double>({1, 16, 14, 14}, -1, 1, rng));
    NodeId y = layer_operator_forward(b, refs.layers[0], a, h, 1, cfg);
    CHECK(tape.value(y).shape() == Shape4{1, 32, 14, 14});
  }

  SUBCASE("n=2: (1,32,14,14)+(1,16,14,14) -> (1,48,14,14)") {
    NodeId a = tape.leaf(tensor_random_uniform<double>({1, 32, 14, 14}, -1, 1, rng));
    NodeId h = tape.leaf(tensor_random_uniform<double>({1, 16, 14, 14}, -1, 1, rng));
    NodeId y = layer_operator_forward(b, refs.layers[1], a, h, 2, cfg);
    CHECK(tape.value(y).shape() == Shape4{1, 48, 14, 14});
  }

  SUBCASE("zero inputs with zero biases give zero output") {
    NodeId a = tape.leaf(Tensor4<double>({1, 16, 14, 14}));
    NodeId h = tape.leaf(Tensor4<double>({1, 16, 14, 14}));
    NodeId y = layer_operator_forward(b, refs.layers[0], a, h, 1, cfg);
    const Tensor4<double> &v = tape.value(y);
    for (std::size_t i = 0; i < v.numel(); ++i)
      CHECK(v.data()[i] == 0.0);
  }

  SUBCASE("channel mismatch throws") {
    NodeId a = tape.leaf(Tensor4<double>({1, 20, 14, 14}));
    NodeId h = tape.leaf(Tensor4<double>({1, 16, 14, 14}));
    CHECK_THROWS_AS(layer_operator_forward(b, refs.layers[0], a, h, 1, cfg), ShapeError);
  }
}

TEST_CASE("rfa_forward preserves shape and running channels") {
  for (int n : {1, 2, 3}) {
    const int channels = 8 * (n + 1);
    std::vector<int> kernels;
    for (int i = 1; i <= n; ++i)
      kernels.push_back(kernel_schedule(i));
    const RfaConfig cfg = make_cfg(n, channels, kernels);

    Rng rng(n);
    ParamStore<double> store;
    RfaRefs refs = build_rfa(store, "rfa", cfg, rng);
    Tape<double> tape;
    Bound<double> b = bind(tape, store);
    NodeId x = tape.leaf(tensor_random_uniform<double>({1, channels, 14, 14}, -1, 1, rng));
    NodeId y = rfa_forward(b, refs, x, cfg);
    CHECK(tape.value(y).shape() == tape.value(x).shape());
  }

  // acceptance shape: (1,64,14,14) in, (1,64,14,14) out
  const RfaConfig cfg = make_cfg(3, 64, {7, 9, 11});
  Rng rng(17);
  ParamStore<double> store;
  RfaRefs refs = build_rfa(store, "rfa", cfg, rng);
  Tape<double> tape;
  Bound<double> b = bind(tape, store);
  NodeId x = tape.leaf(tensor_random_uniform<double>({1, 64, 14, 14}, -1, 1, rng));
  CHECK(tape.value(rfa_forward(b, refs, x, cfg)).shape() == Shape4{1, 64, 14, 14});
}

TEST_CASE("connectivity: which inputs reach which output channels") {
  // Perturb one input head; the untouched output group must be bit-identical.
  for (int n : {1, 2, 3}) {
    const int head_c = 2;
    const int channels = head_c * (n + 1);
    std::vector<int> kernels;
    for (int i = 1; i <= n; ++i)
      kernels.push_back(2 * i + 5);
    const RfaConfig cfg = make_cfg(n, channels, kernels);

    Rng rng(100 + n);
    ParamStore<double> store;
    RfaRefs refs = build_rfa(store, "rfa", cfg, rng);
    Tensor4<double> base = tensor_random_uniform<double>({1, channels, 15, 15}, -1, 1, rng);

    auto forward = [&](const Tensor4<double> &input) {
      Tape<double> tape;
      Bound<double> b = bind(tape, store);
      return tape.value(rfa_forward(b, refs, tape.leaf(input), cfg));
    };
    const Tensor4<double> y0 = forward(base);

    // Perturbing the last fresh head H_N must only change the last dis group.
    Tensor4<double> bump_last = base;
    bump_last.at(0, channels - 1, 7, 7) += 0.25;
    const Tensor4<double> y1 = forward(bump_last);
    const int dis_begin = n * head_c;
    bool amp_changed = false, dis_changed = false;
    for (int c = 0; c < channels; ++c)
      for (int h = 0; h < 15; ++h)
        for (int w = 0; w < 15; ++w)
          if (y0.at(0, c, h, w) != y1.at(0, c, h, w))
            (c < dis_begin ? amp_changed : dis_changed) = true;
    CHECK_FALSE(amp_changed);
    CHECK(dis_changed);

    // Perturbing A_1 must leave the last dis group untouched.
    Tensor4<double> bump_first = base;
    bump_first.at(0, 0, 7, 7) += 0.25;
    const Tensor4<double> y2 = forward(bump_first);
    amp_changed = dis_changed = false;
    for (int c = 0; c < channels; ++c)
      for (int h = 0; h < 15; ++h)
        for (int w = 0; w < 15; ++w)
          if (y0.at(0, c, h, w) != y2.at(0, c, h, w))
            (c < dis_begin ? amp_changed : dis_changed) = true;
    CHECK(amp_changed);
    CHECK_FALSE(dis_changed);
  }
}

TEST_CASE("gradient support boxes match the theoretical receptive field") {
  const RfaConfig cfg = make_cfg(3, 8, {7, 9, 11});
  Rng rng(7);
  ParamStore<double> store;
  RfaRefs refs = build_rfa(store, "rfa", cfg, rng);
  randomize_support_weights(store, rng);

  ForwardFn f = [&](Tape<double> &tape, NodeId x) {
    Bound<double> b = bind(tape, store);
    return rfa_forward(b, refs, x, cfg);
  };

  const std::vector<SupportGroup> groups{{"amp", 0, 6}, {"dis", 6, 8}};
  const std::vector<SupportBox> boxes = empirical_rf_support(f, {1, 8, 31, 31}, groups, rng);
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[0].height() == 25);
  CHECK(boxes[0].width() == 25);
  CHECK_FALSE(boxes[0].touches_border);
  CHECK(boxes[1].height() == 11);
  CHECK(boxes[1].width() == 11);

  const TheoreticalRf rf = theoretical_rf(cfg);
  CHECK(boxes[0].height() == rf.amp_chain_rf);
  CHECK(boxes[1].height() == rf.dis_rf_per_layer.back());
}

TEST_CASE("support boxes for N in {1,2} and alternate kernel triplets") {
  struct Case {
    int n;
    std::vector<int> kernels;
    int input;
  };
  for (const Case &c : {Case{1, {7}, 15}, Case{2, {7, 9}, 23}, Case{3, {5, 7, 9}, 25},
                        Case{3, {27, 29, 31}, 91}}) {
    const int head_c = 2;
    const RfaConfig cfg = make_cfg(c.n, head_c * (c.n + 1), c.kernels);
    Rng rng(50 + c.n);
    ParamStore<double> store;
    RfaRefs refs = build_rfa(store, "rfa", cfg, rng);
    randomize_support_weights(store, rng);

    ForwardFn f = [&](Tape<double> &tape, NodeId x) {
      Bound<double> b = bind(tape, store);
      return rfa_forward(b, refs, x, cfg);
    };
    const int amp_c = c.n * head_c;
    const std::vector<SupportBox> boxes = empirical_rf_support(
        f, {1, cfg.channels, c.input, c.input},
        {{"amp", 0, amp_c}, {"dis", amp_c, cfg.channels}}, rng);

    const TheoreticalRf rf = theoretical_rf(cfg);
    CHECK(boxes[0].height() == rf.amp_chain_rf);
    CHECK(boxes[0].width() == rf.amp_chain_rf);
    CHECK(boxes[1].height() == rf.dis_rf_per_layer.back());
  }
}

TEST_CASE("amp output is linear in the proj_a2 path") {
  const RfaConfig cfg = make_cfg(3, 8, {7, 9, 11});
  Rng rng(23);
  ParamStore<double> store;
  RfaRefs refs = build_rfa(store, "rfa", cfg, rng);
  Tensor4<double> x = tensor_random_uniform<double>({1, 8, 13, 13}, -1, 1, rng);

  auto forward = [&](const ParamStore<double> &params) {
    Tape<double> tape;
    Bound<double> b = bind(tape, params);
    return tape.value(rfa_forward(b, refs, tape.leaf(x), cfg));
  };
  const Tensor4<double> y1 = forward(store);

  // Double proj_a2's weights and bias in the last layer: the amp half of the
  // output doubles exactly (the dis half is untouched).
  ParamStore<double> doubled = store;
  const LayerOperatorRefs &lo3 = refs.layers[2];
  for (int idx : {lo3.proj_a2.weight, lo3.proj_a2.bias}) {
    auto &v = doubled.items()[static_cast<std::size_t>(idx)].value;
    for (std::size_t i = 0; i < v.numel(); ++i)
      v.data()[i] *= 2.0;
  }
  const Tensor4<double> y2 = forward(doubled);

  for (int c = 0; c < 6; ++c) // amp group
    for (int h = 0; h < 13; ++h)
      for (int w = 0; w < 13; ++w)
        CHECK(y2.at(0, c, h, w) == 2.0 * y1.at(0, c, h, w));
  for (int c = 6; c < 8; ++c) // dis group
    for (int h = 0; h < 13; ++h)
      for (int w = 0; w < 13; ++w)
        CHECK(y2.at(0, c, h, w) == y1.at(0, c, h, w));
}

TEST_CASE("full rfa_forward passes grad_check at 1e-4") {
  const RfaConfig cfg = make_cfg(3, 8, {7, 9, 11});
  Rng rng(31);
  ParamStore<double> store;
  RfaRefs refs = build_rfa(store, "rfa", cfg, rng);

  GradCheckOptions opt;
  opt.max_coords_per_input = 96;
  GradCheckReport r = grad_check(
      [&](Tape<double> &tape, const std::vector<NodeId> &in) {
        Bound<double> b = bind(tape, store);
        return rfa_forward(b, refs, in[0], cfg);
      },
      {Shape4{1, 8, 31, 31}}, rng, 1e-4, 1e-4, opt);
  CHECK(r.pass);
  MESSAGE("rfa max_rel_err = ", r.max_rel_err);
}

TEST_CASE("erf of a stacked aggregator pair decays from the center") {
  // Stride-1 aggregator stacks are what give the architecture its smoothly
  // decaying, centered gradient maps. Frozen regression at one seed.
  const RfaConfig cfg = make_cfg(3, 8, {7, 9, 11});
  Rng rng(7);
  std::vector<ParamStore<float>> stores(2);
  std::vector<RfaRefs> refs;
  for (auto &store : stores)
    refs.push_back(build_rfa(store, "rfa", cfg, rng));

  const int hw = 63;
  auto features = [&](Tape<float> &tape, NodeId x) {
    NodeId y = x;
    for (std::size_t s = 0; s < stores.size(); ++s) {
      Bound<float> b = bind(tape, stores[s]);
      y = rfa_forward(b, refs[s], y, cfg);
    }
    return y;
  };
  ErfInputFn<float> input_fn = [&](int, Rng &r) {
    return tensor_random_uniform<float>({1, 8, hw, hw}, 0.0, 1.0, r);
  };
  ErfMap map = compute_erf<float>(features, {1, 8, hw, hw}, 64, input_fn, 7, {hw / 2, hw / 2}, 2);
  AgdMetrics metrics = agd_metrics(map);

  const auto [ah, aw] = map.argmax();
  CHECK(std::abs(ah - 31) <= 2);
  CHECK(std::abs(aw - 31) <= 2);
  CHECK(metrics.gauss_r2 > 0.8);
  CHECK(metrics.monotonicity_violation < 0.3);
  // mass concentrates: half the mass inside far less than half the area
  CHECK(metrics.area_ratio.at(0.5) < 0.25);
  MESSAGE("stacked rfa erf: argmax (", ah, ",", aw, ") r2 ", metrics.gauss_r2,
          " monotonicity ", metrics.monotonicity_violation, " area50 ",
          metrics.area_ratio.at(0.5));
}

TEST_CASE("sequential dis topology changes the wiring but keeps shapes") {
  RfaConfig cfg = make_cfg(3, 8, {7, 9, 11});
  cfg.dis_topology = DisTopology::kSequential;
  Rng rng(41);
  ParamStore<double> store;
  RfaRefs refs = build_rfa(store, "rfa", cfg, rng);
  randomize_support_weights(store, rng);

  Tape<double> tape;
  Bound<double> b = bind(tape, store);
  NodeId x = tape.leaf(tensor_random_uniform<double>({1, 8, 31, 31}, -1, 1, rng));
  NodeId y = rfa_forward(b, refs, x, cfg);
  CHECK(tape.value(y).shape() == Shape4{1, 8, 31, 31});

  // Sequential composition widens the dis support to K_N + k - 1.
  ForwardFn f = [&](Tape<double> &tape2, NodeId xin) {
    Bound<double> b2 = bind(tape2, store);
    return rfa_forward(b2, refs, xin, cfg);
  };
  const std::vector<SupportBox> boxes =
      empirical_rf_support(f, {1, 8, 31, 31}, {{"dis", 6, 8}}, rng);
  CHECK(boxes[0].height() == 13);
}
