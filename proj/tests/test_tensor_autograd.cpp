#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "uniconv/grad_check.hpp"
#include "uniconv/ops.hpp"
#include "uniconv/rng.hpp"
#include "uniconv/tape.hpp"

using namespace uniconv;
using testutil::bit_equal;
using testutil::make;

TEST_CASE("tensor construction") {
  Tensor4<float> t = make<float>({1, 1, 1, 1}, {5.0f});
  CHECK(t.at(0, 0, 0, 0) == 5.0f);

  CHECK_NOTHROW(make<float>({1, 2, 2, 2}, std::vector<float>(8, 0.0f)));
  CHECK_THROWS_AS(make<float>({1, 2, 2, 2}, std::vector<float>(7, 0.0f)), ShapeError);
  CHECK_THROWS_AS(Tensor4<float>(Shape4{0, 1, 1, 1}), ShapeError);

  // The error names expected vs actual lengths.
  try {
    make<float>({1, 2, 2, 2}, std::vector<float>(7, 0.0f));
  } catch (const ShapeError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("7") != std::string::npos);
    CHECK(msg.find("8") != std::string::npos);
  }
}

TEST_CASE("truncated normal init") {
  Rng rng(7);
  Tensor4<float> t = tensor_random_normal<float>({1, 64, 8, 8}, 0.02, rng);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    CHECK(t.data()[i] >= -0.04f);
    CHECK(t.data()[i] <= 0.04f);
  }

  Rng rng_a(7), rng_b(7);
  Tensor4<float> a = tensor_random_normal<float>({1, 64, 8, 8}, 0.02, rng_a);
  Tensor4<float> b = tensor_random_normal<float>({1, 64, 8, 8}, 0.02, rng_b);
  CHECK(bit_equal(a, b));

  Rng rng_zero(3);
  Tensor4<float> z = tensor_random_normal<float>({1, 2, 3, 3}, 0.0, rng_zero);
  for (std::size_t i = 0; i < z.numel(); ++i)
    CHECK(z.data()[i] == 0.0f);
}

TEST_CASE("rng stream is reproducible and child streams differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i)
    CHECK(a.next_u64() == b.next_u64());
  Rng c(42);
  CHECK(c.child(0).next_u64() != c.child(1).next_u64());
}

TEST_CASE("split_channels / concat_channels") {
  Rng rng(1);
  Tensor4<double> x = tensor_random_uniform<double>({1, 8, 4, 4}, -1.0, 1.0, rng);

  Tape<double> tape;
  NodeId xid = tape.leaf(x);

  SUBCASE("even split") {
    auto parts = ops::split_channels(tape, xid, {2, 2, 2, 2});
    REQUIRE(parts.size() == 4);
    for (const NodeId &p : parts)
      CHECK(tape.value(p).shape() == Shape4{1, 2, 4, 4});
  }

  SUBCASE("identity split") {
    auto parts = ops::split_channels(tape, xid, {8});
    REQUIRE(parts.size() == 1);
    CHECK(bit_equal(tape.value(parts[0]), x));
  }

  SUBCASE("sum mismatch") {
    CHECK_THROWS_AS(ops::split_channels(tape, xid, {3, 3, 3}), ShapeError);
  }

  SUBCASE("round trip is bit exact") {
    auto parts = ops::split_channels(tape, xid, {1, 3, 4});
    NodeId back = ops::concat_channels(tape, parts);
    CHECK(bit_equal(tape.value(back), x));
  }

  SUBCASE("concat shape and mismatch error") {
    Tape<double> t2;
    NodeId a = t2.leaf(Tensor4<double>(Shape4{1, 2, 4, 4}));
    NodeId b = t2.leaf(Tensor4<double>(Shape4{1, 6, 4, 4}));
    NodeId y = ops::concat_channels(t2, {a, b});
    CHECK(t2.value(y).shape() == Shape4{1, 8, 4, 4});

    NodeId bad = t2.leaf(Tensor4<double>(Shape4{1, 2, 5, 4}));
    CHECK_THROWS_AS(ops::concat_channels(t2, {a, bad}), ShapeError);
  }
}

TEST_CASE("backward: product rule and identity chain") {
  Rng rng(11);
  Tensor4<double> xv = tensor_random_uniform<double>({1, 2, 3, 3}, -1.0, 1.0, rng);
  Tensor4<double> wv = tensor_random_uniform<double>({1, 2, 3, 3}, -1.0, 1.0, rng);

  Tape<double> tape;
  NodeId x = tape.leaf(xv);
  NodeId w = tape.leaf(wv);
  NodeId y = ops::elementwise_mul(tape, x, w);

  Tensor4<double> ones = Tensor4<double>::filled(xv.shape(), 1.0);
  Gradients<double> g = tape.backward(y, ones);
  CHECK(bit_equal(g.at(x), wv));
  CHECK(bit_equal(g.at(w), xv));

  // Identity chain: split into one part and concat back.
  Tape<double> tape2;
  NodeId x2 = tape2.leaf(xv);
  NodeId y2 = ops::concat_channels(tape2, ops::split_channels(tape2, x2, {2}));
  Gradients<double> g2 = tape2.backward(y2, ones);
  CHECK(bit_equal(g2.at(x2), ones));
}

TEST_CASE("backward: unreachable leaves get zero gradients, bad ids throw") {
  Tape<double> tape;
  NodeId x = tape.leaf(Tensor4<double>::filled({1, 1, 2, 2}, 3.0));
  NodeId unused = tape.leaf(Tensor4<double>::filled({1, 1, 5, 5}, 1.0));
  NodeId y = ops::gelu(tape, x);

  Gradients<double> g = tape.backward(y, Tensor4<double>::filled({1, 1, 2, 2}, 1.0));
  const Tensor4<double> &gu = g.at(unused);
  CHECK(gu.shape() == Shape4{1, 1, 5, 5});
  for (std::size_t i = 0; i < gu.numel(); ++i)
    CHECK(gu.data()[i] == 0.0);

  CHECK_THROWS_AS(tape.backward(NodeId{999}, Tensor4<double>({1, 1, 1, 1})), TapeError);
  CHECK_THROWS_AS(tape.backward(y, Tensor4<double>({1, 1, 3, 3})), ShapeError);
  CHECK_THROWS_AS(g.at(NodeId{999}), TapeError);
}

TEST_CASE("backward seed linearity is exact for linear ops on integer data") {
  // Integer-valued tensors and power-of-two seed weights make every
  // intermediate product exactly representable, so distributivity holds
  // bitwise in 64-bit.
  Rng rng(5);
  Tensor4<double> xv({1, 4, 5, 5});
  for (std::size_t i = 0; i < xv.numel(); ++i)
    xv.data()[i] = std::floor(rng.uniform(-4.0, 4.0));
  Tensor4<double> wv({4, 1, 3, 3});
  for (std::size_t i = 0; i < wv.numel(); ++i)
    wv.data()[i] = std::floor(rng.uniform(-2.0, 2.0));

  auto build = [&](Tape<double> &tape, NodeId &x) {
    x = tape.leaf(xv);
    NodeId w = tape.leaf(wv);
    NodeId y = ops::conv2d(tape, x, w, std::nullopt, kernels::ConvMeta{1, 1, 4});
    auto parts = ops::split_channels(tape, y, {2, 2});
    return ops::concat_channels(tape, {parts[1], parts[0]});
  };

  Tape<double> tape;
  NodeId x;
  NodeId y = build(tape, x);
  const Shape4 ys = tape.value(y).shape();

  Tensor4<double> g1(ys), g2(ys);
  for (std::size_t i = 0; i < g1.numel(); ++i) {
    g1.data()[i] = std::floor(rng.uniform(-3.0, 3.0));
    g2.data()[i] = std::floor(rng.uniform(-3.0, 3.0));
  }
  const double a = 2.0, b = 4.0;
  Tensor4<double> combo(ys);
  for (std::size_t i = 0; i < combo.numel(); ++i)
    combo.data()[i] = a * g1.data()[i] + b * g2.data()[i];

  Tensor4<double> lhs = tape.backward(y, combo).at(x);
  Tensor4<double> r1 = tape.backward(y, g1).at(x);
  Tensor4<double> r2 = tape.backward(y, g2).at(x);
  for (std::size_t i = 0; i < lhs.numel(); ++i)
    CHECK(lhs.data()[i] == a * r1.data()[i] + b * r2.data()[i]);
}

TEST_CASE("forward and backward are deterministic") {
  Rng rng(9);
  Tensor4<double> xv = tensor_random_uniform<double>({2, 4, 6, 6}, -1.0, 1.0, rng);
  Tensor4<double> wv = tensor_random_uniform<double>({4, 1, 3, 3}, -1.0, 1.0, rng);

  auto run = [&](Tensor4<double> *grad_out) {
    Tape<double> tape;
    NodeId x = tape.leaf(xv);
    NodeId w = tape.leaf(wv);
    NodeId y = ops::gelu(tape, ops::conv2d(tape, x, w, std::nullopt, kernels::ConvMeta{1, 1, 4}));
    Tensor4<double> value = tape.value(y);
    if (grad_out)
      *grad_out = tape.backward(y, Tensor4<double>::filled(value.shape(), 1.0)).at(x);
    return value;
  };

  Tensor4<double> ga, gb;
  CHECK(bit_equal(run(&ga), run(&gb)));
  CHECK(bit_equal(ga, gb));
}

TEST_CASE("grad_check oracle: elementwise multiply is near-exact") {
  Rng rng(13);
  GradCheckReport r = grad_check(
      [](Tape<double> &tape, const std::vector<NodeId> &in) {
        return ops::elementwise_mul(tape, in[0], in[1]);
      },
      {Shape4{1, 3, 4, 4}, Shape4{1, 3, 4, 4}}, rng, 1e-4, 1e-6);
  CHECK(r.pass);
  CHECK(r.max_rel_err < 1e-7);
}

TEST_CASE("grad_check: depthwise 7x7 and layer norm pass at 1e-5") {
  Rng rng(17);
  Tensor4<double> w = tensor_random_uniform<double>({4, 1, 7, 7}, -0.5, 0.5, rng);
  GradCheckReport conv = grad_check(
      [&](Tape<double> &tape, const std::vector<NodeId> &in) {
        NodeId wid = tape.leaf(w);
        return ops::conv2d(tape, in[0], wid, std::nullopt, kernels::ConvMeta{1, 3, 4});
      },
      {Shape4{1, 4, 9, 9}}, rng, 1e-4, 1e-5);
  CHECK(conv.pass);

  GradCheckReport ln = grad_check(
      [](Tape<double> &tape, const std::vector<NodeId> &in) {
        return ops::layer_norm_channels(tape, in[0], in[1], in[2]);
      },
      {Shape4{2, 5, 3, 3}, Shape4{1, 5, 1, 1}, Shape4{1, 5, 1, 1}}, rng, 1e-4, 1e-5);
  CHECK(ln.pass);
}
