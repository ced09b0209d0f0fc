#include <doctest.h>

#include "dad/attention.hpp"
#include "test_util.hpp"

using dad::ChannelAttention;
using dad::DualResidualAttention;
using dad::Index;
using dad::PositionAttention;
using dad::Rng;
using dad::Tensor;
using dad::Value;
using dad_test::check_grads;
using dad_test::rand_tensor;

TEST_CASE("position attention: identity at zero scale, shape, row sums") {
  Rng rng(31);
  PositionAttention<float> pam(16, rng);
  auto x = Value<float>::constant(rand_tensor<float>({1, 16, 13, 13}, rng));

  auto y = pam.forward(x);
  CHECK(y.shape() == std::vector<Index>{1, 16, 13, 13});
  CHECK((y.val().array() == x.val().array()).all());  // gamma starts at 0

  auto att = pam.attention_matrix(x);
  REQUIRE(att.shape() == std::vector<Index>{1, 169, 169});
  for (Index r = 0; r < 169; ++r) {
    double s = 0;
    for (Index c = 0; c < 169; ++c) s += att.val()[r * 169 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("position attention guards the spatial extent") {
  Rng rng(32);
  PositionAttention<float> pam(8, rng, /*max_positions=*/64);
  auto big = Value<float>::constant(rand_tensor<float>({1, 8, 9, 9}, rng));
  CHECK_THROWS_AS((void)pam.forward(big), dad::ResourceError);
  CHECK_THROWS_WITH_AS((void)pam.forward(big), doctest::Contains("limit of 64"), dad::ResourceError);
}

TEST_CASE("channel attention: identity at zero scale, affinity rows sum to 1") {
  Rng rng(33);
  ChannelAttention<float> cam(96);
  auto x = Value<float>::constant(rand_tensor<float>({1, 96, 13, 13}, rng));
  auto y = cam.forward(x);
  CHECK(y.shape() == std::vector<Index>{1, 96, 13, 13});
  CHECK((y.val().array() == x.val().array()).all());

  auto att = cam.attention_matrix(x);
  REQUIRE(att.shape() == std::vector<Index>{1, 96, 96});
  for (Index r = 0; r < 96; ++r) {
    double s = 0;
    for (Index c = 0; c < 96; ++c) s += att.val()[r * 96 + c];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("identity at zero: branch outputs equal their conv blocks alone") {
  Rng rng(34);
  DualResidualAttention<float> dra(12, rng);
  dra.set_training(false);
  auto x = Value<float>::constant(rand_tensor<float>({2, 12, 6, 6}, rng));
  auto via_branch = dra.position_block().forward(dra.position().forward(x));
  auto direct = dra.position_block().forward(x);
  CHECK((via_branch.val().array() == direct.val().array()).all());
  auto via_chan = dra.channel_block().forward(dra.channel().forward(x));
  auto direct_chan = dra.channel_block().forward(x);
  CHECK((via_chan.val().array() == direct_chan.val().array()).all());
}

TEST_CASE("dual attention output keeps the input shape") {
  Rng rng(35);
  DualResidualAttention<float> dra(96, rng);
  auto x = Value<float>::constant(rand_tensor<float>({1, 96, 13, 13}, rng));
  CHECK(dra.forward(x).shape() == std::vector<Index>{1, 96, 13, 13});
}

TEST_CASE("at initialization the module is linear (superposition probe)") {
  Rng rng(36);
  DualResidualAttention<double> dra(8, rng, /*with_activation=*/false);
  dra.set_training(false);
  Tensor<double> xt = rand_tensor<double>({1, 8, 6, 6}, rng);
  Tensor<double> yt = rand_tensor<double>({1, 8, 6, 6}, rng);
  Tensor<double> combo(xt.shape(), 2.0 * xt.array() - 0.5 * yt.array());

  auto fx = dra.forward(Value<double>::constant(xt));
  auto fy = dra.forward(Value<double>::constant(yt));
  auto fc = dra.forward(Value<double>::constant(combo));
  double max_rel = 0;
  for (Index i = 0; i < fc.val().numel(); ++i) {
    double want = 2.0 * fx.val()[i] - 0.5 * fy.val()[i];
    max_rel = std::max(max_rel, std::abs(fc.val()[i] - want) / std::max(1.0, std::abs(want)));
  }
  CHECK(max_rel < 1e-5);
}

TEST_CASE("gradients flow to the residual scales and projections") {
  Rng rng(37);
  auto x = Value<double>::leaf(rand_tensor<double>({1, 8, 6, 6}, rng), true);
  DualResidualAttention<double> dra(8, rng);

  auto loss = dad::sum_all(dad::mul(dra.forward(x), x));
  loss.backward();
  auto gp = dra.position().gamma();
  auto gc = dra.channel().gamma();
  REQUIRE(gp.has_grad());
  REQUIRE(gc.has_grad());
  CHECK(gp.grad()[0] != 0.0);
  CHECK(gc.grad()[0] != 0.0);

  // finite-difference check on gamma_pos and one projection weight
  std::vector<Value<double>> params{gp, gc, dra.position().value_weight()};
  check_grads(params,
              [&](const std::vector<Value<double>>&) {
                return dad::sum_all(dad::mul(dra.forward(x), x));
              },
              1e-3, 1e-6);
}
