#include <doctest.h>

#include "dad/decoder.hpp"
#include "dad/loss.hpp"
#include "dad/optim.hpp"
#include "test_util.hpp"

using dad::BackgroundFeatures;
using dad::DecoderOutputs;
using dad::DifferenceAwareDecoder;
using dad::DifferenceAwareExtractor;
using dad::DifferenceEnhancement;
using dad::DifferenceGuidance;
using dad::GuideMap;
using dad::GuideMapGenerator;
using dad::Index;
using dad::MiddleFeatureFusion;
using dad::ModelConfig;
using dad::Rng;
using dad::Tensor;
using dad::Value;
using dad_test::rand_tensor;

namespace {

ModelConfig desk_config() {
  ModelConfig cfg;
  cfg.backbone = "synthetic";
  cfg.seed = 7;
  return cfg;
}

template <typename S>
S sigmoid_ref(S z) {
  return z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
}

}  // namespace

TEST_CASE("guide map generator: output at the low level's resolution") {
  Rng rng(51);
  GuideMapGenerator<float> gmg({8}, 40, dad::FemVariant::fem, rng);
  auto low = Value<float>::constant(rand_tensor<float>({1, 8, 32, 32}, rng));
  auto high = Value<float>::constant(rand_tensor<float>({1, 40, 2, 2}, rng));
  GuideMap<float> g = gmg.forward({low}, high);
  CHECK(g.logits.shape() == std::vector<Index>{1, 1, 32, 32});
}

TEST_CASE("guide map generator: 416 input with the default 5-level split gives a 208x208 map") {
  Rng rng(66);
  // level-1/level-5 resolutions of a stride-2..32 pyramid on a 416 input
  GuideMapGenerator<float> gmg({8}, 16, dad::FemVariant::fem, rng);
  auto low = Value<float>::constant(rand_tensor<float>({1, 8, 208, 208}, rng));
  auto high = Value<float>::constant(rand_tensor<float>({1, 16, 13, 13}, rng));
  GuideMap<float> g = gmg.forward({low}, high);
  CHECK(g.logits.shape() == std::vector<Index>{1, 1, 208, 208});
}

TEST_CASE("guide map generator: gradient reaches both input branches") {
  Rng rng(52);
  GuideMapGenerator<double> gmg({6}, 10, dad::FemVariant::fem, rng);
  auto low = Value<double>::leaf(rand_tensor<double>({1, 6, 16, 16}, rng), true);
  auto high = Value<double>::leaf(rand_tensor<double>({1, 10, 4, 4}, rng), true);
  GuideMap<double> g = gmg.forward({low}, high);
  dad::sum_all(dad::mul(g.logits, g.logits)).backward();
  CHECK(low.grad().array().abs().sum() > 0);
  CHECK(high.grad().array().abs().sum() > 0);
}

TEST_CASE("middle feature fusion: base size per fusion mode, 96 channels") {
  Rng rng(53);
  std::vector<Index> chans{16, 24, 32}, strides{4, 8, 16};
  auto f2 = Value<float>::constant(rand_tensor<float>({1, 16, 16, 16}, rng));
  auto f3 = Value<float>::constant(rand_tensor<float>({1, 24, 8, 8}, rng));
  auto f4 = Value<float>::constant(rand_tensor<float>({1, 32, 4, 4}, rng));

  MiddleFeatureFusion<float> mid(chans, strides, dad::FusionMode::middle, dad::FemVariant::fem, false,
                                 rng);
  auto fm = mid.forward({f2, f3, f4});
  CHECK(fm.features.shape() == std::vector<Index>{1, 96, 8, 8});

  MiddleFeatureFusion<float> bu(chans, strides, dad::FusionMode::bottom_up, dad::FemVariant::fem, false,
                                rng);
  CHECK(bu.forward({f2, f3, f4}).features.shape() == std::vector<Index>{1, 96, 16, 16});

  MiddleFeatureFusion<float> td(chans, strides, dad::FusionMode::top_down, dad::FemVariant::fem, false,
                                rng);
  CHECK(td.forward({f2, f3, f4}).features.shape() == std::vector<Index>{1, 96, 4, 4});
}

TEST_CASE("middle feature fusion: all-zero inputs stay finite in inference mode") {
  Rng rng(54);
  MiddleFeatureFusion<float> mff({16, 24, 32}, {4, 8, 16}, dad::FusionMode::middle,
                                 dad::FemVariant::fem, false, rng);
  mff.set_training(false);
  auto z2 = Value<float>::constant(Tensor<float>::zeros({1, 16, 16, 16}));
  auto z3 = Value<float>::constant(Tensor<float>::zeros({1, 24, 8, 8}));
  auto z4 = Value<float>::constant(Tensor<float>::zeros({1, 32, 4, 4}));
  auto out = mff.forward({z2, z3, z4});
  CHECK(out.features.val().array().allFinite());
}

TEST_CASE("difference guidance: beta=0 reduces to plain upsampling, rows sum to 1") {
  Rng rng(55);
  DifferenceGuidance<float> dgm;
  Tensor<float> ft = rand_tensor<float>({1, 8, 2, 2}, rng);
  GuideMap<float> m{Value<float>::constant(rand_tensor<float>({1, 1, 8, 8}, rng))};
  BackgroundFeatures<float> f{Value<float>::constant(ft)};

  auto e = dgm.forward(m, f);
  Tensor<float> up = dad::resize_bilinear_tensor(ft, 8, 8);
  CHECK(e.shape() == std::vector<Index>{1, 8, 8, 8});
  CHECK((e.val().array() == up.array()).all());  // beta starts at zero

  auto r = dgm.attention_matrix(Value<float>::constant(up), m.logits);
  REQUIRE(r.shape() == std::vector<Index>{1, 8, 8});
  for (Index i = 0; i < 8; ++i) {
    double s = 0;
    for (Index j = 0; j < 8; ++j) s += r.val()[i * 8 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("difference guidance matches the loop oracle") {
  Rng rng(56);
  DifferenceGuidance<double> dgm;
  dgm.beta().val()[0] = 0.37;
  const Index c = 8, hg = 8, wg = 8, n = hg * wg;
  Tensor<double> ft = rand_tensor<double>({1, c, 2, 2}, rng);
  Tensor<double> mt = rand_tensor<double>({1, 1, hg, wg}, rng, -2, 2);
  auto e = dgm.forward(GuideMap<double>{Value<double>::constant(mt)},
                       BackgroundFeatures<double>{Value<double>::constant(ft)});

  // oracle: explicit loops over Q*G, row softmax, R*K, beta*A + F0
  Tensor<double> f0 = dad::resize_bilinear_tensor(ft, hg, wg);
  double q[c][n], g[n][c];
  for (Index ci = 0; ci < c; ++ci)
    for (Index i = 0; i < n; ++i) {
      q[ci][i] = f0[ci * n + i];
      g[i][ci] = mt[i];  // broadcast copy of the single-channel guide
    }
  double r[c][c];
  for (Index i = 0; i < c; ++i) {
    double mx = -1e300;
    for (Index j = 0; j < c; ++j) {
      r[i][j] = 0;
      for (Index k = 0; k < n; ++k) r[i][j] += q[i][k] * g[k][j];
      mx = std::max(mx, r[i][j]);
    }
    double sum = 0;
    for (Index j = 0; j < c; ++j) {
      r[i][j] = std::exp(r[i][j] - mx);
      sum += r[i][j];
    }
    for (Index j = 0; j < c; ++j) r[i][j] /= sum;
  }
  double max_err = 0;
  for (Index ci = 0; ci < c; ++ci)
    for (Index i = 0; i < n; ++i) {
      double a = 0;
      for (Index j = 0; j < c; ++j) a += r[ci][j] * q[j][i];
      double want = 0.37 * a + f0[ci * n + i];
      max_err = std::max(max_err, std::abs(want - e.val()[ci * n + i]));
    }
  CHECK(max_err < 1e-5);
}

TEST_CASE("difference guidance validates sizes and the position budget") {
  Rng rng(57);
  DifferenceGuidance<float> tiny(/*max_positions=*/16);
  GuideMap<float> m{Value<float>::constant(rand_tensor<float>({1, 1, 8, 8}, rng))};
  BackgroundFeatures<float> f{Value<float>::constant(rand_tensor<float>({1, 4, 2, 2}, rng))};
  CHECK_THROWS_AS((void)tiny.forward(m, f), dad::ResourceError);

  DifferenceGuidance<float> dgm;
  BackgroundFeatures<float> ragged{Value<float>::constant(rand_tensor<float>({1, 4, 3, 3}, rng))};
  CHECK_THROWS_AS((void)dgm.forward(m, ragged), dad::ShapeError);
}

TEST_CASE("difference enhancement: degenerate parameter settings") {
  Rng rng(58);
  DifferenceEnhancement<float> dem(4, dad::DemMode::f_minus_b, rng);
  Tensor<float> et = rand_tensor<float>({1, 4, 6, 6}, rng);
  Tensor<float> mt = rand_tensor<float>({1, 1, 6, 6}, rng, -2, 2);
  auto e = Value<float>::constant(et);

  SUBCASE("theta=1, eps=0 gives exactly P*E") {
    dem.epsilon().val()[0] = 0.0f;
    auto [d, refined] = dem.forward(e, GuideMap<float>{Value<float>::constant(mt)});
    for (Index ci = 0; ci < 4; ++ci)
      for (Index i = 0; i < 36; ++i) {
        float want = sigmoid_ref(mt[i]) * et[ci * 36 + i];
        CHECK(d.val()[ci * 36 + i] == want);
      }
  }

  SUBCASE("zero logits make the split cancel exactly") {
    auto zero_guide = GuideMap<float>{Value<float>::constant(Tensor<float>::zeros({1, 1, 6, 6}))};
    auto [d, refined] = dem.forward(e, zero_guide);
    for (Index i = 0; i < d.val().numel(); ++i) CHECK(d.val()[i] == 0.0f);
  }
}

TEST_CASE("difference enhancement matches the elementwise oracle") {
  Rng rng(59);
  DifferenceEnhancement<double> dem(4, dad::DemMode::f_minus_b, rng);
  dem.theta().val()[0] = 1.3;
  dem.epsilon().val()[0] = 0.6;
  Tensor<double> et = rand_tensor<double>({1, 4, 6, 6}, rng);
  Tensor<double> mt = rand_tensor<double>({1, 1, 6, 6}, rng, -3, 3);
  auto [d, refined] = dem.forward(Value<double>::constant(et), GuideMap<double>{Value<double>::constant(mt)});
  double max_err = 0;
  for (Index ci = 0; ci < 4; ++ci)
    for (Index i = 0; i < 36; ++i) {
      double p = sigmoid_ref(mt[i]);
      double want = 1.3 * p * et[ci * 36 + i] - 0.6 * (1.0 - p) * et[ci * 36 + i];
      max_err = std::max(max_err, std::abs(want - d.val()[ci * 36 + i]));
    }
  CHECK(max_err < 1e-6);
}

TEST_CASE("subtraction equals addition with a negated scale, bit for bit") {
  Rng rng(60);
  DifferenceEnhancement<double> dem(3, dad::DemMode::f_minus_b, rng);
  dem.theta().val()[0] = 0.9;
  dem.epsilon().val()[0] = 0.7;
  Tensor<double> et = rand_tensor<double>({1, 3, 5, 5}, rng);
  Tensor<double> mt = rand_tensor<double>({1, 1, 5, 5}, rng, -2, 2);
  auto e = Value<double>::constant(et);
  auto m = Value<double>::constant(mt);
  auto [d, refined] = dem.forward(e, GuideMap<double>{m});

  // rebuild theta*Df + (-epsilon)*Db through the same kernels
  auto p = dad::sigmoid(m);
  auto df = dad::mul_broadcast_channel(p, e);
  auto db = dad::mul_broadcast_channel(dad::add_scalar(dad::neg(p), 1.0), e);
  auto neg_eps = Value<double>::constant(Tensor<double>::scalar(-0.7));
  auto via_addition = dad::add(dad::scale(dem.theta(), df), dad::scale(neg_eps, db));
  CHECK((d.val().array() == via_addition.val().array()).all());
}

TEST_CASE("difference-aware extractor: shape stability and chaining") {
  Rng rng(61);
  DifferenceAwareExtractor<float> dae(8, true, dad::DemMode::f_minus_b, rng);
  GuideMap<float> m{Value<float>::constant(rand_tensor<float>({1, 1, 8, 8}, rng))};
  BackgroundFeatures<float> f{Value<float>::constant(rand_tensor<float>({1, 8, 2, 2}, rng))};

  GuideMap<float> r1 = dae.forward(m, f);
  CHECK(r1.logits.shape() == m.logits.shape());
  GuideMap<float> r2 = dae.forward(r1, f);  // chaining is well-typed and shape-stable
  CHECK(r2.logits.shape() == m.logits.shape());

  float linf = (r1.logits.val().array() - m.logits.val().array()).abs().maxCoeff();
  CHECK(linf > 0.0f);  // the refinement actually changes the map
}

TEST_CASE("full decoder: three maps at input resolution (batch of 2)") {
  DifferenceAwareDecoder<float> model(desk_config());
  Rng rng(62);
  auto x = Value<float>::constant(rand_tensor<float>({2, 3, 64, 64}, rng, 0, 1));
  DecoderOutputs<float> out = model.forward(x);
  REQUIRE(out.count() == 3);
  for (const auto& m : out.maps) CHECK(m.shape() == std::vector<Index>{2, 1, 64, 64});
}

TEST_CASE("repeat count drives the number of supervised maps") {
  Rng rng(63);
  auto x = rand_tensor<float>({1, 3, 32, 32}, rng, 0, 1);
  for (Index repeats : {1, 3}) {
    ModelConfig cfg = desk_config();
    cfg.dae_repeats = repeats;
    DifferenceAwareDecoder<float> model(cfg);
    DecoderOutputs<float> out = model.forward(Value<float>::constant(x.clone()));
    CHECK(out.count() == repeats + 1);
    Tensor<float> gt = Tensor<float>::zeros({1, 1, 32, 32});
    for (Index i = 0; i < 32; ++i) gt[i * 32 + 5] = 1;
    dad::LossConfig lc;
    lc.weight_kernel = 3;
    auto loss = dad::total_loss(out, gt, lc);  // sums over every map
    CHECK(loss.val()[0] > 0);
  }
}

TEST_CASE("dilated-pyramid variant swaps in end to end") {
  ModelConfig cfg = desk_config();
  cfg.fem_variant = dad::FemVariant::dilated_pyramid;
  DifferenceAwareDecoder<float> model(cfg);
  Rng rng(64);
  auto out = model.forward(Value<float>::constant(rand_tensor<float>({1, 3, 32, 32}, rng, 0, 1)));
  CHECK(out.count() == 3);
  CHECK(out.final().val().array().allFinite());
}

TEST_CASE("config inconsistencies fail before any compute") {
  ModelConfig cfg = desk_config();
  cfg.dae_repeats = 0;
  CHECK_THROWS_AS((void)DifferenceAwareDecoder<float>(cfg), dad::ValidationError);

  ModelConfig bad = desk_config();
  bad.partition = "5";  // needs the relaxed flag
  CHECK_THROWS_AS((void)DifferenceAwareDecoder<float>(bad), dad::ValidationError);

  ModelConfig unknown = desk_config();
  unknown.backbone = "nope";
  CHECK_THROWS_AS((void)DifferenceAwareDecoder<float>(unknown), dad::ConfigError);
}

TEST_CASE("every learnable parameter receives a gradient on a training step") {
  ModelConfig mc = desk_config();
  DifferenceAwareDecoder<float> model(mc);
  Rng rng(65);
  auto x = Value<float>::constant(rand_tensor<float>({2, 3, 32, 32}, rng, 0, 1));
  Tensor<float> gt = Tensor<float>::zeros({2, 1, 32, 32});
  for (Index b = 0; b < 2; ++b)
    for (Index y = 8; y < 24; ++y)
      for (Index i = 10; i < 20; ++i) gt[(b * 32 + y) * 32 + i] = 1;

  dad::LossConfig lc;
  lc.weight_kernel = 3;

  // One warmup step: the zero-initialized residual scales gate the attention
  // projections until the scales move off zero.
  dad::Adam<float> opt(model.parameters(), 1e-3);
  auto warm = dad::total_loss(model.forward(x), gt, lc);
  warm.backward();
  opt.step();
  opt.zero_grad();

  auto out = model.forward(x);
  auto loss = dad::total_loss(out, gt, lc);
  loss.backward();

  auto params = model.named_parameters();
  Index with_grad = 0;
  for (auto& [name, p] : params) {
    bool nz = p.has_grad() && p.grad().array().abs().sum() > 0;
    with_grad += nz;
  }
  CHECK(double(with_grad) / double(params.size()) > 0.99);

  // the learnable scalars specifically
  for (auto& dae : model.daes()) {
    REQUIRE(dae->dgm() != nullptr);
    CHECK(dae->dgm()->beta().grad()[0] != 0.0f);
    CHECK(dae->dem().theta().grad()[0] != 0.0f);
    CHECK(dae->dem().epsilon().grad()[0] != 0.0f);
  }
  CHECK(model.gmg().dra().position().gamma().grad()[0] != 0.0f);
  CHECK(model.gmg().dra().channel().gamma().grad()[0] != 0.0f);
}
