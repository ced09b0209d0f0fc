// Acceptance suite: one self-contained check per criterion, one pass/fail
// line each. Runs offline on synthetic data with randomly initialized
// weights. Usage: acceptance [N] runs criterion N (1..11), no argument runs
// everything.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dad/runner.hpp"
#include "oracles.hpp"

using dad::BackgroundFeatures;
using dad::GuideMap;
using dad::Index;
using dad::Rng;
using dad::Tensor;
using dad::Value;

namespace {

struct Check {
  std::ostringstream log;
  bool ok = true;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      log << "    failed: " << what << "\n";
    }
  }
};

double wall_seconds(const std::function<void()>& fn) {
  auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor<double> blob_gt(Rng& rng, Index h, Index w) {
  Tensor<double> g({h, w});
  double cx = rng.uniform(0.3, 0.7) * w, cy = rng.uniform(0.3, 0.7) * h;
  double rx = rng.uniform(0.15, 0.35) * w, ry = rng.uniform(0.15, 0.35) * h;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      g.at(y, x) = (std::pow((x - cx) / rx, 2) + std::pow((y - cy) / ry, 2) <= 1.0) ? 1.0 : 0.0;
  return g;
}

std::filesystem::path scratch_dir() {
  auto p = std::filesystem::temp_directory_path() / "dad_acceptance";
  std::filesystem::create_directories(p);
  return p;
}

// --------------------------------------------------------------------------
// 1. cross-attention guidance matches the loop oracle
// --------------------------------------------------------------------------
void criterion_1(Check& c) {
  Rng rng(101);
  double elapsed = wall_seconds([&] {
    for (int t = 0; t < 20; ++t) {
      Index ch = rng.randint(2, 8);
      Index hg = rng.randint(2, 8), wg = rng.randint(2, 8);  // N <= 64
      Index hb = std::max<Index>(1, hg / 2), wb = std::max<Index>(1, wg / 2);
      hg = hb * 2;
      wg = wb * 2;  // keep an integer resize ratio
      dad::DifferenceGuidance<double> dgm;
      double beta = rng.uniform(-1, 1);
      dgm.beta().val()[0] = beta;
      Tensor<double> ft({1, ch, hb, wb});
      rng.fill_uniform(ft, -1, 1);
      Tensor<double> mt({1, 1, hg, wg});
      rng.fill_uniform(mt, -2, 2);
      auto e = dgm.forward(GuideMap<double>{Value<double>::constant(mt)},
                           BackgroundFeatures<double>{Value<double>::constant(ft)});

      Tensor<double> f0 = dad::resize_bilinear_tensor(ft, hg, wg);
      Index n = hg * wg;
      std::vector<double> r(static_cast<std::size_t>(ch * ch));
      for (Index i = 0; i < ch; ++i) {
        double mx = -1e300;
        for (Index j = 0; j < ch; ++j) {
          double acc = 0;
          for (Index k = 0; k < n; ++k) acc += f0[i * n + k] * mt[k];
          r[static_cast<std::size_t>(i * ch + j)] = acc;
          mx = std::max(mx, acc);
        }
        double sum = 0;
        for (Index j = 0; j < ch; ++j) {
          auto& v = r[static_cast<std::size_t>(i * ch + j)];
          v = std::exp(v - mx);
          sum += v;
        }
        for (Index j = 0; j < ch; ++j) r[static_cast<std::size_t>(i * ch + j)] /= sum;
      }
      double max_err = 0;
      for (Index i = 0; i < ch; ++i)
        for (Index k = 0; k < n; ++k) {
          double a = 0;
          for (Index j = 0; j < ch; ++j) a += r[static_cast<std::size_t>(i * ch + j)] * f0[j * n + k];
          double want = beta * a + f0[i * n + k];
          max_err = std::max(max_err, std::abs(want - e.val()[i * n + k]));
        }
      c.expect(max_err <= 1e-5, "instance " + std::to_string(t) + " max error " + std::to_string(max_err));
    }
  });
  c.expect(elapsed < 10.0, "runtime " + std::to_string(elapsed) + "s exceeds 10s");
}

// --------------------------------------------------------------------------
// 2. foreground/background split matches the elementwise oracle
// --------------------------------------------------------------------------
void criterion_2(Check& c) {
  Rng rng(102);
  for (int t = 0; t < 20; ++t) {
    Index ch = rng.randint(1, 6), h = rng.randint(2, 8), w = rng.randint(2, 8);
    dad::DifferenceEnhancement<double> dem(ch, dad::DemMode::f_minus_b, rng);
    double theta = rng.uniform(-2, 2), eps = rng.uniform(-2, 2);
    dem.theta().val()[0] = theta;
    dem.epsilon().val()[0] = eps;
    Tensor<double> et({1, ch, h, w});
    rng.fill_uniform(et, -1, 1);
    Tensor<double> mt({1, 1, h, w});
    rng.fill_uniform(mt, -3, 3);
    auto [d, refined] =
        dem.forward(Value<double>::constant(et), GuideMap<double>{Value<double>::constant(mt)});
    double max_err = 0;
    for (Index ci = 0; ci < ch; ++ci)
      for (Index i = 0; i < h * w; ++i) {
        double p = 1.0 / (1.0 + std::exp(-mt[i]));
        double want = theta * p * et[ci * h * w + i] - eps * (1.0 - p) * et[ci * h * w + i];
        max_err = std::max(max_err, std::abs(want - d.val()[ci * h * w + i]));
      }
    c.expect(max_err <= 1e-6, "instance " + std::to_string(t) + " max error " + std::to_string(max_err));
  }
}

// --------------------------------------------------------------------------
// 3. metric implementations match their loop oracles
// --------------------------------------------------------------------------
void criterion_3(Check& c) {
  Rng rng(103);
  for (int t = 0; t < 50; ++t) {
    Tensor<double> g = t % 2 == 0 ? blob_gt(rng, 16, 16) : Tensor<double>({16, 16});
    if (t % 2 == 1)
      for (Index i = 0; i < g.numel(); ++i) g[i] = rng.uniform() < 0.35 ? 1.0 : 0.0;
    Tensor<double> p({16, 16});
    double fidelity = rng.uniform(0, 1);
    for (Index i = 0; i < p.numel(); ++i)
      p[i] = std::clamp(fidelity * g[i] + (1 - fidelity) * rng.uniform(), 0.0, 1.0);

    c.expect(std::abs(dad::mae(p, g) - oracle::mae(p, g)) <= 1e-9, "mae mismatch");
    c.expect(std::abs(dad::e_measure(p, g) - oracle::e_measure(p, g)) <= 1e-6, "e-measure mismatch");
    double area = g.array().sum();
    if (area > 0 && area < double(g.numel())) {
      c.expect(std::abs(dad::s_measure(p, g) - oracle::s_measure(p, g)) <= 1e-5, "s-measure mismatch");
      c.expect(std::abs(dad::weighted_f(p, g) - oracle::weighted_f(p, g)) <= 1e-5,
               "weighted-f mismatch");
    }
    // region metrics against direct counting
    double tp = 0, fp = 0, fn = 0;
    for (Index i = 0; i < g.numel(); ++i) {
      bool pb = p[i] >= 0.5, gb = g[i] == 1.0;
      tp += pb && gb;
      fp += pb && !gb;
      fn += !pb && gb;
    }
    auto rm = dad::region_metrics(p, g);
    if (tp + fp + fn > 0) {
      c.expect(std::abs(rm.dice - 2 * tp / (2 * tp + fp + fn)) <= 1e-12, "dice mismatch");
      c.expect(std::abs(rm.iou - tp / (tp + fp + fn)) <= 1e-12, "iou mismatch");
    }
  }
  int identity_checked = 0;
  for (int t = 0; t < 100; ++t) {
    Tensor<double> g({12, 12}), p({12, 12});
    for (Index i = 0; i < g.numel(); ++i) {
      g[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
      p[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    }
    auto m = dad::region_metrics(p, g);
    if (m.flagged) continue;
    c.expect(std::abs(m.dice - 2.0 * m.iou / (1.0 + m.iou)) <= 1e-12, "dice/iou identity violated");
    ++identity_checked;
  }
  c.expect(identity_checked >= 95, "too few identity pairs exercised");
}

// --------------------------------------------------------------------------
// 4. perfect and inverted predictions
// --------------------------------------------------------------------------
void criterion_4(Check& c) {
  Rng rng(104);
  for (int t = 0; t < 5; ++t) {
    Tensor<double> g = blob_gt(rng, 16, 16);
    c.expect(std::abs(dad::s_measure(g, g) - 1.0) <= 1e-6, "S on perfect prediction");
    c.expect(std::abs(dad::e_measure(g, g) - 1.0) <= 1e-6, "E on perfect prediction");
    c.expect(std::abs(dad::weighted_f(g, g) - 1.0) <= 1e-6, "Fw on perfect prediction");
    c.expect(dad::mae(g, g) == 0.0, "MAE on perfect prediction");
    auto rm = dad::region_metrics(g, g);
    c.expect(rm.dice == 1.0 && rm.iou == 1.0 && rm.f1 == 1.0 && rm.acc == 1.0,
             "region metrics on perfect prediction");

    Tensor<double> inv(g.shape(), 1.0 - g.array());
    c.expect(dad::e_measure(inv, g) <= 0.05, "E on inverted prediction");
    auto ri = dad::region_metrics(inv, g);
    c.expect(ri.dice == 0.0 && ri.iou == 0.0, "dice/iou on inverted prediction");
  }
}

// --------------------------------------------------------------------------
// 5. receptive fields: recurrence vs reachability oracle
// --------------------------------------------------------------------------
void criterion_5(Check& c) {
  dad::FemConfig cfg = dad::FemConfig::make(64);
  c.expect(dad::receptive_field(cfg.path_chain(1)) == 121, "path 1 recurrence != 121");
  c.expect(dad::receptive_field(cfg.path_chain(3)) == 61, "path 3 recurrence != 61");
  c.expect(oracle::receptive_field(cfg.path_chain(1)) == 121, "path 1 oracle != 121");
  c.expect(oracle::receptive_field(cfg.path_chain(3)) == 61, "path 3 oracle != 61");
  dad::FemConfig nod = cfg.without_dilation();
  c.expect(dad::receptive_field(nod.path_chain(1)) == 9, "no-dilation path 1 != 9");
  c.expect(dad::receptive_field(nod.path_chain(3)) == 9, "no-dilation path 3 != 9");
}

// --------------------------------------------------------------------------
// 6. softmax normalization of every attention matrix
// --------------------------------------------------------------------------
void criterion_6(Check& c) {
  Rng rng(106);
  auto rows_sum_to_one = [&](const Value<float>& att, Index rows, Index cols, const char* what) {
    for (Index r = 0; r < rows; ++r) {
      double s = 0;
      for (Index k = 0; k < cols; ++k) s += att.val()[r * cols + k];
      if (std::abs(s - 1.0) > 1e-5) {
        c.expect(false, std::string(what) + " row " + std::to_string(r) + " sums to " + std::to_string(s));
        return;
      }
    }
  };

  dad::PositionAttention<float> pam(16, rng);
  Tensor<float> xt({1, 16, 7, 7});
  rng.fill_uniform(xt, -2, 2);
  rows_sum_to_one(pam.attention_matrix(Value<float>::constant(xt)), 49, 49, "position attention");

  dad::ChannelAttention<float> cam(16);
  rows_sum_to_one(cam.attention_matrix(Value<float>::constant(xt)), 16, 16, "channel attention");

  dad::DifferenceGuidance<float> dgm;
  Tensor<float> f0({1, 8, 8, 8});
  rng.fill_uniform(f0, -1, 1);
  Tensor<float> mt({1, 1, 8, 8});
  rng.fill_uniform(mt, -2, 2);
  rows_sum_to_one(dgm.attention_matrix(Value<float>::constant(f0), Value<float>::constant(mt)), 8, 8,
                  "difference guidance");
}

// --------------------------------------------------------------------------
// 7. identity at zero for every learnable scale
// --------------------------------------------------------------------------
void criterion_7(Check& c) {
  Rng rng(107);

  dad::DifferenceGuidance<float> dgm;  // beta = 0
  Tensor<float> ft({1, 6, 4, 4});
  rng.fill_uniform(ft, -1, 1);
  Tensor<float> mt({1, 1, 8, 8});
  rng.fill_uniform(mt, -2, 2);
  auto e = dgm.forward(GuideMap<float>{Value<float>::constant(mt)},
                       BackgroundFeatures<float>{Value<float>::constant(ft)});
  Tensor<float> up = dad::resize_bilinear_tensor(ft, 8, 8);
  c.expect((e.val().array() == up.array()).all(), "beta=0 guidance is not plain upsampling");

  dad::DualResidualAttention<float> dra(8, rng);
  dra.set_training(false);
  Tensor<float> xt({1, 8, 6, 6});
  rng.fill_uniform(xt, -1, 1);
  auto x = Value<float>::constant(xt);
  auto pos_branch = dra.position_block().forward(dra.position().forward(x));
  auto pos_direct = dra.position_block().forward(x);
  c.expect((pos_branch.val().array() == pos_direct.val().array()).all(),
           "position branch is not its conv block at zero scale");
  auto chan_branch = dra.channel_block().forward(dra.channel().forward(x));
  auto chan_direct = dra.channel_block().forward(x);
  c.expect((chan_branch.val().array() == chan_direct.val().array()).all(),
           "channel branch is not its conv block at zero scale");

  dad::DifferenceEnhancement<float> dem(6, dad::DemMode::f_minus_b, rng);
  dem.epsilon().val()[0] = 0.0f;  // theta stays 1
  Tensor<float> et({1, 6, 8, 8});
  rng.fill_uniform(et, -1, 1);
  auto [d, refined] =
      dem.forward(Value<float>::constant(et), GuideMap<float>{Value<float>::constant(mt)});
  auto pe = dad::mul_broadcast_channel(dad::sigmoid(Value<float>::constant(mt)),
                                       Value<float>::constant(et));
  c.expect((d.val().array() == pe.val().array()).all(), "theta=1, eps=0 is not P*E exactly");
}

// --------------------------------------------------------------------------
// 8. gradient integrity on a desk-profile training step
// --------------------------------------------------------------------------
void criterion_8(Check& c) {
  // Part A: a full desk-profile step; after one warmup step (the residual
  // scales start at exactly zero and gate their projections) every parameter
  // tensor must receive a nonzero gradient.
  {
    dad::ModelConfig mc;
    mc.backbone = "synthetic";
    mc.seed = 31;
    dad::DifferenceAwareDecoder<float> model(mc);
    auto set = dad::make_synthetic_dataset<float>(4, 64, 77);
    auto [images, masks] = dad::stack_samples(set, {0, 1, 2, 3});
    dad::LossConfig lc;
    lc.weight_kernel = 3;

    dad::Adam<float> opt(model.parameters(), 1e-3);
    auto warm = dad::total_loss(model.forward(Value<float>::constant(images)), masks, lc);
    warm.backward();
    opt.step();
    opt.zero_grad();

    auto loss = dad::total_loss(model.forward(Value<float>::constant(images)), masks, lc);
    loss.backward();
    auto params = model.named_parameters();
    Index nz = 0;
    for (auto& [name, p] : params) nz += p.has_grad() && p.grad().array().abs().sum() > 0;
    double frac = double(nz) / double(params.size());
    c.expect(frac > 0.99, "only " + std::to_string(frac) + " of parameters received gradients");
    for (auto& dae : model.daes()) {
      c.expect(dae->dgm()->beta().grad()[0] != 0.0f, "beta has zero gradient");
      c.expect(dae->dem().theta().grad()[0] != 0.0f, "theta has zero gradient");
      c.expect(dae->dem().epsilon().grad()[0] != 0.0f, "epsilon has zero gradient");
    }
    c.expect(model.gmg().dra().position().gamma().grad()[0] != 0.0f, "position gamma zero grad");
    c.expect(model.gmg().dra().channel().gamma().grad()[0] != 0.0f, "channel gamma zero grad");
  }

  // Part B: 64-bit finite differences for beta/theta/epsilon through the
  // whole model, and for the loss with respect to its logits.
  {
    dad::ModelConfig mc;
    mc.backbone = "synthetic";
    mc.seed = 33;
    dad::DifferenceAwareDecoder<double> model(mc);
    Rng rng(108);
    Tensor<double> images({1, 3, 32, 32});
    rng.fill_uniform(images, 0, 1);
    Tensor<double> gt = Tensor<double>::zeros({1, 1, 32, 32});
    for (Index y = 10; y < 22; ++y)
      for (Index x = 8; x < 20; ++x) gt[y * 32 + x] = 1.0;
    dad::LossConfig lc;
    lc.weight_kernel = 3;

    auto loss_value = [&]() {
      dad::NoGradGuard ng;
      return dad::total_loss(model.forward(Value<double>::constant(images)), gt, lc).val()[0];
    };
    auto fd_check = [&](Value<double> p, const char* name) {
      auto loss = dad::total_loss(model.forward(Value<double>::constant(images)), gt, lc);
      p.zero_grad();
      loss.backward();
      double ad = p.grad()[0];
      const double h = 1e-6;
      double saved = p.val()[0];
      p.val()[0] = saved + h;
      double fp = loss_value();
      p.val()[0] = saved - h;
      double fm = loss_value();
      p.val()[0] = saved;
      double fd = (fp - fm) / (2 * h);
      double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-8});
      c.expect(rel < 1e-3, std::string(name) + " finite-difference rel err " + std::to_string(rel));
    };
    fd_check(model.daes()[0]->dgm()->beta(), "beta");
    fd_check(model.daes()[0]->dem().theta(), "theta");
    fd_check(model.daes()[0]->dem().epsilon(), "epsilon");

    // one loss vs finite differences on an 8x8 map
    Tensor<double> small_gt = Tensor<double>::zeros({1, 1, 8, 8});
    for (Index y = 2; y < 6; ++y)
      for (Index x = 2; x < 6; ++x) small_gt[y * 8 + x] = 1.0;
    Tensor<double> w = dad::pixel_weights(small_gt, lc);
    Tensor<double> zt({1, 1, 8, 8});
    rng.fill_uniform(zt, -2, 2);
    auto z = Value<double>::leaf(zt, true);
    auto loss = dad::add(dad::weighted_bce(z, small_gt, w), dad::weighted_iou(z, small_gt, w));
    loss.backward();
    double max_rel = 0;
    for (Index i = 0; i < 64; ++i) {
      const double h = 1e-6;
      double saved = z.val()[i];
      dad::NoGradGuard ng;
      z.val()[i] = saved + h;
      double fp = dad::add(dad::weighted_bce(z, small_gt, w), dad::weighted_iou(z, small_gt, w)).val()[0];
      z.val()[i] = saved - h;
      double fm = dad::add(dad::weighted_bce(z, small_gt, w), dad::weighted_iou(z, small_gt, w)).val()[0];
      z.val()[i] = saved;
      double fd = (fp - fm) / (2 * h);
      double rel = std::abs(fd - z.grad()[i]) / std::max({std::abs(fd), std::abs(z.grad()[i]), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
    c.expect(max_rel < 1e-3, "loss gradient rel err " + std::to_string(max_rel));
  }
}

// --------------------------------------------------------------------------
// 9. overfit smoke test on eight synthetic images
// --------------------------------------------------------------------------
void criterion_9(Check& c) {
  namespace fs = std::filesystem;
  auto dir = scratch_dir() / "overfit";
  fs::remove_all(dir);
  dad::write_synthetic_dataset<float>((dir / "data").string(), 8, 64, 7);

  dad::RunConfig cfg;
  cfg.apply_profile("desk");
  cfg.data.train_dir = (dir / "data").string();
  cfg.optim.epochs = 100;     // 2 steps per epoch at batch 4
  cfg.optim.max_steps = 200;  // hard cap
  cfg.optim.checkpoint_every = 0;
  cfg.loss.weight_kernel = 31;  // full-size boundary window
  cfg.seed = 21;
  cfg.model.seed = 21;
  cfg.output_dir = (dir / "run").string();

  auto dataset = dad::load_dataset<float>(cfg.data.train_dir, cfg.data.image_size);
  auto model = dad::build_model<float>(cfg);
  dad::TrainResult res;
  double mae_final = 1.0;
  double elapsed = wall_seconds([&] {
    res = dad::train_on(cfg, *model, dataset, /*quiet=*/true);
    mae_final = dad::evaluate_model(*model, dataset).aggregate().mae;
  });
  c.expect(res.steps <= 200, "took more than 200 optimizer steps");
  double final_loss = res.epoch_losses.back();
  c.expect(final_loss < 0.2 * res.first_step_loss,
           "final loss " + std::to_string(final_loss) + " vs initial " +
               std::to_string(res.first_step_loss));
  c.expect(mae_final < 0.05, "train-set MAE " + std::to_string(mae_final));
  c.expect(elapsed < 300.0, "runtime " + std::to_string(elapsed) + "s exceeds 5 minutes");
  c.log << "    steps 200, loss " << res.first_step_loss << " -> " << final_loss << ", MAE "
        << mae_final << ", " << elapsed << "s\n";
}

// --------------------------------------------------------------------------
// 10. the ablation grids run end to end
// --------------------------------------------------------------------------
void criterion_10(Check& c) {
  namespace fs = std::filesystem;
  auto dir = scratch_dir() / "ablate";
  fs::remove_all(dir);
  dad::write_synthetic_dataset<float>((dir / "data").string(), 8, 32, 19);

  dad::RunConfig base;
  base.model.backbone = "synthetic";
  base.data.train_dir = (dir / "data").string();
  base.data.image_size = 32;
  base.optim.batch_size = 4;
  base.optim.epochs = 1;
  base.optim.lr = 1e-3;
  base.optim.checkpoint_every = 0;
  base.loss.weight_kernel = 3;
  base.seed = 3;
  base.model.seed = 3;
  base.output_dir = (dir / "runs").string();

  std::ostringstream grid;
  // layer-partition sweep (11 splits)
  for (const char* p : {"2+5", "3+5", "4+5", "5", "1+2+5", "1+3+5", "1+4+5", "1+2+4+5", "1+2+3+5",
                        "1+3+4+5", "1+5"}) {
    std::string name = std::string("partition_") + p;
    for (auto& ch : name)
      if (ch == '+') ch = '_';
    grid << name << " model.partition=" << p << " model.partition_relaxed=true\n";
  }
  // fusion base-size sweep
  grid << "fusion_middle model.fusion=middle\n"
       << "fusion_bottom_up model.fusion=bottom_up\n"
       << "fusion_top_down model.fusion=top_down\n"
       << "fusion_middle_post model.fusion=middle model.mff_fem_after_concat=true\n";
  // receptive-field module sweep
  grid << "fem model.fem_variant=fem\n"
       << "fem_no_dilation model.fem_variant=fem_no_dilation\n"
       << "dilated_pyramid model.fem_variant=dilated_pyramid\n";
  // guidance on/off
  grid << "dgm_on model.use_dgm=true\n"
       << "dgm_off model.use_dgm=false\n";
  // enhancement mode sweep
  grid << "dem_f model.dem_mode=f_only\n"
       << "dem_b model.dem_mode=b_only\n"
       << "dem_f_minus_b model.dem_mode=f_minus_b\n";
  // extractor repeats
  grid << "repeats_1 model.dae_repeats=1\n"
       << "repeats_2 model.dae_repeats=2\n"
       << "repeats_3 model.dae_repeats=3\n";

  std::istringstream in(grid.str());
  auto variants = dad::parse_grid(in);
  c.expect(variants.size() == 26, "expected 26 grid variants, got " + std::to_string(variants.size()));
  auto rows = dad::run_ablation<float>(base, variants, (dir / "table.csv").string());
  c.expect(rows.size() == variants.size(), "missing rows in the ablation table");
  for (const auto& r : rows)
    c.expect(r.status == "OK", "variant " + r.variant + " failed: " + r.note);
  c.expect(fs::exists(dir / "table.csv"), "ablation CSV missing");
}

// --------------------------------------------------------------------------
// 11. shape contract at full and desk resolution
// --------------------------------------------------------------------------
void criterion_11(Check& c) {
  dad::NoGradGuard ng;
  auto run = [&](const std::string& backbone, Index size) {
    dad::ModelConfig mc;
    mc.backbone = backbone;
    mc.seed = 5;
    dad::DifferenceAwareDecoder<float> model(mc);
    model.set_training(false);
    Rng rng(111);
    Tensor<float> x({1, 3, size, size});
    rng.fill_uniform(x, 0, 1);
    auto out = model.forward(Value<float>::constant(std::move(x)));
    c.expect(out.count() == 3, backbone + ": expected three output maps");
    for (const auto& m : out.maps) {
      bool ok = m.shape() == std::vector<Index>{1, 1, size, size};
      c.expect(ok, backbone + ": map shape is not 1x1x" + std::to_string(size) + "x" +
                       std::to_string(size));
      c.expect(m.val().array().allFinite(), backbone + ": non-finite outputs");
    }
  };
  run("residual", 416);   // 5-level
  run("pvt", 416);        // 4-level
  run("synthetic", 64);   // desk scale
}

struct Criterion {
  int id;
  const char* title;
  void (*fn)(Check&);
};

const Criterion kCriteria[] = {
    {1, "guidance cross-attention matches the loop oracle", criterion_1},
    {2, "enhancement split matches the elementwise oracle", criterion_2},
    {3, "metrics match their loop oracles; dice/iou identity", criterion_3},
    {4, "perfect and inverted prediction sanity", criterion_4},
    {5, "receptive fields 121/61 (9 without dilation), oracle-exact", criterion_5},
    {6, "attention rows are softmax-normalized", criterion_6},
    {7, "identity at zero for beta, attention scales, theta/epsilon", criterion_7},
    {8, "gradient integrity and 64-bit finite differences", criterion_8},
    {9, "overfit smoke test: 8 images, <=200 steps, <5 min", criterion_9},
    {10, "ablation grids complete end to end", criterion_10},
    {11, "shape contract at 416 (5- and 4-level) and 64", criterion_11},
};

}  // namespace

int main(int argc, char** argv) {
  int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failures = 0;
  for (const auto& crit : kCriteria) {
    if (only != 0 && crit.id != only) continue;
    Check c;
    try {
      crit.fn(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.log << "    exception: " << e.what() << "\n";
    }
    std::printf("[%s] criterion %2d: %s\n", c.ok ? "PASS" : "FAIL", crit.id, crit.title);
    if (!c.log.str().empty()) std::fputs(c.log.str().c_str(), stdout);
    failures += !c.ok;
  }
  return failures;
}
