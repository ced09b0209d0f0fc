#ifndef DAD_RUNNER_HPP
#define DAD_RUNNER_HPP

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dad/checkpoint.hpp"
#include "dad/config.hpp"
#include "dad/data.hpp"
#include "dad/loss.hpp"
#include "dad/metrics.hpp"

namespace dad {

template <typename S>
std::unique_ptr<DifferenceAwareDecoder<S>> build_model(const RunConfig& cfg) {
  cfg.validate();
  ModelConfig mc = cfg.model;
  mc.seed = cfg.seed;
  auto model = std::make_unique<DifferenceAwareDecoder<S>>(mc);
  if (!cfg.backbone_weights.empty())
    load_checkpoint<S>(cfg.backbone_weights, model->backbone(), /*partial=*/false);
  return model;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  std::string checkpoint_path;
  std::string loss_curve_path;
  double first_step_loss = 0;
  std::vector<double> epoch_losses;  // mean total loss per epoch
  Index steps = 0;
};

template <typename S>
TrainResult train_on(const RunConfig& cfg, DifferenceAwareDecoder<S>& model,
                     const std::vector<SamplePair<S>>& dataset, bool quiet = false) {
  cfg.validate();
  DAD_CHECK(!dataset.empty(), ValidationError, "train: empty dataset");
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);

  model.set_training(true);
  Adam<S> opt(model.parameters(), cfg.optim.lr);
  LrSchedule sched = cfg.optim.schedule();

  TrainResult res;
  res.loss_curve_path = (fs::path(cfg.output_dir) / "loss_curve.csv").string();
  std::ofstream curve(res.loss_curve_path);
  curve << "epoch,mean_total_loss\n";

  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(cfg.seed);

  const Index bs = cfg.optim.batch_size;
  bool done = false;
  for (Index epoch = 0; epoch < cfg.optim.epochs && !done; ++epoch) {
    opt.set_lr(sched.at_epoch(epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double loss_sum = 0;
    Index batches = 0;
    for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(bs)) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(off),
                                   order.begin() +
                                       static_cast<std::ptrdiff_t>(std::min(off + static_cast<std::size_t>(bs),
                                                                            order.size())));
      auto [images, masks] = stack_samples(dataset, idx);
      DecoderOutputs<S> out = model.forward(Value<S>::constant(std::move(images)));
      Value<S> loss = total_loss(out, masks, cfg.loss);
      double lv = double(loss.val()[0]);
      if (res.steps == 0) res.first_step_loss = lv;
      loss_sum += lv;
      ++batches;
      opt.zero_grad();
      loss.backward();
      opt.step();
      ++res.steps;
      if (cfg.optim.max_steps > 0 && res.steps >= cfg.optim.max_steps) {
        done = true;
        break;
      }
    }
    double mean_loss = loss_sum / double(batches);
    res.epoch_losses.push_back(mean_loss);
    curve << epoch + 1 << "," << mean_loss << "\n";
    curve.flush();
    if (!quiet)
      std::cout << "epoch " << (epoch + 1) << "/" << cfg.optim.epochs << "  lr " << opt.lr()
                << "  loss " << mean_loss << "\n";
    bool final_epoch = done || epoch + 1 == cfg.optim.epochs;
    if (!final_epoch && cfg.optim.checkpoint_every > 0 && (epoch + 1) % cfg.optim.checkpoint_every == 0) {
      std::string p = (fs::path(cfg.output_dir) / ("checkpoint_epoch" + std::to_string(epoch + 1) +
                                                    ".dadckpt"))
                          .string();
      save_checkpoint<S>(p, model, cfg.to_kv_text(), epoch + 1);
    }
  }
  res.checkpoint_path = (fs::path(cfg.output_dir) / "checkpoint_final.dadckpt").string();
  save_checkpoint<S>(res.checkpoint_path, model, cfg.to_kv_text(),
                     static_cast<Index>(res.epoch_losses.size()));
  return res;
}

template <typename S>
TrainResult train(const RunConfig& cfg, bool quiet = false, const std::string& resume = "") {
  DAD_CHECK(!cfg.data.train_dir.empty(), ConfigError, "train: data.train_dir is not set");
  auto dataset = load_dataset<S>(cfg.data.train_dir, cfg.data.image_size);
  auto model = build_model<S>(cfg);
  if (!resume.empty()) load_checkpoint<S>(resume, *model);  // shape mismatch -> config error
  return train_on(cfg, *model, dataset, quiet);
}

// ---------------------------------------------------------------------------
// Evaluation: the final refined map (sigmoid of the last output) is the
// evaluated prediction.
// ---------------------------------------------------------------------------

// Works for any model exposing set_training(bool) and
// forward(Value) -> DecoderOutputs (stub models included).
template <typename S, typename Model>
MetricReport evaluate_model(Model& model, const std::vector<SamplePair<S>>& set) {
  DAD_CHECK(!set.empty(), ValidationError, "evaluate: empty dataset");
  model.set_training(false);
  NoGradGuard ng;
  struct Pending {
    Tensor<double> pred, gt;
    std::string id;
  };
  std::vector<Pending> pending;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto [images, masks] = stack_samples(set, {i});
    DecoderOutputs<S> out = model.forward(Value<S>::constant(std::move(images)));
    Value<S> prob = sigmoid(out.final());
    Index h = prob.dim(2), w = prob.dim(3);
    Tensor<double> pred({h, w});
    for (Index j = 0; j < h * w; ++j) pred[j] = double(prob.val()[j]);
    Tensor<double> gt({h, w});
    for (Index j = 0; j < h * w; ++j) gt[j] = double(masks[j]);
    pending.push_back({std::move(pred), std::move(gt), set[i].image_id});
  }
  std::vector<std::future<MetricRecord>> futs;
  for (auto& p : pending)
    futs.push_back(std::async(std::launch::async,
                              [&p]() { return compute_metrics(p.pred, p.gt, p.id); }));
  MetricReport report;
  for (auto& f : futs) report.per_image.push_back(f.get());
  return report;
}

// Rebuild the model a checkpoint was written from (config snapshot is stored
// in the file), load the weights and return both.
template <typename S>
std::pair<std::unique_ptr<DifferenceAwareDecoder<S>>, RunConfig> model_from_checkpoint(
    const std::string& ckpt_path) {
  CheckpointInfo info = read_checkpoint_info(ckpt_path);
  std::istringstream in(info.config_text);
  RunConfig cfg = RunConfig::from_kv(config_detail::read_kv_text(in));
  cfg.backbone_weights.clear();  // weights come from the checkpoint itself
  auto model = build_model<S>(cfg);
  load_checkpoint<S>(ckpt_path, *model);
  return {std::move(model), cfg};
}

template <typename S>
MetricReport evaluate_checkpoint(const std::string& ckpt_path, const std::string& data_dir,
                                 const std::string& out_csv = "") {
  auto [model, cfg] = model_from_checkpoint<S>(ckpt_path);
  auto set = load_dataset<S>(data_dir, cfg.data.image_size);
  MetricReport report = evaluate_model(*model, set);
  if (!out_csv.empty()) {
    std::ofstream os(out_csv);
    DAD_CHECK(os.good(), IoError, "cannot write metric report '" + out_csv + "'");
    report.write_csv(os);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Prediction and heatmap emission
// ---------------------------------------------------------------------------

// Probability map for one decoder output, resized to the requested size.
template <typename S>
Tensor<double> prediction_map(const Value<S>& logits_map, Index oh, Index ow) {
  Tensor<S> prob(logits_map.shape());
  for (Index i = 0; i < prob.numel(); ++i) {
    S z = logits_map.val()[i];
    prob[i] = z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
  }
  Tensor<S> resized = resize_bilinear_tensor(prob, oh, ow);
  Tensor<double> out({oh, ow});
  for (Index i = 0; i < oh * ow; ++i) out[i] = double(resized[i]);
  return out;
}

inline ImageU8 gray_from_map(const Tensor<double>& p) {
  ImageU8 img;
  img.channels = 1;
  img.height = p.dim(0);
  img.width = p.dim(1);
  img.pixels.resize(static_cast<std::size_t>(p.numel()));
  for (Index i = 0; i < p.numel(); ++i)
    img.pixels[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(p[i], 0.0, 1.0)));
  return img;
}

template <typename S>
std::vector<std::string> predict(const std::string& ckpt_path, const std::string& image_path,
                                 const std::string& out_dir, bool all_stages = false) {
  auto [model, cfg] = model_from_checkpoint<S>(ckpt_path);
  model->set_training(false);
  NoGradGuard ng;

  ImageU8 original = read_png(image_path, 3);
  Tensor<S> it = image_to_tensor<S>(original).reshaped({1, 3, original.height, original.width});
  Tensor<S> resized = resize_bilinear_tensor(it, cfg.data.image_size, cfg.data.image_size);
  DecoderOutputs<S> out = model->forward(Value<S>::constant(std::move(resized)));

  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::string stem = fs::path(image_path).stem().string();
  std::vector<std::string> written;

  Tensor<double> final_map = prediction_map(out.final(), original.height, original.width);
  if (all_stages) {
    for (Index k = 0; k < out.count(); ++k) {
      Tensor<double> m = prediction_map(out.maps[static_cast<std::size_t>(k)], original.height,
                                        original.width);
      std::string p = (fs::path(out_dir) / (stem + "_c" + std::to_string(k) + ".png")).string();
      write_png(p, gray_from_map(m));
      written.push_back(p);
    }
  } else {
    std::string p = (fs::path(out_dir) / (stem + "_pred.png")).string();
    write_png(p, gray_from_map(final_map));
    written.push_back(p);
  }
  std::vector<double> vals(final_map.data(), final_map.data() + final_map.numel());
  std::string op = (fs::path(out_dir) / (stem + "_overlay.png")).string();
  write_png(op, overlay_heatmap(original, vals, 0.5));
  written.push_back(op);
  return written;
}

// ---------------------------------------------------------------------------
// Ablation grid: each line is `name key=value [key=value ...]`; every variant
// is trained with the same budget and evaluated, one CSV row per variant.
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string variant;
  double e_phi = 0, mae = 0;
  std::string status;  // OK | FAILED
  std::string note;
};

struct AblationVariant {
  std::string name;
  std::map<std::string, std::string> overrides;
};

inline std::vector<AblationVariant> parse_grid(std::istream& in) {
  std::vector<AblationVariant> variants;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    std::istringstream ls(line);
    AblationVariant v;
    ls >> v.name;
    std::string tok;
    while (ls >> tok) {
      std::size_t eq = tok.find('=');
      DAD_CHECK(eq != std::string::npos && eq > 0, ConfigError,
                "grid line " + std::to_string(lineno) + ": token '" + tok + "' is not key=value");
      v.overrides[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    std::string signature;
    for (const auto& [k, val] : v.overrides) signature += k + "=" + val + ";";
    if (!seen.insert(signature).second) {
      std::cerr << "warning: duplicate grid variant '" << v.name << "' skipped\n";
      continue;
    }
    variants.push_back(std::move(v));
  }
  return variants;
}

template <typename S>
std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<AblationVariant>& grid,
                                      const std::string& out_csv = "", bool quiet = true) {
  std::vector<AblationRow> rows;
  for (const auto& v : grid) {
    AblationRow row;
    row.variant = v.name;
    try {
      std::istringstream base_kv(base.to_kv_text());
      auto kv = config_detail::read_kv_text(base_kv);
      for (const auto& [k, val] : v.overrides) kv[k] = val;
      RunConfig cfg = RunConfig::from_kv(kv);
      cfg.output_dir = base.output_dir + "/" + v.name;
      cfg.validate();

      auto dataset = load_dataset<S>(cfg.data.train_dir, cfg.data.image_size);
      auto model = build_model<S>(cfg);
      train_on(cfg, *model, dataset, /*quiet=*/true);
      std::string eval_dir = cfg.data.test_dirs.empty() ? cfg.data.train_dir : cfg.data.test_dirs[0];
      auto eval_set = load_dataset<S>(eval_dir, cfg.data.image_size);
      MetricRecord agg = evaluate_model(*model, eval_set).aggregate();
      row.e_phi = agg.e_phi;
      row.mae = agg.mae;
      row.status = "OK";
    } catch (const Error& e) {
      row.status = "FAILED";
      row.note = e.what();
    }
    if (!quiet)
      std::cout << row.variant << "  " << row.status
                << (row.status == "OK" ? "  E_phi " + std::to_string(row.e_phi) + "  MAE " +
                                             std::to_string(row.mae)
                                       : "  " + row.note)
                << "\n";
    rows.push_back(std::move(row));
  }
  if (!out_csv.empty()) {
    std::ofstream os(out_csv);
    DAD_CHECK(os.good(), IoError, "cannot write ablation table '" + out_csv + "'");
    os << "variant,e_phi,mae,status,note\n";
    for (const auto& r : rows) {
      std::string note = r.note;
      for (auto& ch : note)
        if (ch == ',' || ch == '\n') ch = ';';
      os << r.variant << "," << r.e_phi << "," << r.mae << "," << r.status << "," << note << "\n";
    }
  }
  return rows;
}

}  // namespace dad

#endif  // DAD_RUNNER_HPP
