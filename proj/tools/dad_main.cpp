#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "dad/runner.hpp"

namespace {

void print_rf_table() {
  using dad::FemConfig;
  auto chain_str = [](const std::vector<dad::ConvBlockSpec>& chain) {
    std::string s;
    for (const auto& b : chain) {
      if (!s.empty()) s += " -> ";
      s += std::to_string(b.kernel) + "x" + std::to_string(b.kernel);
      if (b.dilation > 1) s += " d" + std::to_string(b.dilation);
    }
    return s;
  };
  FemConfig fem = FemConfig::make(64);
  FemConfig nod = fem.without_dilation();
  std::cout << "analytical receptive field (side length)\n";
  std::cout << std::left << std::setw(34) << "module path" << std::setw(6) << "RF"
            << "chain\n";
  auto row = [&](const std::string& name, const std::vector<dad::ConvBlockSpec>& chain) {
    std::cout << std::left << std::setw(34) << name << std::setw(6) << dad::receptive_field(chain)
              << chain_str(chain) << "\n";
  };
  row("fem path 1", fem.path_chain(1));
  row("fem path 2", fem.path_chain(2));
  row("fem path 3", fem.path_chain(3));
  row("fem (no dilation) path 1", nod.path_chain(1));
  row("fem (no dilation) path 3", nod.path_chain(3));
  dad::DilatedPyramidConfig dp = dad::DilatedPyramidConfig::make(64);
  for (std::size_t i = 0; i < dp.rates.size(); ++i) {
    std::vector<dad::ConvBlockSpec> chain{
        dad::ConvBlockSpec::same(dp.in_channels, dp.branch_channels, 3, 1, dp.rates[i])};
    row("dilated pyramid rate " + std::to_string(dp.rates[i]), chain);
  }
}

dad::RunConfig load_config(const std::string& path, const std::string& profile) {
  dad::RunConfig cfg = path.empty() ? dad::RunConfig{} : dad::RunConfig::from_file(path);
  if (!profile.empty()) cfg.apply_profile(profile);
  cfg.model.seed = cfg.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"difference-aware decoder for binary segmentation"};
  app.require_subcommand(1);

  std::string config_path, profile, ckpt, data_dir, image_path, grid_path, resume_path;
  std::string train_out, eval_out, predict_out = "predictions", ablate_out, synth_out;
  bool all_stages = false;
  long long count = 8, size = 64, seed = 7;

  auto* train_cmd = app.add_subcommand("train", "train a model from a run config");
  train_cmd->add_option("--config", config_path, "run config file")->required();
  train_cmd->add_option("--profile", profile, "desk or paper profile overrides");
  train_cmd->add_option("--output", train_out, "override output_dir");
  train_cmd->add_option("--resume", resume_path, "checkpoint to continue from");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory (images/ + masks/)")->required();
  eval_cmd->add_option("--out", eval_out, "write the per-image CSV report here");

  auto* predict_cmd = app.add_subcommand("predict", "run one image and emit PNG maps");
  predict_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  predict_cmd->add_option("--image", image_path, "input image (PNG)")->required();
  predict_cmd->add_option("--out", predict_out, "output directory");
  predict_cmd->add_flag("--all-stages", all_stages, "also emit every intermediate map");

  auto* ablate_cmd = app.add_subcommand("ablate", "train/evaluate a grid of model variants");
  ablate_cmd->add_option("--grid", grid_path, "grid file: name key=value ...")->required();
  ablate_cmd->add_option("--config", config_path, "base run config")->required();
  ablate_cmd->add_option("--profile", profile, "desk or paper profile overrides");
  ablate_cmd->add_option("--out", ablate_out, "results CSV path");

  auto* rf_cmd = app.add_subcommand("rf-analyze", "print the analytical receptive-field table");

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic dataset");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--count", count, "number of image/mask pairs")->default_val(8);
  synth_cmd->add_option("--size", size, "square image size")->default_val(64);
  synth_cmd->add_option("--seed", seed, "generator seed")->default_val(7);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      dad::RunConfig cfg = load_config(config_path, profile);
      if (!train_out.empty()) cfg.output_dir = train_out;
      dad::TrainResult res = dad::train<float>(cfg, false, resume_path);
      std::cout << "checkpoint: " << res.checkpoint_path << "\n"
                << "loss curve: " << res.loss_curve_path << "\n";
    } else if (eval_cmd->parsed()) {
      std::string csv = eval_out.empty() ? "metrics.csv" : eval_out;
      dad::MetricReport report = dad::evaluate_checkpoint<float>(ckpt, data_dir, csv);
      std::cout << report.summary() << "report: " << csv << "\n";
    } else if (predict_cmd->parsed()) {
      auto files = dad::predict<float>(ckpt, image_path, predict_out, all_stages);
      for (const auto& f : files) std::cout << f << "\n";
    } else if (ablate_cmd->parsed()) {
      dad::RunConfig cfg = load_config(config_path, profile);
      std::ifstream gf(grid_path);
      if (!gf.good()) throw dad::IoError("cannot open grid file '" + grid_path + "'");
      auto grid = dad::parse_grid(gf);
      std::string csv = ablate_out.empty() ? "ablation.csv" : ablate_out;
      auto rows = dad::run_ablation<float>(cfg, grid, csv, /*quiet=*/false);
      int failed = 0;
      for (const auto& r : rows) failed += r.status != "OK";
      std::cout << rows.size() << " variants, " << failed << " failed. table: " << csv << "\n";
      return failed == 0 ? 0 : 1;
    } else if (rf_cmd->parsed()) {
      print_rf_table();
    } else if (synth_cmd->parsed()) {
      dad::write_synthetic_dataset<float>(synth_out, count, size, static_cast<std::uint64_t>(seed));
      std::cout << "wrote " << count << " pairs to " << synth_out << "\n";
    }
  } catch (const dad::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}
