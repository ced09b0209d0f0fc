#ifndef DAD_CONFIG_HPP
#define DAD_CONFIG_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dad/decoder.hpp"
#include "dad/loss.hpp"
#include "dad/optim.hpp"

namespace dad {

struct DataConfig {
  std::string train_dir;
  std::vector<std::string> test_dirs;
  Index image_size = 416;
};

struct OptimConfig {
  std::string algorithm = "adam";
  double lr = 1e-4;
  double lr_decay = 0.1;
  Index lr_decay_every = 50;
  Index max_lr_decays = 3;
  Index epochs = 200;
  Index batch_size = 36;
  Index checkpoint_every = 50;
  Index max_steps = 0;  // 0 = no cap; caps total optimizer steps when set

  LrSchedule schedule() const { return LrSchedule{lr, lr_decay, lr_decay_every, max_lr_decays}; }
};

// Flat dotted-key run configuration. Every field carries the training-recipe
// default (416 input, adam at 1e-4 decayed x0.1 every 50 epochs, 200 epochs,
// batch 36); the desk profile shrinks everything to laptop scale.
struct RunConfig {
  ModelConfig model;
  std::string backbone_weights;  // optional pretrained-backbone blob
  DataConfig data;
  OptimConfig optim;
  LossConfig loss;
  std::uint64_t seed = 42;
  std::string output_dir = "runs/default";

  void validate() const {
    DAD_CHECK(data.image_size >= 32 && data.image_size % 32 == 0, ValidationError,
              "config: data.image_size must be a positive multiple of 32");
    DAD_CHECK(optim.epochs >= 1, ValidationError, "config: optim.epochs must be >= 1");
    DAD_CHECK(optim.batch_size >= 1, ValidationError, "config: optim.batch_size must be >= 1");
    DAD_CHECK(optim.algorithm == "adam", ConfigError,
              "config: optim.algorithm '" + optim.algorithm + "' is not supported (adam)");
    DAD_CHECK(model.dae_repeats >= 1, ValidationError, "config: model.dae_repeats must be >= 1");
    loss.validate();
  }

  void apply_profile(const std::string& name) {
    if (name == "paper") return;  // full-scale defaults
    if (name == "desk") {
      data.image_size = 64;
      optim.batch_size = 4;
      optim.epochs = 5;
      optim.lr = 1e-3;  // small batches on tiny images need the larger step
      optim.checkpoint_every = 5;
      if (model.backbone == "residual") model.backbone = "synthetic";
      return;
    }
    throw ConfigError("unknown profile '" + name + "' (desk, paper)");
  }

  static RunConfig from_kv(const std::map<std::string, std::string>& kv);
  static RunConfig from_file(const std::string& path);
  std::string to_kv_text() const;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

inline Index parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    Index r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

// Parse "key = value" lines; '#' starts a comment.
inline std::map<std::string, std::string> read_kv_text(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    DAD_CHECK(eq != std::string::npos, ConfigError,
              "config: line " + std::to_string(lineno) + " is not 'key = value': " + line);
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    DAD_CHECK(!key.empty(), ConfigError, "config: empty key on line " + std::to_string(lineno));
    kv[key] = val;
  }
  return kv;
}

}  // namespace config_detail

inline RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv) {
  using namespace config_detail;
  RunConfig c;
  for (const auto& [key, v] : kv) {
    if (key == "model.backbone") c.model.backbone = v;
    else if (key == "model.partition") c.model.partition = v;
    else if (key == "model.partition_relaxed") c.model.partition_relaxed = parse_bool(key, v);
    else if (key == "model.fem_variant") c.model.fem_variant = parse_fem_variant(v);
    else if (key == "model.fusion") c.model.fusion = parse_fusion(v);
    else if (key == "model.dae_repeats") c.model.dae_repeats = parse_int(key, v);
    else if (key == "model.use_dgm") c.model.use_dgm = parse_bool(key, v);
    else if (key == "model.dem_mode") c.model.dem_mode = parse_dem_mode(v);
    else if (key == "model.mff_fem_after_concat") c.model.mff_fem_after_concat = parse_bool(key, v);
    else if (key == "model.backbone_weights") c.backbone_weights = v;
    else if (key == "data.train_dir") c.data.train_dir = v;
    else if (key == "data.test_dirs") c.data.test_dirs = split_list(v);
    else if (key == "data.image_size") c.data.image_size = parse_int(key, v);
    else if (key == "optim.algorithm") c.optim.algorithm = v;
    else if (key == "optim.lr") c.optim.lr = parse_double(key, v);
    else if (key == "optim.lr_decay") c.optim.lr_decay = parse_double(key, v);
    else if (key == "optim.lr_decay_every") c.optim.lr_decay_every = parse_int(key, v);
    else if (key == "optim.max_lr_decays") c.optim.max_lr_decays = parse_int(key, v);
    else if (key == "optim.epochs") c.optim.epochs = parse_int(key, v);
    else if (key == "optim.batch_size") c.optim.batch_size = parse_int(key, v);
    else if (key == "optim.checkpoint_every") c.optim.checkpoint_every = parse_int(key, v);
    else if (key == "optim.max_steps") c.optim.max_steps = parse_int(key, v);
    else if (key == "loss.weight_kernel") c.loss.weight_kernel = parse_int(key, v);
    else if (key == "loss.weight_gain") c.loss.weight_gain = parse_double(key, v);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, v));
    else if (key == "output_dir") c.output_dir = v;
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  c.model.seed = c.seed;
  return c;
}

inline RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  DAD_CHECK(in.good(), IoError, "config: cannot open '" + path + "'");
  auto kv = config_detail::read_kv_text(in);
  return from_kv(kv);
}

inline std::string RunConfig::to_kv_text() const {
  std::ostringstream os;
  os << "model.backbone = " << model.backbone << "\n";
  if (!model.partition.empty()) os << "model.partition = " << model.partition << "\n";
  os << "model.partition_relaxed = " << (model.partition_relaxed ? "true" : "false") << "\n";
  os << "model.fem_variant = " << to_string(model.fem_variant) << "\n";
  os << "model.fusion = " << to_string(model.fusion) << "\n";
  os << "model.dae_repeats = " << model.dae_repeats << "\n";
  os << "model.use_dgm = " << (model.use_dgm ? "true" : "false") << "\n";
  os << "model.dem_mode = " << to_string(model.dem_mode) << "\n";
  os << "model.mff_fem_after_concat = " << (model.mff_fem_after_concat ? "true" : "false") << "\n";
  if (!backbone_weights.empty()) os << "model.backbone_weights = " << backbone_weights << "\n";
  if (!data.train_dir.empty()) os << "data.train_dir = " << data.train_dir << "\n";
  if (!data.test_dirs.empty()) {
    os << "data.test_dirs = ";
    for (std::size_t i = 0; i < data.test_dirs.size(); ++i)
      os << (i ? "," : "") << data.test_dirs[i];
    os << "\n";
  }
  os << "data.image_size = " << data.image_size << "\n";
  os << "optim.algorithm = " << optim.algorithm << "\n";
  os << "optim.lr = " << optim.lr << "\n";
  os << "optim.lr_decay = " << optim.lr_decay << "\n";
  os << "optim.lr_decay_every = " << optim.lr_decay_every << "\n";
  os << "optim.max_lr_decays = " << optim.max_lr_decays << "\n";
  os << "optim.epochs = " << optim.epochs << "\n";
  os << "optim.batch_size = " << optim.batch_size << "\n";
  os << "optim.checkpoint_every = " << optim.checkpoint_every << "\n";
  os << "optim.max_steps = " << optim.max_steps << "\n";
  os << "loss.weight_kernel = " << loss.weight_kernel << "\n";
  os << "loss.weight_gain = " << loss.weight_gain << "\n";
  os << "seed = " << seed << "\n";
  os << "output_dir = " << output_dir << "\n";
  return os.str();
}

}  // namespace dad

#endif  // DAD_CONFIG_HPP
