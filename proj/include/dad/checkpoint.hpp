#ifndef DAD_CHECKPOINT_HPP
#define DAD_CHECKPOINT_HPP

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "dad/nn.hpp"

namespace dad {

// Single-file checkpoint: versioned header, a config snapshot, then named
// parameter and buffer blobs stored as 64-bit floats.

constexpr char kCheckpointMagic[8] = {'D', 'A', 'D', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::string config_text;
  Index epoch = 0;
};

namespace ckpt_detail {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::ifstream& in, T& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  DAD_CHECK(in.good(), LoadError, "checkpoint '" + path + "' is truncated or corrupt");
}

inline void write_string(std::ofstream& out, const std::string& s) {
  write_pod(out, static_cast<std::uint64_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::ifstream& in, const std::string& path) {
  std::uint64_t n = 0;
  read_pod(in, n, path);
  DAD_CHECK(n < (1ull << 31), LoadError, "checkpoint '" + path + "' has an implausible string length");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  DAD_CHECK(in.good(), LoadError, "checkpoint '" + path + "' is truncated or corrupt");
  return s;
}

template <typename S>
void write_blob(std::ofstream& out, std::uint8_t kind, const std::string& name, const Tensor<S>& t) {
  write_pod(out, kind);
  write_string(out, name);
  write_pod(out, static_cast<std::uint32_t>(t.rank()));
  for (Index i = 0; i < t.rank(); ++i) write_pod(out, static_cast<std::int64_t>(t.dim(i)));
  for (Index i = 0; i < t.numel(); ++i) write_pod(out, static_cast<double>(t[i]));
}

}  // namespace ckpt_detail

template <typename S>
void save_checkpoint(const std::string& path, Module<S>& model, const std::string& config_text,
                     Index epoch) {
  std::ofstream out(path, std::ios::binary);
  DAD_CHECK(out.good(), IoError, "cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  ckpt_detail::write_pod(out, kCheckpointVersion);
  ckpt_detail::write_pod(out, static_cast<std::int64_t>(epoch));
  ckpt_detail::write_string(out, config_text);
  auto params = model.named_parameters();
  auto buffers = model.named_buffers();
  ckpt_detail::write_pod(out, static_cast<std::uint64_t>(params.size() + buffers.size()));
  for (auto& [name, v] : params) ckpt_detail::write_blob<S>(out, 0, name, v.val());
  for (auto& [name, t] : buffers) ckpt_detail::write_blob<S>(out, 1, name, *t);
  DAD_CHECK(out.good(), IoError, "error while writing checkpoint '" + path + "'");
}

// Read only the header (for model reconstruction before weight loading).
inline CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  DAD_CHECK(in.good(), LoadError, "cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  DAD_CHECK(in.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0, LoadError,
            "'" + path + "' is not a checkpoint file");
  std::uint32_t version = 0;
  ckpt_detail::read_pod(in, version, path);
  DAD_CHECK(version == kCheckpointVersion, LoadError,
            "checkpoint '" + path + "' has unsupported format version " + std::to_string(version));
  CheckpointInfo info;
  std::int64_t epoch = 0;
  ckpt_detail::read_pod(in, epoch, path);
  info.epoch = epoch;
  info.config_text = ckpt_detail::read_string(in, path);
  return info;
}

// Load blobs into a module. Every blob must match a parameter or buffer by
// name; shape disagreement is a configuration error (the model was built
// from a different config). With `partial`, blobs are matched by name under
// `prefix` and extras are ignored (pretrained-backbone use).
template <typename S>
CheckpointInfo load_checkpoint(const std::string& path, Module<S>& model, bool partial = false,
                               const std::string& prefix = "") {
  std::ifstream in(path, std::ios::binary);
  DAD_CHECK(in.good(), LoadError, "cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  DAD_CHECK(in.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0, LoadError,
            "'" + path + "' is not a checkpoint file");
  std::uint32_t version = 0;
  ckpt_detail::read_pod(in, version, path);
  DAD_CHECK(version == kCheckpointVersion, LoadError,
            "checkpoint '" + path + "' has unsupported format version " + std::to_string(version));
  CheckpointInfo info;
  std::int64_t epoch = 0;
  ckpt_detail::read_pod(in, epoch, path);
  info.epoch = epoch;
  info.config_text = ckpt_detail::read_string(in, path);

  std::map<std::string, Tensor<S>*> slots;
  std::map<std::string, Value<S>> params;
  for (auto& [name, v] : model.named_parameters()) params.emplace(name, v);
  for (auto& [name, t] : model.named_buffers()) slots.emplace(name, t);

  std::uint64_t count = 0;
  ckpt_detail::read_pod(in, count, path);
  std::size_t matched = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint8_t kind = 0;
    ckpt_detail::read_pod(in, kind, path);
    std::string name = ckpt_detail::read_string(in, path);
    std::uint32_t rank = 0;
    ckpt_detail::read_pod(in, rank, path);
    DAD_CHECK(rank <= 8, LoadError, "checkpoint '" + path + "' has an implausible tensor rank");
    std::vector<Index> shape(rank);
    Index numel = 1;
    for (auto& d : shape) {
      std::int64_t v = 0;
      ckpt_detail::read_pod(in, v, path);
      d = v;
      numel *= v;
    }
    Tensor<S> data(shape);
    for (Index j = 0; j < numel; ++j) {
      double v = 0;
      ckpt_detail::read_pod(in, v, path);
      data[j] = static_cast<S>(v);
    }

    std::string target = name;
    if (partial) {
      if (!prefix.empty()) {
        if (name.rfind(prefix, 0) != 0) continue;
        target = name.substr(prefix.size());
      }
    }
    Tensor<S>* dst = nullptr;
    if (kind == 0) {
      auto it = params.find(target);
      if (it != params.end()) dst = &it->second.val();
    } else {
      auto it = slots.find(target);
      if (it != slots.end()) dst = it->second;
    }
    if (!dst) {
      DAD_CHECK(partial, ConfigError, "checkpoint entry '" + name + "' has no matching slot in the model");
      continue;
    }
    DAD_CHECK(dst->shape() == data.shape(), ConfigError,
              "checkpoint entry '" + name + "' has shape " + Tensor<S>::shape_str(data.shape()) +
                  " but the model expects " + Tensor<S>::shape_str(dst->shape()));
    *dst = std::move(data);
    ++matched;
  }
  DAD_CHECK(!partial || matched > 0, LoadError,
            "no entries in '" + path + "' matched prefix '" + prefix + "'");
  if (!partial) {
    DAD_CHECK(matched == params.size() + slots.size(), ConfigError,
              "checkpoint '" + path + "' does not cover every model parameter");
  }
  return info;
}

}  // namespace dad

#endif  // DAD_CHECKPOINT_HPP
