#ifndef DAD_BACKBONE_HPP
#define DAD_BACKBONE_HPP

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>

#include "dad/attention.hpp"

namespace dad {

// ---------------------------------------------------------------------------
// Feature pyramid
// ---------------------------------------------------------------------------

template <typename S>
struct PyramidLevel {
  Value<S> features;  // [B,C,H,W]
  Index channels = 0;
  Index stride = 0;
};

template <typename S>
struct FeaturePyramid {
  std::vector<PyramidLevel<S>> levels;  // levels[0] is level 1

  Index num_levels() const { return static_cast<Index>(levels.size()); }
  const PyramidLevel<S>& level(Index one_based) const {
    DAD_CHECK(one_based >= 1 && one_based <= num_levels(), ValidationError,
              "pyramid level " + std::to_string(one_based) + " out of range");
    return levels[static_cast<std::size_t>(one_based - 1)];
  }

  void validate(Index in_h, Index in_w) const {
    DAD_CHECK(num_levels() == 4 || num_levels() == 5, ValidationError,
              "pyramid must have 4 or 5 levels");
    Index prev_stride = 0;
    for (const auto& l : levels) {
      DAD_CHECK(l.stride > prev_stride, ValidationError, "pyramid strides must strictly increase");
      DAD_CHECK((l.stride & (l.stride - 1)) == 0, ValidationError, "pyramid stride must be a power of two");
      DAD_CHECK(l.channels > 0, ValidationError, "pyramid channels must be positive");
      DAD_CHECK(l.features.dim(1) == l.channels, ShapeError, "pyramid channel metadata mismatch");
      DAD_CHECK(l.features.dim(2) == in_h / l.stride && l.features.dim(3) == in_w / l.stride, ShapeError,
                "pyramid level size must equal input size divided by stride");
      prev_stride = l.stride;
    }
  }
};

// ---------------------------------------------------------------------------
// Layer partition between the guide-map stage (A) and the fusion stage (B)
// ---------------------------------------------------------------------------

struct LayerPartition {
  std::vector<int> stage_a;  // ascending 1-based level indices
  std::vector<int> stage_b;
  bool relaxed = false;

  static LayerPartition defaults(int num_levels) {
    return parse(num_levels == 4 ? "1+4" : "1+5", num_levels, false);
  }

  // Parse a '+'-separated list of Stage-A levels; Stage B is the complement.
  // Four-level pyramids re-use level 1 for Stage B when the complement is
  // short. `relaxed` admits non-standard splits used by the partition sweep.
  static LayerPartition parse(const std::string& text, int num_levels, bool relaxed_mode) {
    LayerPartition p;
    p.relaxed = relaxed_mode;
    std::set<int> a;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, '+')) {
      if (tok.empty()) continue;
      int v = 0;
      try {
        v = std::stoi(tok);
      } catch (const std::exception&) {
        throw ValidationError("partition '" + text + "': token '" + tok + "' is not a level index");
      }
      a.insert(v);
    }
    DAD_CHECK(!a.empty(), ValidationError, "partition '" + text + "': no levels given");
    p.stage_a.assign(a.begin(), a.end());
    for (int l = 1; l <= num_levels; ++l)
      if (!a.count(l)) p.stage_b.push_back(l);
    if (num_levels == 4 && static_cast<int>(p.stage_b.size()) < 3 && !std::count(p.stage_b.begin(), p.stage_b.end(), 1))
      p.stage_b.insert(p.stage_b.begin(), 1);
    p.validate(num_levels);
    return p;
  }

  void validate(int num_levels) const {
    for (int v : stage_a)
      DAD_CHECK(v >= 1 && v <= num_levels, ValidationError,
                "partition: stage A level " + std::to_string(v) + " outside 1.." + std::to_string(num_levels));
    for (int v : stage_b)
      DAD_CHECK(v >= 1 && v <= num_levels, ValidationError,
                "partition: stage B level " + std::to_string(v) + " outside 1.." + std::to_string(num_levels));
    DAD_CHECK(!stage_a.empty() && stage_a.back() == num_levels, ValidationError,
              "partition: stage A must contain the highest level");
    DAD_CHECK(!stage_b.empty(), ValidationError, "partition: stage B must be non-empty");
    if (relaxed) return;
    DAD_CHECK(stage_a.size() == 2, ValidationError,
              "partition: stage A must contain exactly 2 levels (got " + std::to_string(stage_a.size()) +
                  "); pass the relaxed flag for non-standard splits");
    DAD_CHECK(stage_b.size() == 3, ValidationError,
              "partition: stage B must contain exactly 3 levels (got " + std::to_string(stage_b.size()) + ")");
    for (int v : stage_a) {
      bool overlap = std::count(stage_b.begin(), stage_b.end(), v) > 0;
      if (num_levels == 5)
        DAD_CHECK(!overlap, ValidationError, "partition: stages must not overlap for 5-level pyramids");
      else
        DAD_CHECK(!overlap || v == 1, ValidationError,
                  "partition: 4-level stages may overlap only at level 1");
    }
  }

  int highest() const { return stage_a.back(); }
  std::vector<int> stage_a_lows() const {
    return std::vector<int>(stage_a.begin(), stage_a.end() - 1);
  }
};

// Selected views over a pyramid; selection shares feature handles, it never
// copies feature data.
template <typename S>
struct PartitionedFeatures {
  std::vector<PyramidLevel<S>> stage_a;  // ascending; last entry is the highest level
  std::vector<PyramidLevel<S>> stage_b;  // ascending
};

template <typename S>
PartitionedFeatures<S> partition(const FeaturePyramid<S>& pyr, const LayerPartition& spec) {
  spec.validate(static_cast<int>(pyr.num_levels()));
  PartitionedFeatures<S> out;
  for (int l : spec.stage_a) out.stage_a.push_back(pyr.level(l));
  for (int l : spec.stage_b) out.stage_b.push_back(pyr.level(l));
  return out;
}

// ---------------------------------------------------------------------------
// Backbone adapters
// ---------------------------------------------------------------------------

template <typename S>
class Backbone : public Module<S> {
 public:
  virtual FeaturePyramid<S> forward(const Value<S>& x) = 0;
  virtual std::vector<Index> strides() const = 0;
  virtual std::vector<Index> channel_plan() const = 0;
  virtual std::string id() const = 0;
  Index num_levels() const { return static_cast<Index>(strides().size()); }
};

// Validated entry point: checks input divisibility and the pyramid contract.
template <typename S>
FeaturePyramid<S> extract_features(Backbone<S>& bb, const Value<S>& images) {
  const auto& s = images.shape();
  DAD_CHECK(s.size() == 4 && s[1] == 3, ShapeError, "extract_features: expects [B,3,H,W]");
  DAD_CHECK(s[2] % 32 == 0 && s[3] % 32 == 0, ValidationError,
            "extract_features: H and W must be divisible by 32, got " + std::to_string(s[2]) + "x" +
                std::to_string(s[3]));
  FeaturePyramid<S> pyr = bb.forward(images);
  pyr.validate(s[2], s[3]);
  return pyr;
}

// Tiny five-level test adapter: one stride-2 conv block per level with fixed
// seeded weights, channels {8,16,24,32,40}.
template <typename S>
class SyntheticBackbone : public Backbone<S> {
 public:
  explicit SyntheticBackbone(std::uint64_t seed = 1234) {
    Rng rng(seed);
    Index in = 3;
    const auto chans = channel_plan();
    for (std::size_t i = 0; i < chans.size(); ++i) {
      blocks_.push_back(
          std::make_unique<ConvBlock<S>>(ConvBlockSpec::same(in, chans[i], 3, 2), rng));
      this->register_child("level" + std::to_string(i + 1), blocks_.back().get());
      in = chans[i];
    }
  }

  FeaturePyramid<S> forward(const Value<S>& x) override {
    FeaturePyramid<S> pyr;
    Value<S> cur = x;
    const auto st = strides();
    const auto ch = channel_plan();
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      cur = blocks_[i]->forward(cur);
      pyr.levels.push_back({cur, ch[i], st[i]});
    }
    return pyr;
  }

  std::vector<Index> strides() const override { return {2, 4, 8, 16, 32}; }
  std::vector<Index> channel_plan() const override { return {8, 16, 24, 32, 40}; }
  std::string id() const override { return "synthetic"; }

 private:
  std::vector<std::unique_ptr<ConvBlock<S>>> blocks_;
};

// Two-convolution residual unit with projection shortcut.
template <typename S>
class ResidualUnit : public Module<S> {
 public:
  ResidualUnit(Index cin, Index cout, Index stride, Rng& rng)
      : conv1_(ConvBlockSpec::same(cin, cout, 3, stride), rng),
        conv2_(ConvBlockSpec::same(cout, cout, 3), rng, false),
        project_(cin != cout || stride != 1) {
    this->register_child("conv1", &conv1_);
    this->register_child("conv2", &conv2_);
    if (project_) {
      shortcut_ = std::make_unique<ConvBlock<S>>(ConvBlockSpec::same(cin, cout, 1, stride), rng, false);
      this->register_child("shortcut", shortcut_.get());
    }
  }

  Value<S> forward(const Value<S>& x) {
    Value<S> y = conv2_.forward(conv1_.forward(x));
    Value<S> sc = project_ ? shortcut_->forward(x) : x;
    return relu(add(y, sc));
  }

 private:
  ConvBlock<S> conv1_, conv2_;
  bool project_;
  std::unique_ptr<ConvBlock<S>> shortcut_;
};

// Five-level residual adapter: level 1 is the stem output at stride 2,
// levels 2-5 are the four residual stages.
template <typename S>
class ResidualBackbone : public Backbone<S> {
 public:
  explicit ResidualBackbone(std::uint64_t seed = 1234, Index blocks_per_stage = 2) {
    Rng rng(seed);
    stem_ = std::make_unique<ConvBlock<S>>(ConvBlockSpec::same(3, 64, 7, 2), rng);
    this->register_child("stem", stem_.get());
    const auto ch = channel_plan();
    Index cin = ch[0];
    for (int s = 0; s < 4; ++s) {
      Index cout = ch[static_cast<std::size_t>(s) + 1];
      // stage 1 is downsampled by the pooling layer, later stages by stride
      Index stride = s == 0 ? 1 : 2;
      for (Index b = 0; b < blocks_per_stage; ++b) {
        units_.push_back(std::make_unique<ResidualUnit<S>>(cin, cout, b == 0 ? stride : 1, rng));
        this->register_child("stage" + std::to_string(s + 1) + "." + std::to_string(b),
                             units_.back().get());
        cin = cout;
      }
    }
    blocks_per_stage_ = blocks_per_stage;
  }

  FeaturePyramid<S> forward(const Value<S>& x) override {
    FeaturePyramid<S> pyr;
    const auto ch = channel_plan();
    const auto st = strides();
    Value<S> cur = stem_->forward(x);
    pyr.levels.push_back({cur, ch[0], st[0]});
    cur = maxpool2d(cur, 3, 2, 1);
    std::size_t u = 0;
    for (int s = 0; s < 4; ++s) {
      for (Index b = 0; b < blocks_per_stage_; ++b) cur = units_[u++]->forward(cur);
      pyr.levels.push_back({cur, ch[static_cast<std::size_t>(s) + 1], st[static_cast<std::size_t>(s) + 1]});
    }
    return pyr;
  }

  std::vector<Index> strides() const override { return {2, 4, 8, 16, 32}; }
  std::vector<Index> channel_plan() const override { return {64, 64, 128, 256, 512}; }
  std::string id() const override { return "residual"; }

 private:
  std::unique_ptr<ConvBlock<S>> stem_;
  std::vector<std::unique_ptr<ResidualUnit<S>>> units_;
  Index blocks_per_stage_ = 2;
};

// One transformer block with spatial-reduction attention; channel layer norm
// stands in for token layer norm.
template <typename S>
class SpatialReductionBlock : public Module<S> {
 public:
  SpatialReductionBlock(Index c, Index sr_ratio, Rng& rng)
      : sr_ratio_(sr_ratio),
        norm1_(c),
        norm2_(c),
        query_(c, c, 1, 1, 1, 0, false, rng),
        key_(c, c, 1, 1, 1, 0, false, rng),
        value_(c, c, 1, 1, 1, 0, false, rng),
        proj_(c, c, 1, 1, 1, 0, false, rng),
        mlp1_(c, 2 * c, 1, 1, 1, 0, false, rng),
        mlp2_(2 * c, c, 1, 1, 1, 0, false, rng) {
    this->register_child("norm1", &norm1_);
    this->register_child("norm2", &norm2_);
    this->register_child("query", &query_);
    this->register_child("key", &key_);
    this->register_child("value", &value_);
    this->register_child("proj", &proj_);
    this->register_child("mlp1", &mlp1_);
    this->register_child("mlp2", &mlp2_);
    if (sr_ratio > 1) {
      reduce_ = std::make_unique<Conv2d<S>>(c, c, sr_ratio, sr_ratio, 1, 0, false, rng);
      this->register_child("reduce", reduce_.get());
      rnorm_ = std::make_unique<LayerNormChannels<S>>(c);
      this->register_child("rnorm", rnorm_.get());
    }
  }

  Value<S> forward(const Value<S>& x) {
    const auto& s = x.shape();
    Index b = s[0], c = s[1], h = s[2], w = s[3], n = h * w;
    Value<S> xn = norm1_.forward(x);
    Value<S> kv = sr_ratio_ > 1 ? rnorm_->forward(reduce_->forward(xn)) : xn;
    Index nr = kv.dim(2) * kv.dim(3);
    Value<S> q = transpose_last2(reshape(query_.forward(xn), {b, c, n}));   // [B,N,C]
    Value<S> k = reshape(key_.forward(kv), {b, c, nr});                     // [B,C,Nr]
    Value<S> v = reshape(value_.forward(kv), {b, c, nr});
    Value<S> att = softmax_rows(mul_scalar(bmm(q, k), S(1.0 / std::sqrt(double(c)))));
    Value<S> out = transpose_last2(bmm(att, transpose_last2(v)));           // [B,C,N]
    Value<S> attended = proj_.forward(reshape(out, {b, c, h, w}));
    Value<S> y = add(x, attended);
    Value<S> m = mlp2_.forward(relu(mlp1_.forward(norm2_.forward(y))));
    return add(y, m);
  }

 private:
  Index sr_ratio_;
  LayerNormChannels<S> norm1_, norm2_;
  Conv2d<S> query_, key_, value_, proj_, mlp1_, mlp2_;
  std::unique_ptr<Conv2d<S>> reduce_;
  std::unique_ptr<LayerNormChannels<S>> rnorm_;
};

// Four-level pyramid-transformer-style adapter, strides {4,8,16,32}.
template <typename S>
class PyramidTransformerBackbone : public Backbone<S> {
 public:
  explicit PyramidTransformerBackbone(std::uint64_t seed = 1234) {
    Rng rng(seed);
    const auto ch = channel_plan();
    const std::vector<Index> sr{8, 4, 2, 1};
    Index cin = 3;
    for (int s = 0; s < 4; ++s) {
      Index c = ch[static_cast<std::size_t>(s)];
      embeds_.push_back(s == 0 ? std::make_unique<Conv2d<S>>(cin, c, 7, 4, 1, 3, false, rng)
                               : std::make_unique<Conv2d<S>>(cin, c, 3, 2, 1, 1, false, rng));
      this->register_child("embed" + std::to_string(s + 1), embeds_.back().get());
      embed_norms_.push_back(std::make_unique<LayerNormChannels<S>>(c));
      this->register_child("embed_norm" + std::to_string(s + 1), embed_norms_.back().get());
      blocks_.push_back(std::make_unique<SpatialReductionBlock<S>>(c, sr[static_cast<std::size_t>(s)], rng));
      this->register_child("block" + std::to_string(s + 1), blocks_.back().get());
      cin = c;
    }
  }

  FeaturePyramid<S> forward(const Value<S>& x) override {
    FeaturePyramid<S> pyr;
    const auto ch = channel_plan();
    const auto st = strides();
    Value<S> cur = x;
    for (std::size_t s = 0; s < 4; ++s) {
      cur = embed_norms_[s]->forward(embeds_[s]->forward(cur));
      cur = blocks_[s]->forward(cur);
      pyr.levels.push_back({cur, ch[s], st[s]});
    }
    return pyr;
  }

  std::vector<Index> strides() const override { return {4, 8, 16, 32}; }
  std::vector<Index> channel_plan() const override { return {32, 64, 128, 256}; }
  std::string id() const override { return "pvt"; }

 private:
  std::vector<std::unique_ptr<Conv2d<S>>> embeds_;
  std::vector<std::unique_ptr<LayerNormChannels<S>>> embed_norms_;
  std::vector<std::unique_ptr<SpatialReductionBlock<S>>> blocks_;
};

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

template <typename S>
using BackboneFactory = std::function<std::unique_ptr<Backbone<S>>(std::uint64_t seed)>;

template <typename S>
std::map<std::string, BackboneFactory<S>>& backbone_registry() {
  static std::map<std::string, BackboneFactory<S>> reg{
      {"synthetic", [](std::uint64_t seed) { return std::make_unique<SyntheticBackbone<S>>(seed); }},
      {"residual", [](std::uint64_t seed) { return std::make_unique<ResidualBackbone<S>>(seed); }},
      {"pvt", [](std::uint64_t seed) { return std::make_unique<PyramidTransformerBackbone<S>>(seed); }},
  };
  return reg;
}

template <typename S>
std::unique_ptr<Backbone<S>> make_backbone(const std::string& backbone_id, std::uint64_t seed = 1234) {
  auto& reg = backbone_registry<S>();
  auto it = reg.find(backbone_id);
  if (it == reg.end()) {
    std::string known;
    for (const auto& [k, v] : reg) known += (known.empty() ? "" : ", ") + k;
    throw ConfigError("unknown backbone '" + backbone_id + "' (registered: " + known + ")");
  }
  return it->second(seed);
}

}  // namespace dad

#endif  // DAD_BACKBONE_HPP
