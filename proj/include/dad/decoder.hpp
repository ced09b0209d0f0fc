#ifndef DAD_DECODER_HPP
#define DAD_DECODER_HPP

#include <memory>
#include <string>
#include <vector>

#include "dad/backbone.hpp"

namespace dad {

constexpr Index kReducedChannels = 32;     // per-branch width after channel reduction
constexpr Index kBackgroundChannels = 96;  // background-aware feature width (3 branches)
constexpr Index kHeadChannels = 64;        // width of the map-head conv blocks

enum class FemVariant { fem, fem_no_dilation, dilated_pyramid };
enum class FusionMode { middle, bottom_up, top_down };
enum class DemMode { f_minus_b, f_only, b_only };

inline FemVariant parse_fem_variant(const std::string& s) {
  if (s == "fem") return FemVariant::fem;
  if (s == "fem_no_dilation") return FemVariant::fem_no_dilation;
  if (s == "dilated_pyramid") return FemVariant::dilated_pyramid;
  throw ConfigError("unknown fem variant '" + s + "' (fem, fem_no_dilation, dilated_pyramid)");
}
inline std::string to_string(FemVariant v) {
  switch (v) {
    case FemVariant::fem: return "fem";
    case FemVariant::fem_no_dilation: return "fem_no_dilation";
    default: return "dilated_pyramid";
  }
}
inline FusionMode parse_fusion(const std::string& s) {
  if (s == "middle") return FusionMode::middle;
  if (s == "bottom_up") return FusionMode::bottom_up;
  if (s == "top_down") return FusionMode::top_down;
  throw ConfigError("unknown fusion mode '" + s + "' (middle, bottom_up, top_down)");
}
inline std::string to_string(FusionMode v) {
  switch (v) {
    case FusionMode::middle: return "middle";
    case FusionMode::bottom_up: return "bottom_up";
    default: return "top_down";
  }
}
inline DemMode parse_dem_mode(const std::string& s) {
  if (s == "f_minus_b") return DemMode::f_minus_b;
  if (s == "f_only") return DemMode::f_only;
  if (s == "b_only") return DemMode::b_only;
  throw ConfigError("unknown dem mode '" + s + "' (f_minus_b, f_only, b_only)");
}
inline std::string to_string(DemMode v) {
  switch (v) {
    case DemMode::f_minus_b: return "f_minus_b";
    case DemMode::f_only: return "f_only";
    default: return "b_only";
  }
}

struct ModelConfig {
  std::string backbone = "residual";
  std::string partition;  // empty -> default split for the backbone's level count
  bool partition_relaxed = false;
  FemVariant fem_variant = FemVariant::fem;
  FusionMode fusion = FusionMode::middle;
  Index dae_repeats = 2;
  bool use_dgm = true;
  DemMode dem_mode = DemMode::f_minus_b;
  bool mff_fem_after_concat = false;  // alternative: one field expansion after concatenation
  Index attention_max_positions = 4096;
  Index dgm_max_positions = 1 << 16;
  std::uint64_t seed = 1234;
};

// Single-channel pre-activation foreground evidence map.
template <typename S>
struct GuideMap {
  Value<S> logits;  // [B,1,Hg,Wg]

  static GuideMap wrap(Value<S> v) {
    DAD_CHECK(v.shape().size() == 4 && v.dim(1) == 1, ShapeError, "guide map must be [B,1,H,W]");
    DAD_CHECK(v.val().array().allFinite(), ValidationError, "guide map has non-finite values");
    return GuideMap{std::move(v)};
  }
};

// Fused mid-level feature block at the fusion base resolution.
template <typename S>
struct BackgroundFeatures {
  Value<S> features;  // [B,96,Hb,Wb]
};

// Deeply supervised output maps, all resized to input resolution.
template <typename S>
struct DecoderOutputs {
  std::vector<Value<S>> maps;  // maps[0] = C0, maps[k] = k-th refinement

  Index count() const { return static_cast<Index>(maps.size()); }
  const Value<S>& c0() const { return maps.at(0); }
  const Value<S>& c1() const { return maps.at(1); }
  const Value<S>& c2() const { return maps.at(2); }
  const Value<S>& final() const { return maps.back(); }
};

// ---------------------------------------------------------------------------
// Receptive-field module behind a common interface so the ablations can swap
// the field expansion for the dilated-pyramid baseline.
// ---------------------------------------------------------------------------

template <typename S>
class ReceptiveModule : public Module<S> {
 public:
  virtual Value<S> forward(const Value<S>& x) = 0;
};

template <typename S>
class FemReceptive : public ReceptiveModule<S> {
 public:
  FemReceptive(const FemConfig& cfg, Rng& rng) : fem_(cfg, rng) { this->register_child("fem", &fem_); }
  Value<S> forward(const Value<S>& x) override { return fem_.forward(x); }

 private:
  FieldExpansion<S> fem_;
};

template <typename S>
class PyramidReceptive : public ReceptiveModule<S> {
 public:
  PyramidReceptive(const DilatedPyramidConfig& cfg, Rng& rng) : dp_(cfg, rng) {
    this->register_child("pyramid", &dp_);
  }
  Value<S> forward(const Value<S>& x) override { return dp_.forward(x); }

 private:
  DilatedPyramid<S> dp_;
};

template <typename S>
std::unique_ptr<ReceptiveModule<S>> make_receptive(FemVariant v, Index in, Index branch, Index out,
                                                   Rng& rng) {
  switch (v) {
    case FemVariant::fem:
      return std::make_unique<FemReceptive<S>>(FemConfig::make(in, branch, out), rng);
    case FemVariant::fem_no_dilation:
      return std::make_unique<FemReceptive<S>>(FemConfig::make(in, branch, out).without_dilation(), rng);
    default:
      return std::make_unique<PyramidReceptive<S>>(DilatedPyramidConfig::make(in, branch, out), rng);
  }
}

// ---------------------------------------------------------------------------
// Stage A: guide map generator. Field expansion and dual attention on the
// highest level, upsampled and joined with projected low-level detail, then
// two 3x3 blocks and a single-channel projection.
// ---------------------------------------------------------------------------

template <typename S>
class GuideMapGenerator : public Module<S> {
 public:
  GuideMapGenerator(const std::vector<Index>& low_channels, Index high_channels, FemVariant variant,
                    Rng& rng, Index attention_max_positions = 4096)
      : receptive_(make_receptive<S>(variant, high_channels, kReducedChannels, kBackgroundChannels, rng)),
        dra_(kBackgroundChannels, rng, true, attention_max_positions) {
    this->register_child("receptive", receptive_.get());
    this->register_child("dra", &dra_);
    Index joined = kBackgroundChannels;
    for (std::size_t i = 0; i < low_channels.size(); ++i) {
      low_proj_.push_back(std::make_unique<ConvBlock<S>>(
          ConvBlockSpec::same(low_channels[i], kReducedChannels, 1), rng));
      this->register_child("low_proj." + std::to_string(i), low_proj_.back().get());
      joined += kReducedChannels;
    }
    head1_ = std::make_unique<ConvBlock<S>>(ConvBlockSpec::same(joined, kHeadChannels, 3), rng);
    head2_ = std::make_unique<ConvBlock<S>>(ConvBlockSpec::same(kHeadChannels, kHeadChannels, 3), rng);
    proj_ = std::make_unique<Conv2d<S>>(kHeadChannels, 1, 1, 1, 1, 0, true, rng);
    this->register_child("head1", head1_.get());
    this->register_child("head2", head2_.get());
    this->register_child("proj", proj_.get());
  }

  // lows in ascending level order (may be empty), high = highest level.
  GuideMap<S> forward(const std::vector<Value<S>>& lows, const Value<S>& high) {
    DAD_CHECK(lows.size() == low_proj_.size(), ShapeError, "guide map generator: wrong number of low levels");
    Value<S> top = dra_.forward(receptive_->forward(high));
    Index th = lows.empty() ? top.dim(2) : lows[0].dim(2);
    Index tw = lows.empty() ? top.dim(3) : lows[0].dim(3);
    std::vector<Value<S>> parts{resize_bilinear(top, th, tw)};
    for (std::size_t i = 0; i < lows.size(); ++i) {
      DAD_CHECK(lows[i].dim(2) % th == 0 || th % lows[i].dim(2) == 0, ShapeError,
                "guide map generator: low level size is not an integer multiple of the target");
      Value<S> p = low_proj_[i]->forward(lows[i]);
      parts.push_back(resize_bilinear(p, th, tw));
    }
    Value<S> joined = parts.size() == 1 ? parts[0] : concat_channels<S>(parts);
    Value<S> h = head2_->forward(head1_->forward(joined));
    return GuideMap<S>::wrap(proj_->forward(h));
  }

  DualResidualAttention<S>& dra() { return dra_; }

 private:
  std::unique_ptr<ReceptiveModule<S>> receptive_;
  DualResidualAttention<S> dra_;
  std::vector<std::unique_ptr<ConvBlock<S>>> low_proj_;
  std::unique_ptr<ConvBlock<S>> head1_, head2_;
  std::unique_ptr<Conv2d<S>> proj_;
};

// ---------------------------------------------------------------------------
// Stage B: middle feature fusion. Every input level is brought to the base
// size and reduced to 32 channels; a field expansion runs on each branch
// before concatenation (or once after, behind a flag).
// ---------------------------------------------------------------------------

template <typename S>
class MiddleFeatureFusion : public Module<S> {
 public:
  MiddleFeatureFusion(const std::vector<Index>& channels, const std::vector<Index>& strides,
                      FusionMode mode, FemVariant variant, bool fem_after_concat, Rng& rng)
      : mode_(mode), fem_after_concat_(fem_after_concat), strides_(strides) {
    DAD_CHECK(!channels.empty(), ValidationError, "feature fusion: needs at least one level");
    const Index n = static_cast<Index>(channels.size());
    switch (mode) {
      case FusionMode::middle: base_ = (n - 1) / 2; break;
      case FusionMode::bottom_up: base_ = 0; break;
      case FusionMode::top_down: base_ = n - 1; break;
    }
    for (Index i = 0; i < n; ++i) {
      // One stride step below the base keeps the 3x3 stride-2 reduction; all
      // other levels are resized and reduced by a 1x1 block.
      bool conv_down = (mode == FusionMode::middle && strides[static_cast<std::size_t>(base_)] ==
                                                          2 * strides[static_cast<std::size_t>(i)]);
      ConvBlockSpec spec = conv_down
                               ? ConvBlockSpec::same(channels[static_cast<std::size_t>(i)], kReducedChannels, 3, 2)
                               : ConvBlockSpec::same(channels[static_cast<std::size_t>(i)], kReducedChannels, 1);
      reduce_.push_back(std::make_unique<ConvBlock<S>>(spec, rng));
      conv_down_.push_back(conv_down);
      this->register_child("reduce." + std::to_string(i), reduce_.back().get());
      if (!fem_after_concat) {
        branch_fem_.push_back(make_receptive<S>(variant, kReducedChannels, kReducedChannels, kReducedChannels, rng));
        this->register_child("branch_fem." + std::to_string(i), branch_fem_.back().get());
      }
    }
    Index concat_ch = kReducedChannels * n;
    if (fem_after_concat) {
      post_fem_ = make_receptive<S>(variant, concat_ch, kReducedChannels, kBackgroundChannels, rng);
      this->register_child("post_fem", post_fem_.get());
    } else if (concat_ch != kBackgroundChannels) {
      out_proj_ = std::make_unique<ConvBlock<S>>(ConvBlockSpec::same(concat_ch, kBackgroundChannels, 1), rng);
      this->register_child("out_proj", out_proj_.get());
    }
  }

  BackgroundFeatures<S> forward(const std::vector<Value<S>>& feats) {
    DAD_CHECK(feats.size() == reduce_.size(), ShapeError, "feature fusion: wrong number of levels");
    Index bh = feats[static_cast<std::size_t>(base_)].dim(2);
    Index bw = feats[static_cast<std::size_t>(base_)].dim(3);
    std::vector<Value<S>> branches;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      Value<S> v;
      if (conv_down_[i]) {
        v = reduce_[i]->forward(feats[i]);  // stride-2 reduction to base size
      } else {
        v = reduce_[i]->forward(resize_bilinear(feats[i], bh, bw));
      }
      DAD_CHECK(v.dim(2) == bh && v.dim(3) == bw, ShapeError, "feature fusion: branch size mismatch");
      if (!fem_after_concat_) v = branch_fem_[i]->forward(v);
      branches.push_back(v);
    }
    Value<S> cat = branches.size() == 1 ? branches[0] : concat_channels<S>(branches);
    Value<S> out = fem_after_concat_ ? post_fem_->forward(cat)
                                     : (out_proj_ ? out_proj_->forward(cat) : cat);
    return BackgroundFeatures<S>{out};
  }

  Index base_index() const { return base_; }

 private:
  FusionMode mode_;
  bool fem_after_concat_;
  std::vector<Index> strides_;
  Index base_ = 0;
  std::vector<std::unique_ptr<ConvBlock<S>>> reduce_;
  std::vector<bool> conv_down_;
  std::vector<std::unique_ptr<ReceptiveModule<S>>> branch_fem_;
  std::unique_ptr<ReceptiveModule<S>> post_fem_;
  std::unique_ptr<ConvBlock<S>> out_proj_;
};

// ---------------------------------------------------------------------------
// Stage C: difference guidance (cross attention between the guide map and
// the background features) and difference enhancement (adaptive
// foreground/background split), composed into the difference-aware extractor.
// ---------------------------------------------------------------------------

template <typename S>
class DifferenceGuidance : public Module<S> {
 public:
  explicit DifferenceGuidance(Index max_positions = 1 << 16) : max_positions_(max_positions) {
    beta_ = this->register_parameter("beta", Tensor<S>::zeros({1}));
  }

  // The channel-affinity matrix R, rows softmax-normalized.
  Value<S> attention_matrix(const Value<S>& f0, const Value<S>& m) {
    Index b = f0.dim(0), c = f0.dim(1), n = f0.dim(2) * f0.dim(3);
    Value<S> q = reshape(f0, {b, c, n});
    Value<S> g = transpose_last2(reshape(broadcast_channels(m, c), {b, c, n}));
    return softmax_rows(bmm(q, g));  // [B,C,C]
  }

  Value<S> forward(const GuideMap<S>& m, const BackgroundFeatures<S>& f) {
    Index hg = m.logits.dim(2), wg = m.logits.dim(3);
    Index hb = f.features.dim(2), wb = f.features.dim(3);
    DAD_CHECK((hg % hb == 0 && wg % wb == 0) || (hb % hg == 0 && wb % wg == 0), ShapeError,
              "difference guidance: guide/feature sizes are not integer-related (" + std::to_string(hg) +
                  "x" + std::to_string(wg) + " vs " + std::to_string(hb) + "x" + std::to_string(wb) + ")");
    Index n = hg * wg;
    DAD_CHECK(n <= max_positions_, ResourceError,
              "difference guidance: N = " + std::to_string(n) + " exceeds the limit of " +
                  std::to_string(max_positions_));
    Value<S> f0 = resize_bilinear(f.features, hg, wg);
    Index b = f0.dim(0), c = f0.dim(1);
    Value<S> r = attention_matrix(f0, m.logits);
    Value<S> k = reshape(f0, {b, c, n});
    Value<S> a = reshape(bmm(r, k), {b, c, hg, wg});
    return add(scale(beta_, a), f0);
  }

  Value<S> beta() const { return beta_; }

 private:
  Index max_positions_;
  Value<S> beta_;
};

template <typename S>
class DifferenceEnhancement : public Module<S> {
 public:
  DifferenceEnhancement(Index channels, DemMode mode, Rng& rng)
      : mode_(mode),
        head1_(ConvBlockSpec::same(channels, kHeadChannels, 3), rng),
        head2_(ConvBlockSpec::same(kHeadChannels, kHeadChannels, 3), rng),
        proj_(kHeadChannels, 1, 1, 1, 1, 0, true, rng) {
    if (mode != DemMode::b_only) theta_ = this->register_parameter("theta", Tensor<S>::ones({1}));
    if (mode != DemMode::f_only) epsilon_ = this->register_parameter("epsilon", Tensor<S>::ones({1}));
    this->register_child("head1", &head1_);
    this->register_child("head2", &head2_);
    this->register_child("proj", &proj_);
  }

  // Returns the difference-aware features and the refined (pre-sigmoid) map.
  std::pair<Value<S>, Value<S>> forward(const Value<S>& e, const GuideMap<S>& m) {
    DAD_CHECK(e.dim(2) == m.logits.dim(2) && e.dim(3) == m.logits.dim(3), ShapeError,
              "difference enhancement: guide map and features are misaligned");
    Value<S> p = sigmoid(m.logits);
    Value<S> d;
    switch (mode_) {
      case DemMode::f_minus_b: {
        Value<S> df = mul_broadcast_channel(p, e);
        Value<S> db = mul_broadcast_channel(add_scalar(neg(p), S(1)), e);
        d = sub(scale(theta_, df), scale(epsilon_, db));
        break;
      }
      case DemMode::f_only:
        d = scale(theta_, mul_broadcast_channel(p, e));
        break;
      case DemMode::b_only:
        d = scale(epsilon_, mul_broadcast_channel(add_scalar(neg(p), S(1)), e));
        break;
    }
    Value<S> refined = proj_.forward(head2_.forward(head1_.forward(d)));
    return {d, refined};
  }

  Value<S> theta() const { return theta_; }
  Value<S> epsilon() const { return epsilon_; }
  DemMode mode() const { return mode_; }

 private:
  DemMode mode_;
  Value<S> theta_, epsilon_;
  ConvBlock<S> head1_, head2_;
  Conv2d<S> proj_;
};

template <typename S>
class DifferenceAwareExtractor : public Module<S> {
 public:
  DifferenceAwareExtractor(Index channels, bool use_dgm, DemMode mode, Rng& rng,
                           Index dgm_max_positions = 1 << 16)
      : dem_(channels, mode, rng) {
    if (use_dgm) {
      dgm_ = std::make_unique<DifferenceGuidance<S>>(dgm_max_positions);
      this->register_child("dgm", dgm_.get());
    }
    this->register_child("dem", &dem_);
  }

  GuideMap<S> forward(const GuideMap<S>& m, const BackgroundFeatures<S>& f) {
    Value<S> e = dgm_ ? dgm_->forward(m, f)
                      : resize_bilinear(f.features, m.logits.dim(2), m.logits.dim(3));
    auto [d, refined] = dem_.forward(e, m);
    return GuideMap<S>::wrap(refined);
  }

  DifferenceGuidance<S>* dgm() { return dgm_.get(); }
  DifferenceEnhancement<S>& dem() { return dem_; }

 private:
  std::unique_ptr<DifferenceGuidance<S>> dgm_;
  DifferenceEnhancement<S> dem_;
};

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <typename S>
class DifferenceAwareDecoder : public Module<S> {
 public:
  explicit DifferenceAwareDecoder(const ModelConfig& cfg) : cfg_(cfg) {
    DAD_CHECK(cfg.dae_repeats >= 1, ValidationError, "model: dae_repeats must be >= 1");
    backbone_ = make_backbone<S>(cfg.backbone, cfg.seed);
    this->register_child("backbone", backbone_.get());
    int levels = static_cast<int>(backbone_->num_levels());
    part_ = cfg.partition.empty() ? LayerPartition::defaults(levels)
                                  : LayerPartition::parse(cfg.partition, levels, cfg.partition_relaxed);

    Rng rng(cfg.seed + 1);
    auto chans = backbone_->channel_plan();
    auto strides = backbone_->strides();
    std::vector<Index> low_ch;
    for (int l : part_.stage_a_lows()) low_ch.push_back(chans[static_cast<std::size_t>(l - 1)]);
    Index high_ch = chans[static_cast<std::size_t>(part_.highest() - 1)];
    gmg_ = std::make_unique<GuideMapGenerator<S>>(low_ch, high_ch, cfg.fem_variant, rng,
                                                  cfg.attention_max_positions);
    this->register_child("gmg", gmg_.get());

    std::vector<Index> b_ch, b_st;
    for (int l : part_.stage_b) {
      b_ch.push_back(chans[static_cast<std::size_t>(l - 1)]);
      b_st.push_back(strides[static_cast<std::size_t>(l - 1)]);
    }
    mff_ = std::make_unique<MiddleFeatureFusion<S>>(b_ch, b_st, cfg.fusion, cfg.fem_variant,
                                                    cfg.mff_fem_after_concat, rng);
    this->register_child("mff", mff_.get());

    for (Index r = 0; r < cfg.dae_repeats; ++r) {
      daes_.push_back(std::make_unique<DifferenceAwareExtractor<S>>(
          kBackgroundChannels, cfg.use_dgm, cfg.dem_mode, rng, cfg.dgm_max_positions));
      this->register_child("dae" + std::to_string(r + 1), daes_.back().get());
    }
  }

  DecoderOutputs<S> forward(const Value<S>& images) {
    Index h = images.dim(2), w = images.dim(3);
    FeaturePyramid<S> pyr = extract_features(*backbone_, images);
    PartitionedFeatures<S> parts = partition(pyr, part_);

    std::vector<Value<S>> lows;
    for (std::size_t i = 0; i + 1 < parts.stage_a.size(); ++i) lows.push_back(parts.stage_a[i].features);
    GuideMap<S> guide = gmg_->forward(lows, parts.stage_a.back().features);

    std::vector<Value<S>> bfeats;
    for (auto& l : parts.stage_b) bfeats.push_back(l.features);
    BackgroundFeatures<S> bg = mff_->forward(bfeats);

    DecoderOutputs<S> out;
    out.maps.push_back(resize_bilinear(guide.logits, h, w));
    GuideMap<S> cur = guide;
    for (auto& dae : daes_) {
      cur = dae->forward(cur, bg);
      out.maps.push_back(resize_bilinear(cur.logits, h, w));
    }
    return out;
  }

  const ModelConfig& config() const { return cfg_; }
  const LayerPartition& partition_spec() const { return part_; }
  Backbone<S>& backbone() { return *backbone_; }
  GuideMapGenerator<S>& gmg() { return *gmg_; }
  MiddleFeatureFusion<S>& mff() { return *mff_; }
  std::vector<std::unique_ptr<DifferenceAwareExtractor<S>>>& daes() { return daes_; }

 private:
  ModelConfig cfg_;
  LayerPartition part_;
  std::unique_ptr<Backbone<S>> backbone_;
  std::unique_ptr<GuideMapGenerator<S>> gmg_;
  std::unique_ptr<MiddleFeatureFusion<S>> mff_;
  std::vector<std::unique_ptr<DifferenceAwareExtractor<S>>> daes_;
};

}  // namespace dad

#endif  // DAD_DECODER_HPP
