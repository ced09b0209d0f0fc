#ifndef DAD_BLOCKS_HPP
#define DAD_BLOCKS_HPP

#include <memory>
#include <vector>

#include "dad/nn.hpp"

namespace dad {

// Convolution block: convolution -> batch norm -> activation. Stride-1 blocks
// preserve spatial size exactly via padding = dilation*(kernel-1)/2.
struct ConvBlockSpec {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel = 3;
  Index stride = 1;
  Index dilation = 1;
  Index padding = 0;

  static ConvBlockSpec same(Index in, Index out, Index kernel, Index stride = 1, Index dilation = 1) {
    DAD_CHECK(kernel % 2 == 1, ValidationError, "conv block: same-padding requires odd kernel");
    ConvBlockSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = kernel;
    s.stride = stride;
    s.dilation = dilation;
    s.padding = dilation * (kernel - 1) / 2;
    return s;
  }
};

template <typename S>
class ConvBlock : public Module<S> {
 public:
  ConvBlock(const ConvBlockSpec& spec, Rng& rng, bool with_activation = true)
      : spec_(spec),
        conv_(spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.dilation, spec.padding,
              /*bias=*/false, rng),
        bn_(spec.out_channels),
        act_(with_activation) {
    this->register_child("conv", &conv_);
    this->register_child("bn", &bn_);
  }

  Value<S> forward(const Value<S>& x) {
    Value<S> y = bn_.forward(conv_.forward(x));
    return act_ ? relu(y) : y;
  }

  const ConvBlockSpec& spec() const { return spec_; }
  BatchNorm2d<S>& bn() { return bn_; }

 private:
  ConvBlockSpec spec_;
  Conv2d<S> conv_;
  BatchNorm2d<S> bn_;
  bool act_;
};

// Theoretical receptive-field side length of a chain of blocks, by the
// standard recurrence rf += (k-1)*dilation*jump, jump *= stride.
inline Index receptive_field(const std::vector<ConvBlockSpec>& chain) {
  DAD_CHECK(!chain.empty(), ValidationError, "receptive_field: empty chain");
  Index rf = 1, jump = 1;
  for (const auto& b : chain) {
    DAD_CHECK(b.stride >= 1, ValidationError, "receptive_field: stride must be >= 1");
    rf += (b.kernel - 1) * b.dilation * jump;
    jump *= b.stride;
  }
  return rf;
}

// ---------------------------------------------------------------------------
// Field expansion module: three parallel paths (two of consecutive dilated
// 3x3 blocks, one plain 1x1), concatenated, fused by a 1x1 block and closed
// by a projected residual shortcut. Resolution is unchanged.
// ---------------------------------------------------------------------------

struct FemConfig {
  Index in_channels = 0;
  Index out_channels = 0;       // defaults to 3 * branch_channels
  Index branch_channels = 32;
  std::vector<Index> path1_dilations{4, 8, 16, 32};
  std::vector<Index> path3_dilations{2, 4, 8, 16};
  bool with_activation = true;  // disabled only by linearity probes in tests

  static FemConfig make(Index in, Index branch = 32, Index out = -1) {
    FemConfig c;
    c.in_channels = in;
    c.branch_channels = branch;
    c.out_channels = out > 0 ? out : 3 * branch;
    return c;
  }
  FemConfig without_dilation() const {
    FemConfig c = *this;
    for (auto& d : c.path1_dilations) d = 1;
    for (auto& d : c.path3_dilations) d = 1;
    return c;
  }
  std::vector<ConvBlockSpec> path_chain(int path) const {
    std::vector<ConvBlockSpec> chain{ConvBlockSpec::same(in_channels, branch_channels, 1)};
    if (path == 2) return chain;
    const auto& dil = path == 1 ? path1_dilations : path3_dilations;
    for (Index d : dil) chain.push_back(ConvBlockSpec::same(branch_channels, branch_channels, 3, 1, d));
    return chain;
  }
};

template <typename S>
class FieldExpansion : public Module<S> {
 public:
  FieldExpansion(const FemConfig& cfg, Rng& rng)
      : cfg_(cfg),
        fuse_(ConvBlockSpec::same(3 * cfg.branch_channels, cfg.out_channels, 1), rng, false),
        shortcut_(ConvBlockSpec::same(cfg.in_channels, cfg.out_channels, 1), rng, false) {
    auto add_path = [&](const char* name, const std::vector<ConvBlockSpec>& chain,
                        std::vector<std::unique_ptr<ConvBlock<S>>>& dst) {
      for (std::size_t i = 0; i < chain.size(); ++i) {
        dst.push_back(std::make_unique<ConvBlock<S>>(chain[i], rng, cfg.with_activation));
        this->register_child(std::string(name) + "." + std::to_string(i), dst.back().get());
      }
    };
    add_path("path1", cfg.path_chain(1), path1_);
    add_path("path2", cfg.path_chain(2), path2_);
    add_path("path3", cfg.path_chain(3), path3_);
    this->register_child("fuse", &fuse_);
    this->register_child("shortcut", &shortcut_);
  }

  Value<S> forward(const Value<S>& x) {
    DAD_CHECK(x.dim(1) == cfg_.in_channels, ShapeError,
              "field expansion: input has " + std::to_string(x.dim(1)) + " channels, expected " +
                  std::to_string(cfg_.in_channels));
    auto run = [](std::vector<std::unique_ptr<ConvBlock<S>>>& path, Value<S> v) {
      for (auto& blk : path) v = blk->forward(v);
      return v;
    };
    Value<S> p1 = run(path1_, x);
    Value<S> p2 = run(path2_, x);
    Value<S> p3 = run(path3_, x);
    Value<S> fused = fuse_.forward(concat_channels<S>({p1, p2, p3}));
    Value<S> y = add(fused, shortcut_.forward(x));
    return cfg_.with_activation ? relu(y) : y;
  }

  const FemConfig& config() const { return cfg_; }

 private:
  FemConfig cfg_;
  std::vector<std::unique_ptr<ConvBlock<S>>> path1_, path2_, path3_;
  ConvBlock<S> fuse_, shortcut_;
};

// ---------------------------------------------------------------------------
// Dilated-pyramid baseline: parallel single dilated 3x3 blocks at fixed
// rates, concatenated and fused by a 1x1 block. Drop-in for FieldExpansion.
// ---------------------------------------------------------------------------

struct DilatedPyramidConfig {
  Index in_channels = 0;
  Index out_channels = 0;
  Index branch_channels = 32;
  std::vector<Index> rates{1, 6, 12, 18};

  static DilatedPyramidConfig make(Index in, Index branch = 32, Index out = -1) {
    DilatedPyramidConfig c;
    c.in_channels = in;
    c.branch_channels = branch;
    c.out_channels = out > 0 ? out : 3 * branch;
    return c;
  }
};

template <typename S>
class DilatedPyramid : public Module<S> {
 public:
  DilatedPyramid(const DilatedPyramidConfig& cfg, Rng& rng)
      : cfg_(cfg),
        fuse_(ConvBlockSpec::same(cfg.branch_channels * static_cast<Index>(cfg.rates.size()),
                                  cfg.out_channels, 1),
              rng) {
    DAD_CHECK(!cfg.rates.empty(), ValidationError, "dilated pyramid: empty rate list");
    for (std::size_t i = 0; i < cfg.rates.size(); ++i) {
      branches_.push_back(std::make_unique<ConvBlock<S>>(
          ConvBlockSpec::same(cfg.in_channels, cfg.branch_channels, 3, 1, cfg.rates[i]), rng));
      this->register_child("branch." + std::to_string(i), branches_.back().get());
    }
    this->register_child("fuse", &fuse_);
  }

  Value<S> forward(const Value<S>& x) {
    DAD_CHECK(x.dim(1) == cfg_.in_channels, ShapeError,
              "dilated pyramid: input has " + std::to_string(x.dim(1)) + " channels, expected " +
                  std::to_string(cfg_.in_channels));
    std::vector<Value<S>> outs;
    for (auto& b : branches_) outs.push_back(b->forward(x));
    return fuse_.forward(concat_channels<S>(outs));
  }

  const DilatedPyramidConfig& config() const { return cfg_; }

 private:
  DilatedPyramidConfig cfg_;
  std::vector<std::unique_ptr<ConvBlock<S>>> branches_;
  ConvBlock<S> fuse_;
};

}  // namespace dad

#endif  // DAD_BLOCKS_HPP
