#ifndef DAD_ATTENTION_HPP
#define DAD_ATTENTION_HPP

#include <algorithm>

#include "dad/blocks.hpp"

namespace dad {

// Position (spatial) self-attention with a learnable residual scale starting
// at zero, so the module is the identity at initialization. Query/key use a
// C/8 channel reduction. Materializes an (H*W)x(H*W) affinity matrix, so the
// spatial extent is guarded.
template <typename S>
class PositionAttention : public Module<S> {
 public:
  PositionAttention(Index channels, Rng& rng, Index max_positions = 4096)
      : max_positions_(max_positions),
        reduced_(std::max<Index>(1, channels / 8)),
        query_(channels, reduced_, 1, 1, 1, 0, false, rng),
        key_(channels, reduced_, 1, 1, 1, 0, false, rng),
        value_(channels, channels, 1, 1, 1, 0, false, rng) {
    gamma_ = this->register_parameter("gamma", Tensor<S>::zeros({1}));
    this->register_child("query", &query_);
    this->register_child("key", &key_);
    this->register_child("value", &value_);
  }

  Value<S> attention_matrix(const Value<S>& x) {
    const auto& s = x.shape();
    Index b = s[0], h = s[2], w = s[3], n = h * w;
    DAD_CHECK(n <= max_positions_, ResourceError,
              "position attention: H*W = " + std::to_string(n) + " exceeds the limit of " +
                  std::to_string(max_positions_));
    Value<S> q = reshape(query_.forward(x), {b, reduced_, n});
    Value<S> k = reshape(key_.forward(x), {b, reduced_, n});
    return softmax_rows(bmm(transpose_last2(q), k));  // [B,N,N], rows sum to 1
  }

  Value<S> forward(const Value<S>& x) {
    const auto& s = x.shape();
    Index b = s[0], c = s[1], h = s[2], w = s[3], n = h * w;
    Value<S> att = attention_matrix(x);
    Value<S> v = reshape(value_.forward(x), {b, c, n});
    Value<S> out = bmm(v, transpose_last2(att));
    return add(scale(gamma_, reshape(out, {b, c, h, w})), x);
  }

  Value<S> gamma() const { return gamma_; }
  Value<S> value_weight() const { return value_.weight(); }

 private:
  Index max_positions_;
  Index reduced_;
  Conv2d<S> query_, key_, value_;
  Value<S> gamma_;
};

// Channel self-attention: row-softmax of the CxC Gram matrix of the feature
// map, applied back to the features, with a zero-initialized residual scale.
template <typename S>
class ChannelAttention : public Module<S> {
 public:
  explicit ChannelAttention(Index /*channels*/) {
    gamma_ = this->register_parameter("gamma", Tensor<S>::zeros({1}));
  }

  Value<S> attention_matrix(const Value<S>& x) {
    const auto& s = x.shape();
    Index b = s[0], c = s[1], n = s[2] * s[3];
    Value<S> xm = reshape(x, {b, c, n});
    return softmax_rows(bmm(xm, transpose_last2(xm)));  // [B,C,C]
  }

  Value<S> forward(const Value<S>& x) {
    const auto& s = x.shape();
    Index b = s[0], c = s[1], h = s[2], w = s[3], n = h * w;
    Value<S> att = attention_matrix(x);
    Value<S> out = bmm(att, reshape(x, {b, c, n}));
    return add(scale(gamma_, reshape(out, {b, c, h, w})), x);
  }

  Value<S> gamma() const { return gamma_; }

 private:
  Value<S> gamma_;
};

// Dual residual attention: position and channel branches, each closed by a
// 3x3 convolution block, fused by addition.
template <typename S>
class DualResidualAttention : public Module<S> {
 public:
  DualResidualAttention(Index channels, Rng& rng, bool with_activation = true,
                        Index max_positions = 4096)
      : position_(channels, rng, max_positions),
        channel_(channels),
        pos_block_(ConvBlockSpec::same(channels, channels, 3), rng, with_activation),
        chan_block_(ConvBlockSpec::same(channels, channels, 3), rng, with_activation) {
    this->register_child("position", &position_);
    this->register_child("channel", &channel_);
    this->register_child("pos_block", &pos_block_);
    this->register_child("chan_block", &chan_block_);
  }

  Value<S> forward(const Value<S>& x) {
    Value<S> p = pos_block_.forward(position_.forward(x));
    Value<S> c = chan_block_.forward(channel_.forward(x));
    return add(p, c);
  }

  PositionAttention<S>& position() { return position_; }
  ChannelAttention<S>& channel() { return channel_; }
  ConvBlock<S>& position_block() { return pos_block_; }
  ConvBlock<S>& channel_block() { return chan_block_; }

 private:
  PositionAttention<S> position_;
  ChannelAttention<S> channel_;
  ConvBlock<S> pos_block_, chan_block_;
};

}  // namespace dad

#endif  // DAD_ATTENTION_HPP
