#ifndef DAD_NN_HPP
#define DAD_NN_HPP

#include <cmath>
#include <deque>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dad/conv.hpp"

namespace dad {

// Parameter-holding module tree. Parameters are leaf graph values shared by
// handle; buffers (running statistics) are plain tensors mutated in place.
// Instances are single-writer during training and safe for concurrent
// inference once set_training(false).
template <typename S>
class Module {
 public:
  virtual ~Module() = default;

  void set_training(bool t) {
    training_ = t;
    for (auto& c : children_) c.second->set_training(t);
  }
  bool training() const { return training_; }

  void named_parameters(const std::string& prefix, std::vector<std::pair<std::string, Value<S>>>& out) const {
    for (const auto& p : params_) out.emplace_back(prefix + p.first, p.second);
    for (const auto& c : children_) c.second->named_parameters(prefix + c.first + ".", out);
  }
  std::vector<std::pair<std::string, Value<S>>> named_parameters() const {
    std::vector<std::pair<std::string, Value<S>>> out;
    named_parameters("", out);
    return out;
  }
  std::vector<Value<S>> parameters() const {
    std::vector<Value<S>> out;
    for (auto& [name, v] : named_parameters()) out.push_back(v);
    return out;
  }

  void named_buffers(const std::string& prefix, std::vector<std::pair<std::string, Tensor<S>*>>& out) {
    for (auto& b : buffers_) out.emplace_back(prefix + b.first, &b.second);
    for (auto& c : children_) c.second->named_buffers(prefix + c.first + ".", out);
  }
  std::vector<std::pair<std::string, Tensor<S>*>> named_buffers() {
    std::vector<std::pair<std::string, Tensor<S>*>> out;
    named_buffers("", out);
    return out;
  }

  Index num_parameters() const {
    Index n = 0;
    for (auto& [name, v] : named_parameters()) n += v.val().numel();
    return n;
  }

  const std::vector<std::pair<std::string, Module<S>*>>& children() const { return children_; }

 protected:
  Value<S> register_parameter(std::string name, Tensor<S> init) {
    Value<S> v = Value<S>::leaf(std::move(init), true);
    params_.emplace_back(std::move(name), v);
    return v;
  }
  Tensor<S>& register_buffer(std::string name, Tensor<S> init) {
    buffers_.emplace_back(std::move(name), std::move(init));
    return buffers_.back().second;
  }
  void register_child(std::string name, Module<S>* m) { children_.emplace_back(std::move(name), m); }

 private:
  bool training_ = true;
  std::deque<std::pair<std::string, Value<S>>> params_;
  std::deque<std::pair<std::string, Tensor<S>>> buffers_;
  std::vector<std::pair<std::string, Module<S>*>> children_;
};

namespace init {
// Fan-based scaling for convolution kernels; unit/zero for normalization.
template <typename S>
Tensor<S> kaiming_conv(Index cout, Index cin, Index kh, Index kw, Rng& rng) {
  Tensor<S> w({cout, cin, kh, kw});
  double fan_in = static_cast<double>(cin * kh * kw);
  double stddev = std::sqrt(2.0 / fan_in);
  rng.fill_normal(w, 0.0, stddev);
  return w;
}
}  // namespace init

template <typename S>
class Conv2d : public Module<S> {
 public:
  Conv2d(Index cin, Index cout, Index k, Index stride, Index dilation, Index pad, bool bias, Rng& rng)
      : stride_(stride), dilation_(dilation), pad_(pad), has_bias_(bias) {
    weight_ = this->register_parameter("weight", init::kaiming_conv<S>(cout, cin, k, k, rng));
    if (bias) bias_ = this->register_parameter("bias", Tensor<S>::zeros({cout}));
  }

  Value<S> forward(const Value<S>& x) {
    Value<S> y = conv2d(x, weight_, stride_, dilation_, pad_);
    if (has_bias_) y = add_channel_bias(y, bias_);
    return y;
  }

  Value<S> weight() const { return weight_; }

 private:
  Value<S> weight_, bias_;
  Index stride_, dilation_, pad_;
  bool has_bias_;
};

template <typename S>
class BatchNorm2d : public Module<S> {
 public:
  explicit BatchNorm2d(Index c, S momentum = S(0.1), S eps = S(1e-5))
      : momentum_(momentum), eps_(eps),
        running_mean_(this->register_buffer("running_mean", Tensor<S>::zeros({c}))),
        running_var_(this->register_buffer("running_var", Tensor<S>::ones({c}))) {
    gamma_ = this->register_parameter("weight", Tensor<S>::ones({c}));
    beta_ = this->register_parameter("bias", Tensor<S>::zeros({c}));
  }

  Value<S> forward(const Value<S>& x) {
    last_forward_training_ = this->training();
    return batch_norm(x, gamma_, beta_, running_mean_, running_var_, this->training(), momentum_, eps_);
  }

  // Mode actually used by the most recent forward; lets tests assert that
  // evaluation ran with batch statistics frozen.
  bool last_forward_training() const { return last_forward_training_; }

 private:
  S momentum_, eps_;
  Tensor<S>& running_mean_;
  Tensor<S>& running_var_;
  Value<S> gamma_, beta_;
  bool last_forward_training_ = false;
};

template <typename S>
class LayerNormChannels : public Module<S> {
 public:
  explicit LayerNormChannels(Index c, S eps = S(1e-5)) : eps_(eps) {
    gamma_ = this->register_parameter("weight", Tensor<S>::ones({c}));
    beta_ = this->register_parameter("bias", Tensor<S>::zeros({c}));
  }
  Value<S> forward(const Value<S>& x) { return layer_norm_channels(x, gamma_, beta_, eps_); }

 private:
  S eps_;
  Value<S> gamma_, beta_;
};

}  // namespace dad

#endif  // DAD_NN_HPP
