#ifndef DAD_OPTIM_HPP
#define DAD_OPTIM_HPP

#include <cmath>
#include <vector>

#include "dad/graph.hpp"

namespace dad {

// Piecewise-constant schedule: base * decay^(epoch / every), with the number
// of decays capped (three for the 200-epoch default, so the rate drops at
// epochs 50, 100 and 150 and never again).
struct LrSchedule {
  double base = 1e-4;
  double decay = 0.1;
  Index every = 50;
  Index max_decays = 3;

  double at_epoch(Index epoch) const {
    Index k = every > 0 ? epoch / every : 0;
    if (k > max_decays) k = max_decays;
    return base * std::pow(decay, double(k));
  }
};

template <typename S>
class Adam {
 public:
  explicit Adam(std::vector<Value<S>> params, double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params_) {
      m_.push_back(Tensor<S>::zeros(p.val().shape()));
      v_.push_back(Tensor<S>::zeros(p.val().shape()));
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      const auto& g = p.grad().array();
      m_[i].array() = S(beta1_) * m_[i].array() + S(1.0 - beta1_) * g;
      v_[i].array() = S(beta2_) * v_[i].array() + S(1.0 - beta2_) * g * g;
      p.val().array() -=
          S(lr_) * (m_[i].array() / S(bc1)) / ((v_[i].array() / S(bc2)).sqrt() + S(eps_));
    }
  }

 private:
  std::vector<Value<S>> params_;
  std::vector<Tensor<S>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
};

}  // namespace dad

#endif  // DAD_OPTIM_HPP
