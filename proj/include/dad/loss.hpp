#ifndef DAD_LOSS_HPP
#define DAD_LOSS_HPP

#include "dad/decoder.hpp"

namespace dad {

struct LossConfig {
  Index weight_kernel = 31;  // odd box window for the boundary weighting
  double weight_gain = 5.0;

  void validate() const {
    DAD_CHECK(weight_kernel >= 1 && weight_kernel % 2 == 1, ValidationError,
              "loss: weight_kernel must be odd and positive");
    DAD_CHECK(weight_gain >= 0, ValidationError, "loss: weight_gain must be non-negative");
  }
};

// Boundary-emphasizing pixel weights: 1 + gain * |boxmean(gt) - gt|.
// Values lie in [1, 1+gain]; uniform ground truth gives exactly 1. The
// quotient is formed from integer window sums so that complementing the
// mask leaves the weights bit-identical.
template <typename S>
Tensor<S> pixel_weights(const Tensor<S>& gt, const LossConfig& cfg = {}) {
  cfg.validate();
  DAD_CHECK(gt.rank() == 4 && gt.dim(1) == 1, ShapeError, "pixel_weights: expects [B,1,H,W]");
  for (Index i = 0; i < gt.numel(); ++i)
    DAD_CHECK(gt[i] == S(0) || gt[i] == S(1), ValidationError,
              "pixel_weights: ground truth must be binary (threshold it first)");
  Tensor<S> sums = box_sum(gt, cfg.weight_kernel, /*divide=*/false);
  Index h = gt.dim(2), w2 = gt.dim(3);
  Tensor<S> w(gt.shape());
  for (Index p = 0; p < gt.dim(0); ++p)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w2; ++x) {
        Index i = (p * h + y) * w2 + x;
        S cnt = S(box_window_count(h, w2, y, x, cfg.weight_kernel));
        w[i] = S(1) + S(cfg.weight_gain) * (std::abs(sums[i] - gt[i] * cnt) / cnt);
      }
  return w;
}

namespace detail {
template <typename S>
inline void check_loss_shapes(const Value<S>& logits, const Tensor<S>& gt, const Tensor<S>& w) {
  DAD_CHECK(logits.shape().size() == 4 && logits.dim(1) == 1, ShapeError, "loss: expects [B,1,H,W] logits");
  DAD_CHECK(logits.val().same_shape(gt) && logits.val().same_shape(w), ShapeError,
            "loss: logits/ground-truth/weight shapes differ");
}
template <typename S>
inline S stable_sigmoid(S z) {
  return z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
}
}  // namespace detail

// Weight-normalized binary cross entropy on logits, mean over the batch.
template <typename S>
Value<S> weighted_bce(const Value<S>& logits, const Tensor<S>& gt, const Tensor<S>& w) {
  detail::check_loss_shapes(logits, gt, w);
  Index b = logits.dim(0), plane = logits.dim(2) * logits.dim(3);
  const auto& z = logits.val();
  Tensor<S> wsum({b});
  S total = 0;
  for (Index bi = 0; bi < b; ++bi) {
    S num = 0, den = 0;
    for (Index i = bi * plane; i < (bi + 1) * plane; ++i) {
      S zi = z[i];
      S bce = std::max(zi, S(0)) - zi * gt[i] + std::log1p(std::exp(-std::abs(zi)));
      num += w[i] * bce;
      den += w[i];
    }
    wsum[bi] = den;
    total += num / den;
  }
  Tensor<S> out = Tensor<S>::scalar(total / S(b));
  return Value<S>::make(std::move(out), {logits}, [gt, w, wsum, b, plane](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    auto& gx = n.inputs[0]->ensure_grad();
    const auto& zv = n.inputs[0]->value;
    S g0 = n.grad[0];
    for (Index bi = 0; bi < b; ++bi) {
      S c = g0 / (wsum[bi] * S(b));
      for (Index i = bi * plane; i < (bi + 1) * plane; ++i)
        gx[i] += c * w[i] * (detail::stable_sigmoid(zv[i]) - gt[i]);
    }
  });
}

// Weighted soft-IoU loss with +1 smoothing, mean over the batch; lies in [0,1).
template <typename S>
Value<S> weighted_iou(const Value<S>& logits, const Tensor<S>& gt, const Tensor<S>& w) {
  detail::check_loss_shapes(logits, gt, w);
  const S smooth = S(1);
  Index b = logits.dim(0), plane = logits.dim(2) * logits.dim(3);
  const auto& z = logits.val();
  Tensor<S> inter({b}), uni({b});
  S total = 0;
  for (Index bi = 0; bi < b; ++bi) {
    S is = 0, us = 0;
    for (Index i = bi * plane; i < (bi + 1) * plane; ++i) {
      S p = detail::stable_sigmoid(z[i]);
      is += w[i] * p * gt[i];
      us += w[i] * (p + gt[i] - p * gt[i]);
    }
    inter[bi] = is;
    uni[bi] = us;
    total += S(1) - (is + smooth) / (us + smooth);
  }
  Tensor<S> out = Tensor<S>::scalar(total / S(b));
  return Value<S>::make(std::move(out), {logits}, [gt, w, inter, uni, smooth, b, plane](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    auto& gx = n.inputs[0]->ensure_grad();
    const auto& zv = n.inputs[0]->value;
    S g0 = n.grad[0];
    for (Index bi = 0; bi < b; ++bi) {
      S u1 = uni[bi] + smooth, i1 = inter[bi] + smooth;
      for (Index i = bi * plane; i < (bi + 1) * plane; ++i) {
        S p = detail::stable_sigmoid(zv[i]);
        S dratio_dp = (w[i] * gt[i] * u1 - i1 * w[i] * (S(1) - gt[i])) / (u1 * u1);
        gx[i] += g0 * (-dratio_dp) * p * (S(1) - p) / S(b);
      }
    }
  });
}

// Deep-supervision objective: sum of (bce + iou) over every output map.
template <typename S>
Value<S> total_loss(const DecoderOutputs<S>& outputs, const Tensor<S>& gt, const LossConfig& cfg = {}) {
  DAD_CHECK(outputs.count() >= 1, ValidationError, "total_loss: no output maps");
  Tensor<S> w = pixel_weights(gt, cfg);
  Value<S> sum;
  for (const auto& m : outputs.maps) {
    Value<S> term = add(weighted_bce(m, gt, w), weighted_iou(m, gt, w));
    sum = sum.defined() ? add(sum, term) : term;
  }
  return sum;
}

}  // namespace dad

#endif  // DAD_LOSS_HPP
