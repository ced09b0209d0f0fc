#ifndef DAD_CONV_HPP
#define DAD_CONV_HPP

#include <vector>

#include "dad/ops.hpp"

namespace dad {

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

struct ConvGeom {
  Index cin = 0, h = 0, w = 0;
  Index kh = 0, kw = 0;
  Index stride = 1, dilation = 1, pad = 0;
  Index oh = 0, ow = 0;

  static Index out_extent(Index in, Index k, Index stride, Index dilation, Index pad) {
    return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
  }
};

namespace detail {

// col is [K, N] row-major with K = cin*kh*kw, N = oh*ow.
template <typename S>
void im2col(const S* x, const ConvGeom& g, S* col) {
  const Index n = g.oh * g.ow;
  for (Index c = 0; c < g.cin; ++c) {
    const S* xc = x + c * g.h * g.w;
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        S* row = col + ((c * g.kh + ki) * g.kw + kj) * n;
        for (Index oy = 0; oy < g.oh; ++oy) {
          Index iy = oy * g.stride - g.pad + ki * g.dilation;
          S* dst = row + oy * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, S(0));
            continue;
          }
          const S* src = xc + iy * g.w;
          for (Index ox = 0; ox < g.ow; ++ox) {
            Index ix = ox * g.stride - g.pad + kj * g.dilation;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const S* col, const ConvGeom& g, S* x) {
  const Index n = g.oh * g.ow;
  for (Index c = 0; c < g.cin; ++c) {
    S* xc = x + c * g.h * g.w;
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const S* row = col + ((c * g.kh + ki) * g.kw + kj) * n;
        for (Index oy = 0; oy < g.oh; ++oy) {
          Index iy = oy * g.stride - g.pad + ki * g.dilation;
          if (iy < 0 || iy >= g.h) continue;
          const S* src = row + oy * g.ow;
          S* dst = xc + iy * g.w;
          for (Index ox = 0; ox < g.ow; ++ox) {
            Index ix = ox * g.stride - g.pad + kj * g.dilation;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-d convolution, x [B,Cin,H,W], w [Cout,Cin,kh,kw], zero padding, no bias.
template <typename S>
Value<S> conv2d(const Value<S>& x, const Value<S>& w, Index stride = 1, Index dilation = 1,
                Index pad = 0) {
  const auto& sx = x.shape();
  const auto& sw = w.shape();
  DAD_CHECK(sx.size() == 4 && sw.size() == 4, ShapeError, "conv2d: expects 4-d tensors");
  DAD_CHECK(sx[1] == sw[1], ShapeError,
            "conv2d: channel mismatch, input has " + std::to_string(sx[1]) + " expected " +
                std::to_string(sw[1]));
  ConvGeom g;
  g.cin = sx[1];
  g.h = sx[2];
  g.w = sx[3];
  g.kh = sw[2];
  g.kw = sw[3];
  g.stride = stride;
  g.dilation = dilation;
  g.pad = pad;
  g.oh = ConvGeom::out_extent(g.h, g.kh, stride, dilation, pad);
  g.ow = ConvGeom::out_extent(g.w, g.kw, stride, dilation, pad);
  DAD_CHECK(g.oh >= 1 && g.ow >= 1, ShapeError, "conv2d: output would be empty");

  const Index b = sx[0], cout = sw[0];
  const Index k = g.cin * g.kh * g.kw, n = g.oh * g.ow;
  const bool pointwise = (g.kh == 1 && g.kw == 1 && stride == 1 && pad == 0);

  Tensor<S> out({b, cout, g.oh, g.ow});
  typename Tensor<S>::ConstMapRM wm(w.val().data(), cout, k);
  Tensor<S> colbuf;
  if (!pointwise) colbuf = Tensor<S>({k, n});
  for (Index bi = 0; bi < b; ++bi) {
    const S* xin = x.val().data() + bi * g.cin * g.h * g.w;
    typename Tensor<S>::MapRM om(out.data() + bi * cout * n, cout, n);
    if (pointwise) {
      typename Tensor<S>::ConstMapRM cm(xin, k, n);
      om.noalias() = wm * cm;
    } else {
      detail::im2col(xin, g, colbuf.data());
      om.noalias() = wm * colbuf.mat(k, n);
    }
  }

  return Value<S>::make(std::move(out), {x, w}, [g, b, cout, k, n, pointwise](Node<S>& nd) {
    const bool need_x = nd.inputs[0]->requires_grad;
    const bool need_w = nd.inputs[1]->requires_grad;
    typename Tensor<S>::ConstMapRM wm(nd.inputs[1]->value.data(), cout, k);
    Tensor<S> colbuf, dcolbuf;
    if (!pointwise && need_w) colbuf = Tensor<S>({k, n});
    if (!pointwise && need_x) dcolbuf = Tensor<S>({k, n});
    for (Index bi = 0; bi < b; ++bi) {
      typename Tensor<S>::ConstMapRM gm(nd.grad.data() + bi * cout * n, cout, n);
      const S* xin = nd.inputs[0]->value.data() + bi * g.cin * g.h * g.w;
      if (need_w) {
        typename Tensor<S>::MapRM gw(nd.inputs[1]->ensure_grad().data(), cout, k);
        if (pointwise) {
          typename Tensor<S>::ConstMapRM cm(xin, k, n);
          gw.noalias() += gm * cm.transpose();
        } else {
          detail::im2col(xin, g, colbuf.data());
          gw.noalias() += gm * colbuf.mat(k, n).transpose();
        }
      }
      if (need_x) {
        S* gx = nd.inputs[0]->ensure_grad().data() + bi * g.cin * g.h * g.w;
        if (pointwise) {
          typename Tensor<S>::MapRM gxm(gx, k, n);
          gxm.noalias() += wm.transpose() * gm;
        } else {
          dcolbuf.mat(k, n).noalias() = wm.transpose() * gm;
          detail::col2im_add(dcolbuf.data(), g, gx);
        }
      }
    }
  });
}

// Add a per-channel bias b [Cout] to x [B,Cout,H,W].
template <typename S>
Value<S> add_channel_bias(const Value<S>& x, const Value<S>& b) {
  const auto& sx = x.shape();
  DAD_CHECK(sx.size() == 4 && b.val().numel() == sx[1], ShapeError, "add_channel_bias: shape mismatch");
  Index bt = sx[0], c = sx[1], plane = sx[2] * sx[3];
  Tensor<S> out(sx);
  for (Index bi = 0; bi < bt; ++bi)
    for (Index ci = 0; ci < c; ++ci)
      Eigen::Map<typename Tensor<S>::Storage>(out.data() + (bi * c + ci) * plane, plane) =
          Eigen::Map<const typename Tensor<S>::Storage>(x.val().data() + (bi * c + ci) * plane, plane) +
          b.val()[ci];
  return Value<S>::make(std::move(out), {x, b}, [bt, c, plane](Node<S>& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->ensure_grad().array() += n.grad.array();
    if (n.inputs[1]->requires_grad) {
      auto& gb = n.inputs[1]->ensure_grad();
      for (Index bi = 0; bi < bt; ++bi)
        for (Index ci = 0; ci < c; ++ci)
          gb[ci] +=
              Eigen::Map<const typename Tensor<S>::Storage>(n.grad.data() + (bi * c + ci) * plane, plane)
                  .sum();
    }
  });
}

// Max pooling with square kernel.
template <typename S>
Value<S> maxpool2d(const Value<S>& x, Index k, Index stride, Index pad) {
  const auto& sx = x.shape();
  DAD_CHECK(sx.size() == 4, ShapeError, "maxpool2d: expects 4-d tensor");
  Index b = sx[0], c = sx[1], h = sx[2], w = sx[3];
  Index oh = ConvGeom::out_extent(h, k, stride, 1, pad);
  Index ow = ConvGeom::out_extent(w, k, stride, 1, pad);
  Tensor<S> out({b, c, oh, ow});
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(b * c * oh * ow));
  Index oidx = 0;
  for (Index bc = 0; bc < b * c; ++bc) {
    const S* xp = x.val().data() + bc * h * w;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox, ++oidx) {
        S best = std::numeric_limits<S>::lowest();
        Index besti = -1;
        for (Index ki = 0; ki < k; ++ki) {
          Index iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          for (Index kj = 0; kj < k; ++kj) {
            Index ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= w) continue;
            S v = xp[iy * w + ix];
            if (v > best) {
              best = v;
              besti = bc * h * w + iy * w + ix;
            }
          }
        }
        out[oidx] = besti >= 0 ? best : S(0);
        (*argmax)[static_cast<std::size_t>(oidx)] = besti;
      }
    }
  }
  return Value<S>::make(std::move(out), {x}, [argmax](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    auto& gx = n.inputs[0]->ensure_grad();
    for (Index i = 0; i < n.grad.numel(); ++i) {
      Index src = (*argmax)[static_cast<std::size_t>(i)];
      if (src >= 0) gx[src] += n.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Bilinear resize (align_corners = false), both up- and downsampling.
// ---------------------------------------------------------------------------

namespace detail {
struct AxisTaps {
  std::vector<Index> i0, i1;
  std::vector<double> w1;  // weight of i1; weight of i0 is 1-w1
};

inline AxisTaps make_axis_taps(Index in, Index out) {
  AxisTaps t;
  t.i0.resize(static_cast<std::size_t>(out));
  t.i1.resize(static_cast<std::size_t>(out));
  t.w1.resize(static_cast<std::size_t>(out));
  double scale = static_cast<double>(in) / static_cast<double>(out);
  for (Index o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    Index lo = static_cast<Index>(src);
    if (lo > in - 1) lo = in - 1;
    Index hi = std::min<Index>(lo + 1, in - 1);
    t.i0[static_cast<std::size_t>(o)] = lo;
    t.i1[static_cast<std::size_t>(o)] = hi;
    t.w1[static_cast<std::size_t>(o)] = src - static_cast<double>(lo);
  }
  return t;
}

template <typename S>
void resize_bilinear_plane(const S* src, Index w, S* dst, const AxisTaps& ty,
                           const AxisTaps& tx, Index oh, Index ow) {
  for (Index oy = 0; oy < oh; ++oy) {
    const S* r0 = src + ty.i0[static_cast<std::size_t>(oy)] * w;
    const S* r1 = src + ty.i1[static_cast<std::size_t>(oy)] * w;
    double fy = ty.w1[static_cast<std::size_t>(oy)];
    S* d = dst + oy * ow;
    for (Index ox = 0; ox < ow; ++ox) {
      Index x0 = tx.i0[static_cast<std::size_t>(ox)], x1 = tx.i1[static_cast<std::size_t>(ox)];
      double fx = tx.w1[static_cast<std::size_t>(ox)];
      double top = (1.0 - fx) * static_cast<double>(r0[x0]) + fx * static_cast<double>(r0[x1]);
      double bot = (1.0 - fx) * static_cast<double>(r1[x0]) + fx * static_cast<double>(r1[x1]);
      d[ox] = static_cast<S>((1.0 - fy) * top + fy * bot);
    }
  }
}
}  // namespace detail

// Plain tensor resize (no autodiff), for data pipelines.
template <typename S>
Tensor<S> resize_bilinear_tensor(const Tensor<S>& x, Index oh, Index ow) {
  const auto& s = x.shape();
  DAD_CHECK(s.size() == 4, ShapeError, "resize_bilinear: expects 4-d tensor");
  if (s[2] == oh && s[3] == ow) return x.clone();
  Tensor<S> out({s[0], s[1], oh, ow});
  auto ty = detail::make_axis_taps(s[2], oh);
  auto tx = detail::make_axis_taps(s[3], ow);
  for (Index p = 0; p < s[0] * s[1]; ++p)
    detail::resize_bilinear_plane(x.data() + p * s[2] * s[3], s[3], out.data() + p * oh * ow, ty, tx,
                                  oh, ow);
  return out;
}

template <typename S>
Tensor<S> resize_nearest_tensor(const Tensor<S>& x, Index oh, Index ow) {
  const auto& s = x.shape();
  DAD_CHECK(s.size() == 4, ShapeError, "resize_nearest: expects 4-d tensor");
  if (s[2] == oh && s[3] == ow) return x.clone();
  Tensor<S> out({s[0], s[1], oh, ow});
  for (Index p = 0; p < s[0] * s[1]; ++p) {
    const S* src = x.data() + p * s[2] * s[3];
    S* dst = out.data() + p * oh * ow;
    for (Index oy = 0; oy < oh; ++oy) {
      Index iy = std::min<Index>(s[2] - 1, oy * s[2] / oh);
      for (Index ox = 0; ox < ow; ++ox) {
        Index ix = std::min<Index>(s[3] - 1, ox * s[3] / ow);
        dst[oy * ow + ox] = src[iy * s[3] + ix];
      }
    }
  }
  return out;
}

// Differentiable bilinear resize.
template <typename S>
Value<S> resize_bilinear(const Value<S>& x, Index oh, Index ow) {
  const auto& s = x.shape();
  DAD_CHECK(s.size() == 4, ShapeError, "resize_bilinear: expects 4-d tensor");
  if (s[2] == oh && s[3] == ow) return x;
  Tensor<S> out = resize_bilinear_tensor(x.val(), oh, ow);
  Index planes = s[0] * s[1], h = s[2], w = s[3];
  return Value<S>::make(std::move(out), {x}, [planes, h, w, oh, ow](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    auto ty = detail::make_axis_taps(h, oh);
    auto tx = detail::make_axis_taps(w, ow);
    auto& gx = n.inputs[0]->ensure_grad();
    for (Index p = 0; p < planes; ++p) {
      const S* g = n.grad.data() + p * oh * ow;
      S* d = gx.data() + p * h * w;
      for (Index oy = 0; oy < oh; ++oy) {
        Index y0 = ty.i0[static_cast<std::size_t>(oy)], y1 = ty.i1[static_cast<std::size_t>(oy)];
        double fy = ty.w1[static_cast<std::size_t>(oy)];
        for (Index ox = 0; ox < ow; ++ox) {
          Index x0 = tx.i0[static_cast<std::size_t>(ox)], x1 = tx.i1[static_cast<std::size_t>(ox)];
          double fx = tx.w1[static_cast<std::size_t>(ox)];
          S gv = g[oy * ow + ox];
          d[y0 * w + x0] += static_cast<S>((1 - fy) * (1 - fx)) * gv;
          d[y0 * w + x1] += static_cast<S>((1 - fy) * fx) * gv;
          d[y1 * w + x0] += static_cast<S>(fy * (1 - fx)) * gv;
          d[y1 * w + x1] += static_cast<S>(fy * fx) * gv;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

// Per-channel batch norm over [B,C,H,W]. In training mode batch statistics
// are used and running stats updated in place (single-writer); in inference
// mode the running stats are read and frozen into the backward closure.
template <typename S>
Value<S> batch_norm(const Value<S>& x, const Value<S>& gamma, const Value<S>& beta,
                    Tensor<S>& running_mean, Tensor<S>& running_var, bool training,
                    S momentum = S(0.1), S eps = S(1e-5)) {
  const auto& s = x.shape();
  DAD_CHECK(s.size() == 4, ShapeError, "batch_norm: expects 4-d tensor");
  Index b = s[0], c = s[1], plane = s[2] * s[3];
  DAD_CHECK(gamma.val().numel() == c && beta.val().numel() == c, ShapeError,
            "batch_norm: affine parameter size mismatch");
  Index n = b * plane;

  Tensor<S> mean({c}), invstd({c});
  if (training) {
    for (Index ci = 0; ci < c; ++ci) {
      S sum = 0, sq = 0;
      for (Index bi = 0; bi < b; ++bi) {
        Eigen::Map<const typename Tensor<S>::Storage> xm(x.val().data() + (bi * c + ci) * plane, plane);
        sum += xm.sum();
        sq += xm.square().sum();
      }
      S mu = sum / S(n);
      S var = sq / S(n) - mu * mu;
      if (var < 0) var = 0;
      mean[ci] = mu;
      invstd[ci] = S(1) / std::sqrt(var + eps);
      running_mean[ci] = (S(1) - momentum) * running_mean[ci] + momentum * mu;
      S unbiased = n > 1 ? var * S(n) / S(n - 1) : var;
      running_var[ci] = (S(1) - momentum) * running_var[ci] + momentum * unbiased;
    }
  } else {
    for (Index ci = 0; ci < c; ++ci) {
      mean[ci] = running_mean[ci];
      invstd[ci] = S(1) / std::sqrt(running_var[ci] + eps);
    }
  }

  Tensor<S> out(s);
  for (Index bi = 0; bi < b; ++bi)
    for (Index ci = 0; ci < c; ++ci) {
      Eigen::Map<const typename Tensor<S>::Storage> xm(x.val().data() + (bi * c + ci) * plane, plane);
      Eigen::Map<typename Tensor<S>::Storage> om(out.data() + (bi * c + ci) * plane, plane);
      om = (xm - mean[ci]) * invstd[ci] * gamma.val()[ci] + beta.val()[ci];
    }

  return Value<S>::make(std::move(out), {x, gamma, beta},
                        [b, c, plane, n, mean, invstd, training](Node<S>& nd) {
    const bool need_x = nd.inputs[0]->requires_grad;
    const bool need_g = nd.inputs[1]->requires_grad;
    const bool need_b = nd.inputs[2]->requires_grad;
    const auto& xv = nd.inputs[0]->value;
    const auto& gv = nd.inputs[1]->value;
    for (Index ci = 0; ci < c; ++ci) {
      S sum_g = 0, sum_gx = 0;
      for (Index bi = 0; bi < b; ++bi) {
        Eigen::Map<const typename Tensor<S>::Storage> g(nd.grad.data() + (bi * c + ci) * plane, plane);
        Eigen::Map<const typename Tensor<S>::Storage> xm(xv.data() + (bi * c + ci) * plane, plane);
        sum_g += g.sum();
        sum_gx += (g * (xm - mean[ci]) * invstd[ci]).sum();
      }
      if (need_g) nd.inputs[1]->ensure_grad()[ci] += sum_gx;
      if (need_b) nd.inputs[2]->ensure_grad()[ci] += sum_g;
      if (need_x) {
        auto& gxall = nd.inputs[0]->ensure_grad();
        for (Index bi = 0; bi < b; ++bi) {
          Eigen::Map<const typename Tensor<S>::Storage> g(nd.grad.data() + (bi * c + ci) * plane, plane);
          Eigen::Map<const typename Tensor<S>::Storage> xm(xv.data() + (bi * c + ci) * plane, plane);
          Eigen::Map<typename Tensor<S>::Storage> gx(gxall.data() + (bi * c + ci) * plane, plane);
          if (training) {
            auto xhat = (xm - mean[ci]) * invstd[ci];
            gx += gv[ci] * invstd[ci] * (g - sum_g / S(n) - xhat * (sum_gx / S(n)));
          } else {
            gx += gv[ci] * invstd[ci] * g;
          }
        }
      }
    }
  });
}

// Layer norm across the channel axis for each (b,h,w) position, with affine.
template <typename S>
Value<S> layer_norm_channels(const Value<S>& x, const Value<S>& gamma, const Value<S>& beta,
                             S eps = S(1e-5)) {
  const auto& s = x.shape();
  DAD_CHECK(s.size() == 4, ShapeError, "layer_norm_channels: expects 4-d tensor");
  Index b = s[0], c = s[1], plane = s[2] * s[3];
  DAD_CHECK(gamma.val().numel() == c && beta.val().numel() == c, ShapeError,
            "layer_norm_channels: affine parameter size mismatch");
  Tensor<S> out(s);
  Tensor<S> mean({b, plane}), invstd({b, plane});
  for (Index bi = 0; bi < b; ++bi) {
    const S* xb = x.val().data() + bi * c * plane;
    for (Index p = 0; p < plane; ++p) {
      S sum = 0, sq = 0;
      for (Index ci = 0; ci < c; ++ci) {
        S v = xb[ci * plane + p];
        sum += v;
        sq += v * v;
      }
      S mu = sum / S(c);
      S var = sq / S(c) - mu * mu;
      if (var < 0) var = 0;
      S is = S(1) / std::sqrt(var + eps);
      mean[bi * plane + p] = mu;
      invstd[bi * plane + p] = is;
      S* ob = out.data() + bi * c * plane;
      for (Index ci = 0; ci < c; ++ci)
        ob[ci * plane + p] = (xb[ci * plane + p] - mu) * is * gamma.val()[ci] + beta.val()[ci];
    }
  }
  return Value<S>::make(std::move(out), {x, gamma, beta}, [b, c, plane, mean, invstd](Node<S>& nd) {
    const auto& xv = nd.inputs[0]->value;
    const auto& gv = nd.inputs[1]->value;
    const bool need_x = nd.inputs[0]->requires_grad;
    const bool need_g = nd.inputs[1]->requires_grad;
    const bool need_b = nd.inputs[2]->requires_grad;
    for (Index bi = 0; bi < b; ++bi) {
      const S* xb = xv.data() + bi * c * plane;
      const S* gb = nd.grad.data() + bi * c * plane;
      for (Index p = 0; p < plane; ++p) {
        S mu = mean[bi * plane + p], is = invstd[bi * plane + p];
        S sum_dxh = 0, sum_dxh_xh = 0;
        for (Index ci = 0; ci < c; ++ci) {
          S xhat = (xb[ci * plane + p] - mu) * is;
          S dxh = gb[ci * plane + p] * gv[ci];
          sum_dxh += dxh;
          sum_dxh_xh += dxh * xhat;
          if (need_g) nd.inputs[1]->ensure_grad()[ci] += gb[ci * plane + p] * xhat;
          if (need_b) nd.inputs[2]->ensure_grad()[ci] += gb[ci * plane + p];
        }
        if (need_x) {
          S* gx = nd.inputs[0]->ensure_grad().data() + bi * c * plane;
          for (Index ci = 0; ci < c; ++ci) {
            S xhat = (xb[ci * plane + p] - mu) * is;
            S dxh = gb[ci * plane + p] * gv[ci];
            gx[ci * plane + p] += is * (dxh - sum_dxh / S(c) - xhat * sum_dxh_xh / S(c));
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Box mean (stride 1, same size, window truncated at borders). Used by the
// pixel-weight map; operates on plain tensors, no gradient.
// ---------------------------------------------------------------------------

// Truncated-window box sums; divide=true turns them into means.
template <typename S>
Tensor<S> box_sum(const Tensor<S>& x, Index k, bool divide) {
  const auto& s = x.shape();
  DAD_CHECK(s.size() == 4, ShapeError, "box_mean: expects 4-d tensor");
  DAD_CHECK(k >= 1 && k % 2 == 1, ValidationError, "box_mean: kernel must be odd and positive");
  Index h = s[2], w = s[3], r = k / 2;
  Tensor<S> out(s);
  std::vector<double> integral(static_cast<std::size_t>((h + 1) * (w + 1)));
  for (Index p = 0; p < s[0] * s[1]; ++p) {
    const S* src = x.data() + p * h * w;
    for (Index i = 0; i <= w; ++i) integral[static_cast<std::size_t>(i)] = 0.0;
    for (Index y = 0; y < h; ++y) {
      double rowsum = 0.0;
      integral[static_cast<std::size_t>((y + 1) * (w + 1))] = 0.0;
      for (Index x2 = 0; x2 < w; ++x2) {
        rowsum += static_cast<double>(src[y * w + x2]);
        integral[static_cast<std::size_t>((y + 1) * (w + 1) + x2 + 1)] =
            integral[static_cast<std::size_t>(y * (w + 1) + x2 + 1)] + rowsum;
      }
    }
    S* dst = out.data() + p * h * w;
    for (Index y = 0; y < h; ++y) {
      Index y0 = std::max<Index>(0, y - r), y1 = std::min<Index>(h - 1, y + r);
      for (Index x2 = 0; x2 < w; ++x2) {
        Index x0 = std::max<Index>(0, x2 - r), x1 = std::min<Index>(w - 1, x2 + r);
        double sum = integral[static_cast<std::size_t>((y1 + 1) * (w + 1) + x1 + 1)] -
                     integral[static_cast<std::size_t>(y0 * (w + 1) + x1 + 1)] -
                     integral[static_cast<std::size_t>((y1 + 1) * (w + 1) + x0)] +
                     integral[static_cast<std::size_t>(y0 * (w + 1) + x0)];
        double cnt = static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
        dst[y * w + x2] = static_cast<S>(divide ? sum / cnt : sum);
      }
    }
  }
  return out;
}

template <typename S>
Tensor<S> box_mean(const Tensor<S>& x, Index k) {
  return box_sum(x, k, /*divide=*/true);
}

// Elements inside the truncated k x k window centered at (y,x).
inline Index box_window_count(Index h, Index w, Index y, Index x, Index k) {
  Index r = k / 2;
  Index ys = std::min<Index>(h - 1, y + r) - std::max<Index>(0, y - r) + 1;
  Index xs = std::min<Index>(w - 1, x + r) - std::max<Index>(0, x - r) + 1;
  return ys * xs;
}

}  // namespace dad

#endif  // DAD_CONV_HPP
