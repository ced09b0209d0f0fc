#ifndef DAD_OPS_HPP
#define DAD_OPS_HPP

#include <cmath>
#include <cstring>
#include <vector>

#include "dad/graph.hpp"

namespace dad {

namespace detail {
template <typename S>
inline void accumulate(Node<S>& n, std::size_t k, const typename Tensor<S>::Storage& g) {
  if (n.inputs[k] && n.inputs[k]->requires_grad) n.inputs[k]->ensure_grad().array() += g;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (same-shape operands)
// ---------------------------------------------------------------------------

template <typename S>
Value<S> add(const Value<S>& a, const Value<S>& b) {
  DAD_CHECK(a.val().same_shape(b.val()), ShapeError, "add: shape mismatch");
  Tensor<S> out(a.shape(), a.val().array() + b.val().array());
  return Value<S>::make(std::move(out), {a, b}, [](Node<S>& n) {
    detail::accumulate(n, 0, n.grad.array());
    detail::accumulate(n, 1, n.grad.array());
  });
}

template <typename S>
Value<S> sub(const Value<S>& a, const Value<S>& b) {
  DAD_CHECK(a.val().same_shape(b.val()), ShapeError, "sub: shape mismatch");
  Tensor<S> out(a.shape(), a.val().array() - b.val().array());
  return Value<S>::make(std::move(out), {a, b}, [](Node<S>& n) {
    detail::accumulate(n, 0, n.grad.array());
    if (n.inputs[1] && n.inputs[1]->requires_grad) n.inputs[1]->ensure_grad().array() -= n.grad.array();
  });
}

template <typename S>
Value<S> mul(const Value<S>& a, const Value<S>& b) {
  DAD_CHECK(a.val().same_shape(b.val()), ShapeError, "mul: shape mismatch");
  Tensor<S> out(a.shape(), a.val().array() * b.val().array());
  return Value<S>::make(std::move(out), {a, b}, [](Node<S>& n) {
    if (n.inputs[0]->requires_grad)
      n.inputs[0]->ensure_grad().array() += n.grad.array() * n.inputs[1]->value.array();
    if (n.inputs[1]->requires_grad)
      n.inputs[1]->ensure_grad().array() += n.grad.array() * n.inputs[0]->value.array();
  });
}

template <typename S>
Value<S> div(const Value<S>& a, const Value<S>& b) {
  DAD_CHECK(a.val().same_shape(b.val()), ShapeError, "div: shape mismatch");
  Tensor<S> out(a.shape(), a.val().array() / b.val().array());
  return Value<S>::make(std::move(out), {a, b}, [](Node<S>& n) {
    const auto& bv = n.inputs[1]->value.array();
    if (n.inputs[0]->requires_grad) n.inputs[0]->ensure_grad().array() += n.grad.array() / bv;
    if (n.inputs[1]->requires_grad)
      n.inputs[1]->ensure_grad().array() -= n.grad.array() * n.inputs[0]->value.array() / (bv * bv);
  });
}

template <typename S>
Value<S> add_scalar(const Value<S>& a, S c) {
  Tensor<S> out(a.shape(), a.val().array() + c);
  return Value<S>::make(std::move(out), {a}, [](Node<S>& n) { detail::accumulate(n, 0, n.grad.array()); });
}

template <typename S>
Value<S> mul_scalar(const Value<S>& a, S c) {
  Tensor<S> out(a.shape(), a.val().array() * c);
  return Value<S>::make(std::move(out), {a}, [c](Node<S>& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->ensure_grad().array() += n.grad.array() * c;
  });
}

template <typename S>
Value<S> neg(const Value<S>& a) {
  return mul_scalar(a, S(-1));
}

template <typename S>
Value<S> relu(const Value<S>& a) {
  Tensor<S> out(a.shape(), a.val().array().max(S(0)));
  return Value<S>::make(std::move(out), {a}, [](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    auto mask = (n.inputs[0]->value.array() > S(0)).template cast<S>();
    n.inputs[0]->ensure_grad().array() += n.grad.array() * mask;
  });
}

template <typename S>
Value<S> sigmoid(const Value<S>& a) {
  Tensor<S> out(a.shape());
  const auto& x = a.val().array();
  // numerically stable split by sign
  for (Index i = 0; i < out.numel(); ++i) {
    S v = x[i];
    out[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v)) : std::exp(v) / (S(1) + std::exp(v));
  }
  return Value<S>::make(std::move(out), {a}, [](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    const auto& y = n.value.array();
    n.inputs[0]->ensure_grad().array() += n.grad.array() * y * (S(1) - y);
  });
}

// y = gamma[0] * x, gamma a learnable scalar of shape [1]
template <typename S>
Value<S> scale(const Value<S>& gamma, const Value<S>& x) {
  DAD_CHECK(gamma.val().numel() == 1, ShapeError, "scale: gamma must be a scalar");
  S g0 = gamma.val()[0];
  Tensor<S> out(x.shape(), x.val().array() * g0);
  return Value<S>::make(std::move(out), {gamma, x}, [g0](Node<S>& n) {
    if (n.inputs[0]->requires_grad)
      n.inputs[0]->ensure_grad()[0] += (n.grad.array() * n.inputs[1]->value.array()).sum();
    if (n.inputs[1]->requires_grad) n.inputs[1]->ensure_grad().array() += n.grad.array() * g0;
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

template <typename S>
Value<S> reshape(const Value<S>& a, std::vector<Index> shape) {
  Tensor<S> out = a.val().reshaped(std::move(shape));
  return Value<S>::make(std::move(out), {a}, [](Node<S>& n) { detail::accumulate(n, 0, n.grad.array()); });
}

// [..., M, N] -> [..., N, M]
template <typename S>
Value<S> transpose_last2(const Value<S>& a) {
  const auto& sh = a.shape();
  DAD_CHECK(sh.size() >= 2, ShapeError, "transpose_last2: rank < 2");
  Index m = sh[sh.size() - 2], k = sh[sh.size() - 1];
  Index batch = a.val().numel() / (m * k);
  std::vector<Index> osh(sh);
  std::swap(osh[osh.size() - 2], osh[osh.size() - 1]);
  Tensor<S> out(osh);
  for (Index b = 0; b < batch; ++b) {
    typename Tensor<S>::ConstMapRM in(a.val().data() + b * m * k, m, k);
    typename Tensor<S>::MapRM o(out.data() + b * m * k, k, m);
    o = in.transpose();
  }
  return Value<S>::make(std::move(out), {a}, [m, k, batch](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    auto& ga = n.inputs[0]->ensure_grad();
    for (Index b = 0; b < batch; ++b) {
      typename Tensor<S>::ConstMapRM g(n.grad.data() + b * m * k, k, m);
      typename Tensor<S>::MapRM o(ga.data() + b * m * k, m, k);
      o += g.transpose();
    }
  });
}

// Concatenate along the channel axis of [B,C,H,W] tensors.
template <typename S>
Value<S> concat_channels(const std::vector<Value<S>>& xs) {
  DAD_CHECK(!xs.empty(), ValidationError, "concat_channels: empty input list");
  const auto& s0 = xs[0].shape();
  DAD_CHECK(s0.size() == 4, ShapeError, "concat_channels: expects 4-d tensors");
  Index b = s0[0], h = s0[2], w = s0[3], ctot = 0;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    DAD_CHECK(s.size() == 4 && s[0] == b && s[2] == h && s[3] == w, ShapeError,
              "concat_channels: incompatible shapes");
    ctot += s[1];
  }
  Tensor<S> out({b, ctot, h, w});
  Index plane = h * w;
  for (Index bi = 0; bi < b; ++bi) {
    Index coff = 0;
    for (const auto& x : xs) {
      Index ci = x.shape()[1];
      std::memcpy(out.data() + (bi * ctot + coff) * plane, x.val().data() + bi * ci * plane,
                  sizeof(S) * static_cast<std::size_t>(ci * plane));
      coff += ci;
    }
  }
  std::vector<Index> chans;
  for (const auto& x : xs) chans.push_back(x.shape()[1]);
  return Value<S>::make(std::move(out), xs, [b, plane, ctot, chans](Node<S>& n) {
    for (Index bi = 0; bi < b; ++bi) {
      Index coff = 0;
      for (std::size_t k = 0; k < chans.size(); ++k) {
        Index ci = chans[k];
        if (n.inputs[k]->requires_grad) {
          auto& g = n.inputs[k]->ensure_grad();
          Eigen::Map<typename Tensor<S>::Storage>(g.data() + bi * ci * plane, ci * plane) +=
              Eigen::Map<const typename Tensor<S>::Storage>(n.grad.data() + (bi * ctot + coff) * plane,
                                                            ci * plane);
        }
        coff += ci;
      }
    }
  });
}

// [B,1,H,W] -> [B,C,H,W] by copying the single channel (the guide-map copy op).
template <typename S>
Value<S> broadcast_channels(const Value<S>& x, Index c) {
  const auto& s = x.shape();
  DAD_CHECK(s.size() == 4 && s[1] == 1, ShapeError, "broadcast_channels: expects [B,1,H,W]");
  Index b = s[0], plane = s[2] * s[3];
  Tensor<S> out({b, c, s[2], s[3]});
  for (Index bi = 0; bi < b; ++bi)
    for (Index ci = 0; ci < c; ++ci)
      std::memcpy(out.data() + (bi * c + ci) * plane, x.val().data() + bi * plane,
                  sizeof(S) * static_cast<std::size_t>(plane));
  return Value<S>::make(std::move(out), {x}, [b, c, plane](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    auto& g = n.inputs[0]->ensure_grad();
    for (Index bi = 0; bi < b; ++bi)
      for (Index ci = 0; ci < c; ++ci)
        Eigen::Map<typename Tensor<S>::Storage>(g.data() + bi * plane, plane) +=
            Eigen::Map<const typename Tensor<S>::Storage>(n.grad.data() + (bi * c + ci) * plane, plane);
  });
}

// p [B,1,H,W] * e [B,C,H,W], broadcast over channels.
template <typename S>
Value<S> mul_broadcast_channel(const Value<S>& p, const Value<S>& e) {
  const auto& sp = p.shape();
  const auto& se = e.shape();
  DAD_CHECK(sp.size() == 4 && se.size() == 4 && sp[1] == 1 && sp[0] == se[0] && sp[2] == se[2] &&
                sp[3] == se[3],
            ShapeError, "mul_broadcast_channel: expects p [B,1,H,W] matching e [B,C,H,W]");
  Index b = se[0], c = se[1], plane = se[2] * se[3];
  Tensor<S> out(se);
  for (Index bi = 0; bi < b; ++bi) {
    Eigen::Map<const typename Tensor<S>::Storage> pm(p.val().data() + bi * plane, plane);
    for (Index ci = 0; ci < c; ++ci) {
      Eigen::Map<const typename Tensor<S>::Storage> em(e.val().data() + (bi * c + ci) * plane, plane);
      Eigen::Map<typename Tensor<S>::Storage>(out.data() + (bi * c + ci) * plane, plane) = pm * em;
    }
  }
  return Value<S>::make(std::move(out), {p, e}, [b, c, plane](Node<S>& n) {
    for (Index bi = 0; bi < b; ++bi) {
      Eigen::Map<const typename Tensor<S>::Storage> pm(n.inputs[0]->value.data() + bi * plane, plane);
      for (Index ci = 0; ci < c; ++ci) {
        Eigen::Map<const typename Tensor<S>::Storage> gm(n.grad.data() + (bi * c + ci) * plane, plane);
        Eigen::Map<const typename Tensor<S>::Storage> em(n.inputs[1]->value.data() + (bi * c + ci) * plane,
                                                         plane);
        if (n.inputs[0]->requires_grad)
          Eigen::Map<typename Tensor<S>::Storage>(n.inputs[0]->ensure_grad().data() + bi * plane, plane) +=
              gm * em;
        if (n.inputs[1]->requires_grad)
          Eigen::Map<typename Tensor<S>::Storage>(n.inputs[1]->ensure_grad().data() + (bi * c + ci) * plane,
                                                  plane) += gm * pm;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename S>
Value<S> matmul(const Value<S>& a, const Value<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  DAD_CHECK(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0], ShapeError, "matmul: shape mismatch");
  Index m = sa[0], k = sa[1], n2 = sb[1];
  Tensor<S> out({m, n2});
  out.mat(m, n2).noalias() = a.val().mat(m, k) * b.val().mat(k, n2);
  return Value<S>::make(std::move(out), {a, b}, [m, k, n2](Node<S>& n) {
    typename Tensor<S>::ConstMapRM g(n.grad.data(), m, n2);
    if (n.inputs[0]->requires_grad)
      n.inputs[0]->ensure_grad().mat(m, k).noalias() += g * n.inputs[1]->value.mat(k, n2).transpose();
    if (n.inputs[1]->requires_grad)
      n.inputs[1]->ensure_grad().mat(k, n2).noalias() += n.inputs[0]->value.mat(m, k).transpose() * g;
  });
}

// Batched matmul: [B,M,K] x [B,K,N] -> [B,M,N]
template <typename S>
Value<S> bmm(const Value<S>& a, const Value<S>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  DAD_CHECK(sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0] && sa[2] == sb[1], ShapeError,
            "bmm: shape mismatch");
  Index bt = sa[0], m = sa[1], k = sa[2], n2 = sb[2];
  Tensor<S> out({bt, m, n2});
  for (Index i = 0; i < bt; ++i) {
    typename Tensor<S>::ConstMapRM am(a.val().data() + i * m * k, m, k);
    typename Tensor<S>::ConstMapRM bm(b.val().data() + i * k * n2, k, n2);
    typename Tensor<S>::MapRM om(out.data() + i * m * n2, m, n2);
    om.noalias() = am * bm;
  }
  return Value<S>::make(std::move(out), {a, b}, [bt, m, k, n2](Node<S>& n) {
    for (Index i = 0; i < bt; ++i) {
      typename Tensor<S>::ConstMapRM g(n.grad.data() + i * m * n2, m, n2);
      typename Tensor<S>::ConstMapRM am(n.inputs[0]->value.data() + i * m * k, m, k);
      typename Tensor<S>::ConstMapRM bm(n.inputs[1]->value.data() + i * k * n2, k, n2);
      if (n.inputs[0]->requires_grad) {
        typename Tensor<S>::MapRM ga(n.inputs[0]->ensure_grad().data() + i * m * k, m, k);
        ga.noalias() += g * bm.transpose();
      }
      if (n.inputs[1]->requires_grad) {
        typename Tensor<S>::MapRM gb(n.inputs[1]->ensure_grad().data() + i * k * n2, k, n2);
        gb.noalias() += am.transpose() * g;
      }
    }
  });
}

// Row softmax over the last axis (rank 2 or 3).
template <typename S>
Value<S> softmax_rows(const Value<S>& x) {
  const auto& s = x.shape();
  DAD_CHECK(s.size() >= 2, ShapeError, "softmax_rows: rank < 2");
  Index cols = s.back();
  Index rows = x.val().numel() / cols;
  Tensor<S> out(s);
  for (Index r = 0; r < rows; ++r) {
    Eigen::Map<const typename Tensor<S>::Storage> xi(x.val().data() + r * cols, cols);
    Eigen::Map<typename Tensor<S>::Storage> yi(out.data() + r * cols, cols);
    S mx = xi.maxCoeff();
    yi = (xi - mx).exp();
    yi /= yi.sum();
  }
  return Value<S>::make(std::move(out), {x}, [rows, cols](Node<S>& n) {
    if (!n.inputs[0]->requires_grad) return;
    auto& gx = n.inputs[0]->ensure_grad();
    for (Index r = 0; r < rows; ++r) {
      Eigen::Map<const typename Tensor<S>::Storage> y(n.value.data() + r * cols, cols);
      Eigen::Map<const typename Tensor<S>::Storage> g(n.grad.data() + r * cols, cols);
      S dot = (g * y).sum();
      Eigen::Map<typename Tensor<S>::Storage>(gx.data() + r * cols, cols) += y * (g - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Value<S> sum_all(const Value<S>& x) {
  Tensor<S> out = Tensor<S>::scalar(x.val().array().sum());
  return Value<S>::make(std::move(out), {x}, [](Node<S>& n) {
    if (n.inputs[0]->requires_grad) n.inputs[0]->ensure_grad().array() += n.grad[0];
  });
}

template <typename S>
Value<S> mean_all(const Value<S>& x) {
  Index n = x.val().numel();
  Tensor<S> out = Tensor<S>::scalar(x.val().array().sum() / S(n));
  return Value<S>::make(std::move(out), {x}, [n](Node<S>& nd) {
    if (nd.inputs[0]->requires_grad) nd.inputs[0]->ensure_grad().array() += nd.grad[0] / S(n);
  });
}

// Create a constant copy detached from the graph.
template <typename S>
Value<S> detach(const Value<S>& x) {
  return Value<S>::constant(x.val().clone());
}

}  // namespace dad

#endif  // DAD_OPS_HPP
