#ifndef DAD_TEST_ORACLES_HPP
#define DAD_TEST_ORACLES_HPP

// Independent loop oracles used by the unit and acceptance suites. Direct
// transcriptions of the metric recipes and a reachability-based receptive
// field measurement; deliberately share no code with the library.

#include <cmath>
#include <vector>

#include "dad/blocks.hpp"
#include "dad/metrics.hpp"

namespace oracle {

using dad::Index;
using dad::Tensor;



constexpr double eps = 1e-12;

inline double mae(const Tensor<double>& p, const Tensor<double>& g) {
  double s = 0;
  for (Index y = 0; y < p.dim(0); ++y)
    for (Index x = 0; x < p.dim(1); ++x) s += std::abs(p.at(y, x) - g.at(y, x));
  return s / double(p.numel());
}

inline double object_term(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  double mean = 0;
  for (double v : vals) mean += v;
  mean /= double(vals.size());
  double var = 0;
  for (double v : vals) var += (v - mean) * (v - mean);
  double sd = vals.size() > 1 ? std::sqrt(var / double(vals.size() - 1)) : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sd + eps);
}

inline double ssim_region(const Tensor<double>& p, const Tensor<double>& g, Index y0, Index y1, Index x0,
                   Index x1) {
  double n = double((y1 - y0) * (x1 - x0));
  if (n <= 0) return 0;
  double mx = 0, my = 0;
  for (Index y = y0; y < y1; ++y)
    for (Index x = x0; x < x1; ++x) {
      mx += p.at(y, x);
      my += g.at(y, x);
    }
  mx /= n;
  my /= n;
  double vx = 0, vy = 0, vxy = 0;
  for (Index y = y0; y < y1; ++y)
    for (Index x = x0; x < x1; ++x) {
      vx += (p.at(y, x) - mx) * (p.at(y, x) - mx);
      vy += (g.at(y, x) - my) * (g.at(y, x) - my);
      vxy += (p.at(y, x) - mx) * (g.at(y, x) - my);
    }
  vx /= n - 1 + eps;
  vy /= n - 1 + eps;
  vxy /= n - 1 + eps;
  double a = 4.0 * mx * my * vxy;
  double b = (mx * mx + my * my) * (vx + vy);
  if (a != 0.0) return a / (b + eps);
  return b == 0.0 ? 1.0 : 0.0;
}

inline double s_measure(const Tensor<double>& p, const Tensor<double>& g) {
  Index h = g.dim(0), w = g.dim(1);
  double area = 0, pm = 0;
  for (Index i = 0; i < g.numel(); ++i) {
    area += g[i];
    pm += p[i];
  }
  if (area == 0) return std::clamp(1.0 - pm / double(g.numel()), 0.0, 1.0);
  if (area == double(g.numel())) return std::clamp(pm / double(g.numel()), 0.0, 1.0);

  std::vector<double> fgv, bgv;
  for (Index i = 0; i < g.numel(); ++i) {
    if (g[i] == 1.0)
      fgv.push_back(p[i]);
    else
      bgv.push_back(1.0 - p[i]);
  }
  double u = area / double(g.numel());
  double so = u * object_term(fgv) + (1 - u) * object_term(bgv);

  double cx = 0, cy = 0;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      if (g.at(y, x) == 1.0) {
        cx += double(x + 1);
        cy += double(y + 1);
      }
  Index qx = std::clamp<Index>(Index(std::llround(cx / area)), 1, w);
  Index qy = std::clamp<Index>(Index(std::llround(cy / area)), 1, h);
  double tot = double(h * w);
  double w1 = double(qx * qy) / tot, w2 = double((w - qx) * qy) / tot, w3 = double(qx * (h - qy)) / tot;
  double w4 = 1.0 - w1 - w2 - w3;
  double sr = w1 * ssim_region(p, g, 0, qy, 0, qx) + w2 * ssim_region(p, g, 0, qy, qx, w) +
              w3 * ssim_region(p, g, qy, h, 0, qx) + w4 * ssim_region(p, g, qy, h, qx, w);
  return std::clamp(0.5 * so + 0.5 * sr, 0.0, 1.0);
}

inline double e_measure(const Tensor<double>& p, const Tensor<double>& g) {
  Index n = p.numel();
  double pm = 0, gm = 0;
  for (Index i = 0; i < n; ++i) pm += p[i];
  double thr = std::max(std::min(2.0 * pm / double(n), 1.0), eps);
  std::vector<double> b(static_cast<std::size_t>(n));
  double bs = 0;
  for (Index i = 0; i < n; ++i) {
    b[static_cast<std::size_t>(i)] = p[i] >= thr ? 1.0 : 0.0;
    bs += b[static_cast<std::size_t>(i)];
    gm += g[i];
  }
  if (gm == 0) return std::clamp(1.0 - bs / double(n), 0.0, 1.0);
  if (gm == double(n)) return std::clamp(bs / double(n), 0.0, 1.0);
  double mb = bs / double(n), mg = gm / double(n), acc = 0;
  for (Index i = 0; i < n; ++i) {
    double db = b[static_cast<std::size_t>(i)] - mb, dg = g[i] - mg;
    double align = 2.0 * dg * db / (dg * dg + db * db + eps);
    acc += (align + 1.0) * (align + 1.0) / 4.0;
  }
  return std::clamp(acc / double(n), 0.0, 1.0);
}

inline double weighted_f(const Tensor<double>& p, const Tensor<double>& g) {
  Index h = g.dim(0), w = g.dim(1);
  double area = 0;
  for (Index i = 0; i < g.numel(); ++i) area += g[i];
  if (area == 0) return 0.0;

  // brute-force nearest foreground pixel; scan columns first so distance
  // ties resolve to the smaller column then the smaller row, matching the
  // library's transform
  std::vector<Index> ny(static_cast<std::size_t>(h * w)), nx(static_cast<std::size_t>(h * w));
  std::vector<double> dist(static_cast<std::size_t>(h * w));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double best = 1e30;
      Index by = -1, bx = -1;
      for (Index fx = 0; fx < w; ++fx)
        for (Index fy = 0; fy < h; ++fy)
          if (g.at(fy, fx) == 1.0) {
            double d = double((y - fy) * (y - fy) + (x - fx) * (x - fx));
            if (d < best) {
              best = d;
              by = fy;
              bx = fx;
            }
          }
      dist[static_cast<std::size_t>(y * w + x)] = std::sqrt(best);
      ny[static_cast<std::size_t>(y * w + x)] = by;
      nx[static_cast<std::size_t>(y * w + x)] = bx;
    }

  std::vector<double> et(static_cast<std::size_t>(h * w));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      if (g.at(y, x) == 1.0) {
        et[static_cast<std::size_t>(y * w + x)] = std::abs(p.at(y, x) - 1.0);
      } else {
        Index sy = ny[static_cast<std::size_t>(y * w + x)], sx = nx[static_cast<std::size_t>(y * w + x)];
        et[static_cast<std::size_t>(y * w + x)] = std::abs(p.at(sy, sx) - g.at(sy, sx));
      }
    }

  double kern[7][7], ks = 0;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      kern[i][j] = std::exp(-((i - 3) * (i - 3) + (j - 3) * (j - 3)) / 50.0);
      ks += kern[i][j];
    }
  for (auto& row : kern)
    for (auto& v : row) v /= ks;

  double sum_fg = 0, sum_bg = 0;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double err = std::abs(p.at(y, x) - g.at(y, x));
      if (g.at(y, x) == 1.0) {
        double ea = 0, mass = 0;
        for (int i = 0; i < 7; ++i)
          for (int j = 0; j < 7; ++j) {
            Index yy = y + i - 3, xx = x + j - 3;
            if (yy >= 0 && yy < h && xx >= 0 && xx < w) {
              ea += kern[i][j] * et[static_cast<std::size_t>(yy * w + xx)];
              mass += kern[i][j];
            }
          }
        ea /= mass;
        sum_fg += std::min(err, ea);
      } else {
        double bw = 2.0 - std::exp(std::log(0.5) / 5.0 * dist[static_cast<std::size_t>(y * w + x)]);
        sum_bg += err * bw;
      }
    }
  double tpw = area - sum_fg, fpw = sum_bg;
  double recall = 1.0 - sum_fg / area;
  double prec = tpw / (eps + tpw + fpw);
  return std::clamp(2.0 * prec * recall / (eps + prec + recall), 0.0, 1.0);
}


// Reachability oracle: mark one input pixel, push a boolean mask through the
// chain (a pixel is reachable if any kernel tap lands on a reachable input)
// and measure the side length of the output support. Strides are 1, so the
// support equals the receptive field.
inline Index receptive_field(const std::vector<dad::ConvBlockSpec>& chain) {
  Index margin = 0;
  for (const auto& b : chain) margin += (b.kernel - 1) * b.dilation;
  Index n = 2 * margin + 5;
  std::vector<char> cur(static_cast<std::size_t>(n * n), 0);
  cur[static_cast<std::size_t>((n / 2) * n + n / 2)] = 1;
  for (const auto& b : chain) {
    std::vector<char> next(static_cast<std::size_t>(n * n), 0);
    Index r = (b.kernel - 1) / 2;
    for (Index y = 0; y < n; ++y)
      for (Index x = 0; x < n; ++x) {
        bool hit = false;
        for (Index ky = -r; ky <= r && !hit; ++ky)
          for (Index kx = -r; kx <= r && !hit; ++kx) {
            Index iy = y + ky * b.dilation, ix = x + kx * b.dilation;
            if (iy >= 0 && iy < n && ix >= 0 && ix < n)
              hit = cur[static_cast<std::size_t>(iy * n + ix)];
          }
        next[static_cast<std::size_t>(y * n + x)] = hit;
      }
    cur.swap(next);
  }
  Index lo = n, hi = -1;
  for (Index y = 0; y < n; ++y)
    for (Index x = 0; x < n; ++x)
      if (cur[static_cast<std::size_t>(y * n + x)]) {
        lo = std::min(lo, y);
        hi = std::max(hi, y);
      }
  return hi - lo + 1;
}

}  // namespace oracle

#endif
