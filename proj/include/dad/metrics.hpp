#ifndef DAD_METRICS_HPP
#define DAD_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

#include "dad/tensor.hpp"

namespace dad {

// Evaluation metrics for binary segmentation. All functions take a prediction
// in [0,1] and a {0,1} ground truth of identical [H,W] shape and return a
// value in [0,1].

namespace metric_detail {

constexpr double kEps = 1e-12;

template <typename S>
void check_pair(const Tensor<S>& pred, const Tensor<S>& gt) {
  DAD_CHECK(pred.rank() == 2 && gt.rank() == 2, ShapeError, "metrics: expect [H,W] maps");
  DAD_CHECK(pred.same_shape(gt), ShapeError, "metrics: prediction/ground-truth size mismatch");
  for (Index i = 0; i < pred.numel(); ++i) {
    DAD_CHECK(pred[i] >= S(0) && pred[i] <= S(1), ValidationError,
              "metrics: prediction values must lie in [0,1]");
    DAD_CHECK(gt[i] == S(0) || gt[i] == S(1), ValidationError, "metrics: ground truth must be binary");
  }
}

template <typename S>
double mean_of(const Tensor<S>& t) {
  return static_cast<double>(t.array().template cast<double>().sum()) / static_cast<double>(t.numel());
}

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Exact Euclidean distance transform with nearest-site tracking. For every
// pixel returns the squared distance to the closest foreground pixel and its
// flat index. Two-pass lower-envelope construction over rows after a
// per-column scan.
inline void distance_transform(const std::vector<char>& fg, Index h, Index w,
                               std::vector<double>& dist2, std::vector<Index>& nearest) {
  const double big = static_cast<double>((h + w) * (h + w) + 1);
  std::vector<double> coldist(static_cast<std::size_t>(h * w), big);
  std::vector<Index> colsite(static_cast<std::size_t>(h * w), -1);
  for (Index x = 0; x < w; ++x) {
    Index last = -1;
    for (Index y = 0; y < h; ++y) {
      if (fg[static_cast<std::size_t>(y * w + x)]) last = y;
      if (last >= 0) {
        coldist[static_cast<std::size_t>(y * w + x)] = static_cast<double>((y - last) * (y - last));
        colsite[static_cast<std::size_t>(y * w + x)] = last;
      }
    }
    last = -1;
    for (Index y = h - 1; y >= 0; --y) {
      if (fg[static_cast<std::size_t>(y * w + x)]) last = y;
      if (last >= 0) {
        double d = static_cast<double>((last - y) * (last - y));
        if (d < coldist[static_cast<std::size_t>(y * w + x)]) {
          coldist[static_cast<std::size_t>(y * w + x)] = d;
          colsite[static_cast<std::size_t>(y * w + x)] = last;
        }
      }
    }
  }
  dist2.assign(static_cast<std::size_t>(h * w), big);
  nearest.assign(static_cast<std::size_t>(h * w), -1);
  std::vector<Index> v(static_cast<std::size_t>(w));
  std::vector<double> zbound(static_cast<std::size_t>(w) + 1);
  for (Index y = 0; y < h; ++y) {
    const double* f = &coldist[static_cast<std::size_t>(y * w)];
    Index k = 0;
    v[0] = 0;
    zbound[0] = -1e30;
    zbound[1] = 1e30;
    for (Index q = 1; q < w; ++q) {
      double s;
      while (true) {
        Index p = v[static_cast<std::size_t>(k)];
        s = ((f[q] + double(q) * q) - (f[p] + double(p) * p)) / (2.0 * q - 2.0 * p);
        if (s <= zbound[static_cast<std::size_t>(k)]) {
          --k;
        } else {
          break;
        }
      }
      ++k;
      v[static_cast<std::size_t>(k)] = q;
      zbound[static_cast<std::size_t>(k)] = s;
      zbound[static_cast<std::size_t>(k) + 1] = 1e30;
    }
    k = 0;
    for (Index x = 0; x < w; ++x) {
      while (zbound[static_cast<std::size_t>(k) + 1] < double(x)) ++k;
      Index src = v[static_cast<std::size_t>(k)];
      double d = double(x - src) * double(x - src) + f[src];
      dist2[static_cast<std::size_t>(y * w + x)] = d;
      Index sy = colsite[static_cast<std::size_t>(y * w + src)];
      nearest[static_cast<std::size_t>(y * w + x)] = sy >= 0 ? sy * w + src : -1;
    }
  }
}

}  // namespace metric_detail

// Mean absolute error.
template <typename S>
double mae(const Tensor<S>& pred, const Tensor<S>& gt) {
  metric_detail::check_pair(pred, gt);
  double sum = 0;
  for (Index i = 0; i < pred.numel(); ++i) sum += std::abs(double(pred[i]) - double(gt[i]));
  return sum / double(pred.numel());
}

// ---------------------------------------------------------------------------
// Structure measure: convex combination of object-aware and region-aware
// structural similarity. Degenerate ground truths follow the reference
// evaluator behavior.
// ---------------------------------------------------------------------------

namespace metric_detail {

template <typename S>
double object_score(const Tensor<S>& pred, const std::vector<char>& mask) {
  double n = 0, sum = 0;
  for (Index i = 0; i < pred.numel(); ++i)
    if (mask[static_cast<std::size_t>(i)]) {
      n += 1;
      sum += double(pred[i]);
    }
  if (n == 0) return 0.0;
  double x = sum / n;
  double var = 0;
  for (Index i = 0; i < pred.numel(); ++i)
    if (mask[static_cast<std::size_t>(i)]) var += (double(pred[i]) - x) * (double(pred[i]) - x);
  double sigma = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

template <typename S>
double region_ssim(const Tensor<S>& pred, const Tensor<S>& gt, Index y0, Index y1, Index x0, Index x1) {
  double n = double((y1 - y0) * (x1 - x0));
  if (n <= 0) return 0.0;
  double sx = 0, sy = 0;
  for (Index y = y0; y < y1; ++y)
    for (Index x = x0; x < x1; ++x) {
      sx += double(pred.at(y, x));
      sy += double(gt.at(y, x));
    }
  double mx = sx / n, my = sy / n;
  double vx = 0, vy = 0, vxy = 0;
  for (Index y = y0; y < y1; ++y)
    for (Index x = x0; x < x1; ++x) {
      double dx = double(pred.at(y, x)) - mx, dy = double(gt.at(y, x)) - my;
      vx += dx * dx;
      vy += dy * dy;
      vxy += dx * dy;
    }
  double denom = n - 1 + kEps;
  vx /= denom;
  vy /= denom;
  vxy /= denom;
  double a = 4.0 * mx * my * vxy;
  double b = (mx * mx + my * my) * (vx + vy);
  if (a != 0.0) return a / (b + kEps);
  return b == 0.0 ? 1.0 : 0.0;
}

}  // namespace metric_detail

template <typename S>
double s_measure(const Tensor<S>& pred, const Tensor<S>& gt, double alpha = 0.5) {
  using namespace metric_detail;
  check_pair(pred, gt);
  Index h = gt.dim(0), w = gt.dim(1);
  double gmean = mean_of(gt);
  if (gmean == 0.0) return clamp01(1.0 - mean_of(pred));
  if (gmean == 1.0) return clamp01(mean_of(pred));

  // object-aware term
  std::vector<char> fg(static_cast<std::size_t>(h * w)), bg(static_cast<std::size_t>(h * w));
  for (Index i = 0; i < gt.numel(); ++i) {
    fg[static_cast<std::size_t>(i)] = gt[i] == S(1);
    bg[static_cast<std::size_t>(i)] = gt[i] == S(0);
  }
  Tensor<S> pred_bg(pred.shape());
  for (Index i = 0; i < pred.numel(); ++i) pred_bg[i] = S(1) - pred[i];
  double s_object = gmean * object_score(pred, fg) + (1.0 - gmean) * object_score(pred_bg, bg);

  // region-aware term: ground-truth-centroid quadrants, area-weighted
  double area = gmean * double(h * w);
  double cx = 0, cy = 0;
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      if (gt.at(y, x) == S(1)) {
        cx += double(x + 1);
        cy += double(y + 1);
      }
  Index qx = static_cast<Index>(std::llround(cx / area));
  Index qy = static_cast<Index>(std::llround(cy / area));
  qx = std::clamp<Index>(qx, 1, w);
  qy = std::clamp<Index>(qy, 1, h);
  double total = double(h * w);
  double w1 = double(qx * qy) / total;
  double w2 = double((w - qx) * qy) / total;
  double w3 = double(qx * (h - qy)) / total;
  double w4 = 1.0 - w1 - w2 - w3;
  double s_region = w1 * region_ssim(pred, gt, 0, qy, 0, qx) + w2 * region_ssim(pred, gt, 0, qy, qx, w) +
                    w3 * region_ssim(pred, gt, qy, h, 0, qx) + w4 * region_ssim(pred, gt, qy, h, qx, w);

  return clamp01(alpha * s_object + (1.0 - alpha) * s_region);
}

// ---------------------------------------------------------------------------
// Enhanced-alignment measure. The prediction is adaptively binarized at
// min(2*mean, 1) (with a tiny floor so an all-zero prediction stays empty)
// before the alignment term is computed.
// ---------------------------------------------------------------------------

template <typename S>
double e_measure(const Tensor<S>& pred, const Tensor<S>& gt) {
  using namespace metric_detail;
  check_pair(pred, gt);
  Index n = pred.numel();
  double thr = std::max(std::min(2.0 * mean_of(pred), 1.0), kEps);
  std::vector<double> bin(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) bin[static_cast<std::size_t>(i)] = double(pred[i]) >= thr ? 1.0 : 0.0;

  double gsum = 0, bsum = 0;
  for (Index i = 0; i < n; ++i) {
    gsum += double(gt[i]);
    bsum += bin[static_cast<std::size_t>(i)];
  }
  double score = 0;
  if (gsum == 0.0) {
    score = 1.0 - bsum / double(n);
  } else if (gsum == double(n)) {
    score = bsum / double(n);
  } else {
    double mu_b = bsum / double(n), mu_g = gsum / double(n);
    double acc = 0;
    for (Index i = 0; i < n; ++i) {
      double pb = bin[static_cast<std::size_t>(i)] - mu_b;
      double pg = double(gt[i]) - mu_g;
      double align = 2.0 * pg * pb / (pg * pg + pb * pb + kEps);
      acc += (align + 1.0) * (align + 1.0) / 4.0;
    }
    score = acc / double(n);
  }
  return clamp01(score);
}

// ---------------------------------------------------------------------------
// Weighted F-measure: errors are dependency-weighted by a Gaussian-smoothed
// error field on the foreground and a distance-decay factor on the
// background. Returns 0 for an empty ground truth (callers flag the record).
// ---------------------------------------------------------------------------

template <typename S>
double weighted_f(const Tensor<S>& pred, const Tensor<S>& gt, double beta2 = 1.0) {
  using namespace metric_detail;
  check_pair(pred, gt);
  Index h = gt.dim(0), w = gt.dim(1), n = h * w;
  std::vector<char> fg(static_cast<std::size_t>(n));
  double gsum = 0;
  for (Index i = 0; i < n; ++i) {
    fg[static_cast<std::size_t>(i)] = gt[i] == S(1);
    gsum += double(gt[i]);
  }
  if (gsum == 0.0) return 0.0;

  std::vector<double> dist2;
  std::vector<Index> nearest;
  distance_transform(fg, h, w, dist2, nearest);

  std::vector<double> err(static_cast<std::size_t>(n)), errt(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) err[static_cast<std::size_t>(i)] = std::abs(double(pred[i]) - double(gt[i]));
  for (Index i = 0; i < n; ++i)
    errt[static_cast<std::size_t>(i)] =
        fg[static_cast<std::size_t>(i)] ? err[static_cast<std::size_t>(i)]
                                        : err[static_cast<std::size_t>(nearest[static_cast<std::size_t>(i)])];

  // 7x7 Gaussian, sigma 5, zero-padded
  const Index k = 7, r = 3;
  double kern[k][k];
  double ksum = 0;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      double dy = double(i - r), dx = double(j - r);
      kern[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 25.0));
      ksum += kern[i][j];
    }
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) kern[i][j] /= ksum;

  // Gaussian smoothing renormalized at the borders (windows truncated by the
  // image keep unit mass, so a constant field smooths to itself).
  std::vector<double> ea(static_cast<std::size_t>(n), 0.0);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double acc = 0, mass = 0;
      for (Index i = 0; i < k; ++i) {
        Index yy = y + i - r;
        if (yy < 0 || yy >= h) continue;
        for (Index j = 0; j < k; ++j) {
          Index xx = x + j - r;
          if (xx < 0 || xx >= w) continue;
          acc += kern[i][j] * errt[static_cast<std::size_t>(yy * w + xx)];
          mass += kern[i][j];
        }
      }
      ea[static_cast<std::size_t>(y * w + x)] = acc / mass;
    }

  const double decay = std::log(0.5) / 5.0;
  double ew_fg = 0, ew_bg = 0;
  for (Index i = 0; i < n; ++i) {
    double min_e = err[static_cast<std::size_t>(i)];
    if (fg[static_cast<std::size_t>(i)] && ea[static_cast<std::size_t>(i)] < min_e)
      min_e = ea[static_cast<std::size_t>(i)];
    if (fg[static_cast<std::size_t>(i)]) {
      ew_fg += min_e;  // importance weight is 1 on the foreground
    } else {
      double b = 2.0 - std::exp(decay * std::sqrt(dist2[static_cast<std::size_t>(i)]));
      ew_bg += min_e * b;
    }
  }
  double tpw = gsum - ew_fg;
  double fpw = ew_bg;
  double recall = 1.0 - ew_fg / gsum;
  double precision = tpw / (kEps + tpw + fpw);
  double f = (1.0 + beta2) * precision * recall / (kEps + beta2 * precision + recall);
  return metric_detail::clamp01(f);
}

// ---------------------------------------------------------------------------
// Region metrics at a fixed threshold.
// ---------------------------------------------------------------------------

struct RegionMetrics {
  double dice = 0, iou = 0, f1 = 0, acc = 0;
  bool flagged = false;  // set for the empty-gt + empty-pred convention
};

template <typename S>
RegionMetrics region_metrics(const Tensor<S>& pred, const Tensor<S>& gt, double threshold = 0.5) {
  metric_detail::check_pair(pred, gt);
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (Index i = 0; i < pred.numel(); ++i) {
    bool p = double(pred[i]) >= threshold;
    bool g = gt[i] == S(1);
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
    tn += !p && !g;
  }
  RegionMetrics m;
  m.acc = (tp + tn) / double(pred.numel());
  if (tp + fp + fn == 0) {
    m.dice = m.iou = m.f1 = 1.0;  // both empty
    m.flagged = true;
  } else {
    m.dice = 2.0 * tp / (2.0 * tp + fp + fn);
    m.iou = tp / (tp + fp + fn);
    m.f1 = m.dice;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Per-image report
// ---------------------------------------------------------------------------

struct MetricRecord {
  std::string image_id;
  double s_alpha = 0, e_phi = 0, f_w_beta = 0, mae = 0, dice = 0, iou = 0, f1 = 0, acc = 0;
  bool flagged = false;
  std::string flag_reason;
};

struct MetricReport {
  std::vector<MetricRecord> per_image;

  MetricRecord aggregate() const {
    MetricRecord a;
    a.image_id = "AGGREGATE";
    if (per_image.empty()) return a;
    for (const auto& r : per_image) {
      a.s_alpha += r.s_alpha;
      a.e_phi += r.e_phi;
      a.f_w_beta += r.f_w_beta;
      a.mae += r.mae;
      a.dice += r.dice;
      a.iou += r.iou;
      a.f1 += r.f1;
      a.acc += r.acc;
    }
    double n = double(per_image.size());
    a.s_alpha /= n;
    a.e_phi /= n;
    a.f_w_beta /= n;
    a.mae /= n;
    a.dice /= n;
    a.iou /= n;
    a.f1 /= n;
    a.acc /= n;
    return a;
  }

  static void write_row(std::ostream& os, const MetricRecord& r) {
    os << r.image_id << std::setprecision(6) << std::fixed << "," << r.s_alpha << "," << r.e_phi << ","
       << r.f_w_beta << "," << r.mae << "," << r.dice << "," << r.iou << "," << r.f1 << "," << r.acc
       << "\n";
  }

  void write_csv(std::ostream& os) const {
    os << "image_id,s_alpha,e_phi,f_w_beta,mae,dice,iou,f1,acc\n";
    for (const auto& r : per_image) write_row(os, r);
    write_row(os, aggregate());
  }

  std::string summary() const {
    MetricRecord a = aggregate();
    std::ostringstream os;
    os << std::setprecision(4) << std::fixed;
    os << "images: " << per_image.size() << "\n"
       << "S_alpha:  " << a.s_alpha << "\n"
       << "E_phi:    " << a.e_phi << "\n"
       << "F_w_beta: " << a.f_w_beta << "\n"
       << "MAE:      " << a.mae << "\n"
       << "Dice:     " << a.dice << "\n"
       << "IoU:      " << a.iou << "\n"
       << "F1:       " << a.f1 << "\n"
       << "Acc:      " << a.acc << "\n";
    int flagged = 0;
    for (const auto& r : per_image) flagged += r.flagged;
    if (flagged) os << "flagged:  " << flagged << " record(s)\n";
    return os.str();
  }
};

// Compute every metric for one image. Out-of-range predictions are min-max
// normalized per image first; in-range maps are used as-is.
template <typename S>
MetricRecord compute_metrics(const Tensor<S>& pred_in, const Tensor<S>& gt, const std::string& image_id) {
  Tensor<S> pred = pred_in.clone();
  S lo = pred.array().minCoeff(), hi = pred.array().maxCoeff();
  if (lo < S(0) || hi > S(1)) {
    if (hi > lo)
      pred.array() = (pred.array() - lo) / (hi - lo);
    else
      pred.array().setConstant(S(0.5));
  }
  MetricRecord r;
  r.image_id = image_id;
  r.mae = mae(pred, gt);
  r.s_alpha = s_measure(pred, gt);
  r.e_phi = e_measure(pred, gt);
  double gsum = gt.array().template cast<double>().sum();
  r.f_w_beta = weighted_f(pred, gt);
  if (gsum == 0.0) {
    r.flagged = true;
    r.flag_reason = "empty ground truth";
  }
  RegionMetrics rm = region_metrics(pred, gt);
  r.dice = rm.dice;
  r.iou = rm.iou;
  r.f1 = rm.f1;
  r.acc = rm.acc;
  if (rm.flagged) {
    r.flagged = true;
    r.flag_reason = r.flag_reason.empty() ? "empty prediction and ground truth" : r.flag_reason;
  }
  return r;
}

}  // namespace dad

#endif  // DAD_METRICS_HPP
