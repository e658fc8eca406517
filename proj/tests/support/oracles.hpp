#pragma once

// Reference implementations written independently of the library, used as
// test oracles. They favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "logonet/detection/box.hpp"
#include "logonet/rng.hpp"
#include "logonet/tensor.hpp"

namespace logonet::oracle {

inline Tensor random_tensor(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Cross-correlation by definition: out[n][k][y][x] = b[k] +
// sum_{c,i,j} in[n][c][y*s+i-p][x*s+j-p] * w[k][c][i][j].
inline Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor& b, int stride, int pad) {
  const Shape& s = in.shape();
  const Shape& ws = w.shape();
  const int64_t oh = (s.h + 2 * pad - ws.h) / stride + 1;
  const int64_t ow = (s.w + 2 * pad - ws.w) / stride + 1;
  Tensor out({s.n, ws.n, oh, ow});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t k = 0; k < ws.n; ++k)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
          double acc = b.empty() ? 0.0 : b[k];
          for (int64_t c = 0; c < s.c; ++c)
            for (int64_t i = 0; i < ws.h; ++i)
              for (int64_t j = 0; j < ws.w; ++j) {
                const int64_t yy = y * stride + i - pad;
                const int64_t xx = x * stride + j - pad;
                if (yy < 0 || xx < 0 || yy >= s.h || xx >= s.w) continue;
                acc += in.at(n, c, yy, xx) * w.at(k, c, i, j);
              }
          out.at(n, k, y, x) = acc;
        }
  return out;
}

// Align-corners bilinear sampling of one plane, coded from the textbook
// formula: source coordinate = dst * (src - 1) / (dst - 1).
inline double bilinear_sample(const Tensor& t, int64_t n, int64_t c, double y, double x) {
  const int64_t h = t.shape().h, w = t.shape().w;
  const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(std::floor(y)), h - 1);
  const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(std::floor(x)), w - 1);
  const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
  const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
  const double fy = y - static_cast<double>(y0), fx = x - static_cast<double>(x0);
  const double top = t.at(n, c, y0, x0) * (1 - fx) + t.at(n, c, y0, x1) * fx;
  const double bot = t.at(n, c, y1, x0) * (1 - fx) + t.at(n, c, y1, x1) * fx;
  return top * (1 - fy) + bot * fy;
}

inline Tensor bilinear_resize(const Tensor& in, int64_t nh, int64_t nw) {
  const Shape& s = in.shape();
  Tensor out({s.n, s.c, nh, nw});
  for (int64_t n = 0; n < s.n; ++n)
    for (int64_t c = 0; c < s.c; ++c)
      for (int64_t y = 0; y < nh; ++y)
        for (int64_t x = 0; x < nw; ++x) {
          const double sy = nh == 1 ? 0.0 : static_cast<double>(y) * (s.h - 1) / (nh - 1);
          const double sx = nw == 1 ? 0.0 : static_cast<double>(x) * (s.w - 1) / (nw - 1);
          out.at(n, c, y, x) = bilinear_sample(in, n, c, sy, sx);
        }
  return out;
}

// Max over every cell of each adaptive bin, enumerated directly.
inline Tensor roi_pool(const Tensor& f, int64_t batch, int64_t x0, int64_t y0, int64_t x1,
                       int64_t y1, int gh, int gw) {
  const int64_t H = y1 - y0, W = x1 - x0;
  Tensor out({1, f.shape().c, gh, gw});
  for (int64_t c = 0; c < f.shape().c; ++c)
    for (int i = 0; i < gh; ++i)
      for (int j = 0; j < gw; ++j) {
        const int64_t ys = y0 + (i * H) / gh;
        const int64_t ye = y0 + ((i + 1) * H + gh - 1) / gh;
        const int64_t xs = x0 + (j * W) / gw;
        const int64_t xe = x0 + ((j + 1) * W + gw - 1) / gw;
        double best = -INFINITY;
        for (int64_t y = ys; y < ye; ++y)
          for (int64_t x = xs; x < xe; ++x) best = std::max(best, f.at(batch, c, y, x));
        out.at(0, c, i, j) = best;
      }
  return out;
}

inline double rect_iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

// All-threshold AP: for every distinct score s (descending), the detections
// with score >= s are kept, matched greedily in rank order, and precision
// and recall measured from scratch. AP integrates the interpolated
// precision envelope over the recall steps.
struct PR {
  double recall;
  double precision;
};

inline std::vector<PR> brute_force_pr(const std::vector<std::pair<double, bool>>& ranked_tp,
                                      int64_t positives) {
  std::set<double, std::greater<>> thresholds;
  for (const auto& [s, tp] : ranked_tp) thresholds.insert(s);
  std::vector<PR> out;
  for (double t : thresholds) {
    int64_t kept = 0, tps = 0;
    for (const auto& [s, tp] : ranked_tp) {
      if (s >= t) {
        ++kept;
        tps += tp ? 1 : 0;
      }
    }
    out.push_back({static_cast<double>(tps) / static_cast<double>(positives),
                   static_cast<double>(tps) / static_cast<double>(kept)});
  }
  return out;
}

inline double ap_from_pr(const std::vector<PR>& pr) {
  double ap = 0.0, prev = 0.0;
  for (size_t i = 0; i < pr.size(); ++i) {
    double best = 0.0;
    for (size_t j = i; j < pr.size(); ++j) best = std::max(best, pr[j].precision);
    ap += (pr[i].recall - prev) * best;
    prev = pr[i].recall;
  }
  return ap;
}

// Localized AP by brute force. Ranking: score desc, image id, x, y, w, h.
// At each threshold the kept prefix is re-matched from scratch.
inline double brute_force_ap(std::vector<Detection> dets,
                             const std::vector<std::pair<std::string, BBox>>& gt,
                             double iou_threshold) {
  if (gt.empty()) return NAN;
  std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    return std::make_tuple(-a.score, a.image, a.rect.x, a.rect.y, a.rect.w, a.rect.h) <
           std::make_tuple(-b.score, b.image, b.rect.x, b.rect.y, b.rect.w, b.rect.h);
  });
  std::set<double, std::greater<>> thresholds;
  for (const Detection& d : dets) thresholds.insert(d.score);
  std::vector<PR> pr;
  for (double t : thresholds) {
    std::vector<bool> used(gt.size(), false);
    int64_t kept = 0, tps = 0;
    for (const Detection& d : dets) {
      if (d.score < t) continue;
      ++kept;
      int best = -1;
      double best_iou = -1.0;
      for (size_t g = 0; g < gt.size(); ++g) {
        if (used[g] || gt[g].first != d.image) continue;
        if (d.rect.w <= 0 || d.rect.h <= 0) continue;
        const double o = rect_iou(d.rect, gt[g].second);
        if (o >= iou_threshold && o > best_iou) {
          best = static_cast<int>(g);
          best_iou = o;
        }
      }
      if (best >= 0) {
        used[static_cast<size_t>(best)] = true;
        ++tps;
      }
    }
    pr.push_back({static_cast<double>(tps) / static_cast<double>(gt.size()),
                  static_cast<double>(tps) / static_cast<double>(kept)});
  }
  return ap_from_pr(pr);
}

// Type-7 quantile computed from the definition h = (n - 1) p.
inline double quantile7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace logonet::oracle
