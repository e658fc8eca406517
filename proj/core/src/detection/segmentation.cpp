#include "logonet/detection/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "logonet/error.hpp"

namespace logonet {
namespace {

class DisjointSet {
 public:
  explicit DisjointSet(size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
    std::iota(parent_.begin(), parent_.end(), size_t{0});
  }
  size_t find(size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  // Joins two roots; the larger (then lower-index) root survives.
  size_t join(size_t a, size_t b, double weight) {
    if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    internal_[a] = std::max({internal_[a], internal_[b], weight});
    return a;
  }
  int64_t size(size_t root) const { return size_[root]; }
  double internal(size_t root) const { return internal_[root]; }

 private:
  std::vector<size_t> parent_;
  std::vector<int64_t> size_;
  std::vector<double> internal_;
};

Tensor smooth(const Tensor& image, double sigma) {
  if (sigma <= 0.0) return image;
  const int radius = static_cast<int>(std::ceil(sigma * 4.0));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[static_cast<size_t>(i + radius)];
  }
  for (double& k : kernel) k /= total;

  const Shape& s = image.shape();
  Tensor tmp(s), out(s);
  auto clampi = [](int64_t v, int64_t hi) { return std::clamp<int64_t>(v, 0, hi - 1); };
  for (int64_t c = 0; c < s.c; ++c) {
    for (int64_t y = 0; y < s.h; ++y) {
      for (int64_t x = 0; x < s.w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<size_t>(i + radius)] * image.at(0, c, y, clampi(x + i, s.w));
        }
        tmp.at(0, c, y, x) = acc;
      }
    }
    for (int64_t y = 0; y < s.h; ++y) {
      for (int64_t x = 0; x < s.w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[static_cast<size_t>(i + radius)] * tmp.at(0, c, clampi(y + i, s.h), x);
        }
        out.at(0, c, y, x) = acc;
      }
    }
  }
  return out;
}

struct Edge {
  double weight;
  size_t a;
  size_t b;
};

}  // namespace

Segmentation felzenszwalb_segment(const Tensor& image, const SegmentationOptions& options) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.h < 1 || s.w < 1) {
    throw DimensionError("felzenszwalb_segment expects a single (1, c, h, w) image, got " +
                         to_string(s));
  }
  if (!(options.k > 0.0)) throw ParameterError("segmentation scale k must be positive");
  if (options.min_size < 0) throw ParameterError("segmentation min_size must be >= 0");

  const Tensor img = smooth(image, options.sigma);
  const int64_t w = s.w, h = s.h;
  auto dist = [&](int64_t x0, int64_t y0, int64_t x1, int64_t y1) {
    double acc = 0.0;
    for (int64_t c = 0; c < s.c; ++c) {
      const double d = 255.0 * (img.at(0, c, y0, x0) - img.at(0, c, y1, x1));
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  std::vector<Edge> edges;
  edges.reserve(static_cast<size_t>(w * h * 4));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y * w + x);
      if (x + 1 < w) edges.push_back({dist(x, y, x + 1, y), p, p + 1});
      if (y + 1 < h) edges.push_back({dist(x, y, x, y + 1), p, p + static_cast<size_t>(w)});
      if (x + 1 < w && y + 1 < h) {
        edges.push_back({dist(x, y, x + 1, y + 1), p, p + static_cast<size_t>(w) + 1});
      }
      if (x + 1 < w && y > 0) {
        edges.push_back({dist(x, y, x + 1, y - 1), p, p - static_cast<size_t>(w) + 1});
      }
    }
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const Edge& a, const Edge& b) { return a.weight < b.weight; });

  DisjointSet sets(static_cast<size_t>(w * h));
  for (const Edge& e : edges) {
    const size_t a = sets.find(e.a), b = sets.find(e.b);
    if (a == b) continue;
    const double ta = sets.internal(a) + options.k / static_cast<double>(sets.size(a));
    const double tb = sets.internal(b) + options.k / static_cast<double>(sets.size(b));
    if (e.weight <= std::min(ta, tb)) sets.join(a, b, e.weight);
  }
  for (const Edge& e : edges) {
    const size_t a = sets.find(e.a), b = sets.find(e.b);
    if (a != b && (sets.size(a) < options.min_size || sets.size(b) < options.min_size)) {
      sets.join(a, b, e.weight);
    }
  }

  Segmentation seg;
  seg.width = w;
  seg.height = h;
  seg.labels.assign(static_cast<size_t>(w * h), -1);
  std::vector<int> root_label(static_cast<size_t>(w * h), -1);
  for (size_t p = 0; p < seg.labels.size(); ++p) {
    const size_t r = sets.find(p);
    if (root_label[r] < 0) root_label[r] = seg.count++;
    seg.labels[p] = root_label[r];
  }
  return seg;
}

}  // namespace logonet
