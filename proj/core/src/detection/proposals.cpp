#include "logonet/detection/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <tuple>

#include "logonet/error.hpp"

namespace logonet {
namespace {

constexpr int kColorBins = 25;
constexpr int kOrientations = 8;

struct Region {
  int64_t x0, y0, x1, y1;  // inclusive
  int64_t size = 0;
  std::vector<double> color;
  std::vector<double> texture;
};

void normalize(std::vector<double>& h) {
  double total = 0.0;
  for (double v : h) total += v;
  if (total > 0.0) {
    for (double& v : h) v /= total;
  }
}

double intersection(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += std::min(a[i], b[i]);
  return s;
}

std::vector<double> blend(const std::vector<double>& a, int64_t na, const std::vector<double>& b,
                          int64_t nb) {
  std::vector<double> out(a.size());
  const double total = static_cast<double>(na + nb);
  for (size_t i = 0; i < a.size(); ++i) out[i] = (a[i] * na + b[i] * nb) / total;
  return out;
}

}  // namespace

std::string_view to_string(ProposalSource source) {
  switch (source) {
    case ProposalSource::kWholeImage: return "whole_image";
    case ProposalSource::kSelectiveSearch: return "selective_search";
    case ProposalSource::kGroundTruth: return "ground_truth";
  }
  return "unknown";
}

std::vector<RegionProposal> whole_image_proposal(int64_t width, int64_t height) {
  if (width < 1 || height < 1) throw DimensionError("whole_image_proposal of an empty image");
  return {{BBox{0, 0, static_cast<double>(width), static_cast<double>(height), -1},
           ProposalSource::kWholeImage, 0}};
}

std::vector<RegionProposal> whole_image_proposal(const Tensor& image) {
  return whole_image_proposal(image.shape().w, image.shape().h);
}

SelectiveSearchResult selective_search_detailed(const Tensor& image,
                                                const SelectiveSearchOptions& options) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) {
    throw DimensionError("selective_search expects a (1, 3, h, w) image, got " + to_string(s));
  }
  if (s.h < 16 || s.w < 16) {
    throw ParameterError("selective_search needs an image of at least 16x16, got " +
                         std::to_string(s.w) + "x" + std::to_string(s.h));
  }
  const SimilarityWeights& wt = options.weights;
  const Segmentation seg = felzenszwalb_segment(image, options.segmentation);
  const int64_t W = s.w, H = s.h;
  const double image_size = static_cast<double>(W * H);

  std::vector<Region> regions(static_cast<size_t>(seg.count));
  for (Region& r : regions) {
    r.x0 = W;
    r.y0 = H;
    r.x1 = -1;
    r.y1 = -1;
    r.color.assign(3 * kColorBins, 0.0);
    r.texture.assign(3 * kOrientations, 0.0);
  }
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      Region& r = regions[static_cast<size_t>(seg.at(x, y))];
      r.x0 = std::min(r.x0, x);
      r.y0 = std::min(r.y0, y);
      r.x1 = std::max(r.x1, x);
      r.y1 = std::max(r.y1, y);
      r.size += 1;
      for (int64_t c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(0, c, y, x), 0.0, 1.0);
        const int bin = std::min(kColorBins - 1, static_cast<int>(v * kColorBins));
        r.color[static_cast<size_t>(c * kColorBins + bin)] += 1.0;
        const double gx = image.at(0, c, y, std::min(x + 1, W - 1)) -
                          image.at(0, c, y, std::max<int64_t>(x - 1, 0));
        const double gy = image.at(0, c, std::min(y + 1, H - 1), x) -
                          image.at(0, c, std::max<int64_t>(y - 1, 0), x);
        const double mag = std::hypot(gx, gy);
        if (mag > 0.0) {
          const double theta = std::atan2(gy, gx) + std::numbers::pi;
          const int o = static_cast<int>(theta / (2.0 * std::numbers::pi) * kOrientations) %
                        kOrientations;
          r.texture[static_cast<size_t>(c * kOrientations + o)] += mag;
        }
      }
    }
  }
  for (Region& r : regions) {
    normalize(r.color);
    normalize(r.texture);
  }

  std::vector<std::set<int>> neighbours(regions.size());
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      const int a = seg.at(x, y);
      const std::pair<int64_t, int64_t> offsets[] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
      for (auto [dx, dy] : offsets) {
        const int64_t nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
        const int b = seg.at(nx, ny);
        if (a != b) {
          neighbours[static_cast<size_t>(a)].insert(b);
          neighbours[static_cast<size_t>(b)].insert(a);
        }
      }
    }
  }

  auto similarity = [&](int i, int j) {
    const Region& a = regions[static_cast<size_t>(i)];
    const Region& b = regions[static_cast<size_t>(j)];
    const double bw = static_cast<double>(std::max(a.x1, b.x1) - std::min(a.x0, b.x0) + 1);
    const double bh = static_cast<double>(std::max(a.y1, b.y1) - std::min(a.y0, b.y0) + 1);
    const double joint = static_cast<double>(a.size + b.size);
    return wt.color * intersection(a.color, b.color) +
           wt.texture * intersection(a.texture, b.texture) +
           wt.size * (1.0 - joint / image_size) + wt.fill * (1.0 - (bw * bh - joint) / image_size);
  };

  std::map<std::pair<int, int>, double> pairs;
  for (size_t a = 0; a < neighbours.size(); ++a) {
    for (int b : neighbours[a]) {
      if (static_cast<int>(a) < b) pairs[{static_cast<int>(a), b}] = similarity(static_cast<int>(a), b);
    }
  }

  std::vector<int> level(regions.size(), 0);
  SelectiveSearchResult result;
  result.initial_segments = seg.count;
  while (!pairs.empty()) {
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [a, b] = best->first;
    const Region& ra = regions[static_cast<size_t>(a)];
    const Region& rb = regions[static_cast<size_t>(b)];
    Region merged{std::min(ra.x0, rb.x0), std::min(ra.y0, rb.y0), std::max(ra.x1, rb.x1),
                  std::max(ra.y1, rb.y1),   ra.size + rb.size,
                  blend(ra.color, ra.size, rb.color, rb.size),
                  blend(ra.texture, ra.size, rb.texture, rb.size)};
    const int id = static_cast<int>(regions.size());
    std::set<int> around;
    for (int n : neighbours[static_cast<size_t>(a)]) around.insert(n);
    for (int n : neighbours[static_cast<size_t>(b)]) around.insert(n);
    around.erase(a);
    around.erase(b);
    for (auto it = pairs.begin(); it != pairs.end();) {
      const auto [i, j] = it->first;
      it = (i == a || i == b || j == a || j == b) ? pairs.erase(it) : std::next(it);
    }
    regions.push_back(std::move(merged));
    neighbours.emplace_back();
    ++result.merges;
    level.push_back(result.merges);
    for (int n : around) {
      auto& nn = neighbours[static_cast<size_t>(n)];
      nn.erase(a);
      nn.erase(b);
      nn.insert(id);
      neighbours.back().insert(n);
      pairs[{n, id}] = similarity(n, id);
    }
    neighbours[static_cast<size_t>(a)].clear();
    neighbours[static_cast<size_t>(b)].clear();
  }

  // Emit in creation order, keeping the last occurrence of each rectangle.
  std::set<std::tuple<int64_t, int64_t, int64_t, int64_t>> seen;
  for (size_t i = regions.size(); i-- > 0;) {
    const Region& r = regions[i];
    if (!seen.insert({r.x0, r.y0, r.x1, r.y1}).second) continue;
    result.proposals.push_back({BBox{static_cast<double>(r.x0), static_cast<double>(r.y0),
                                     static_cast<double>(r.x1 - r.x0 + 1),
                                     static_cast<double>(r.y1 - r.y0 + 1), -1},
                                ProposalSource::kSelectiveSearch, level[i]});
  }
  std::reverse(result.proposals.begin(), result.proposals.end());
  return result;
}

std::vector<RegionProposal> selective_search(const Tensor& image,
                                             const SelectiveSearchOptions& options) {
  return selective_search_detailed(image, options).proposals;
}

}  // namespace logonet
