#include "logonet/detection/box.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "logonet/error.hpp"

namespace logonet {

double iou(const BBox& a, const BBox& b) {
  if (!(a.w > 0 && a.h > 0) || !(b.w > 0 && b.h > 0)) {
    throw ParameterError("iou of a rectangle with zero area");
  }
  const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double area_a = ((a.x + a.w) - a.x) * ((a.y + a.h) - a.y);
  const double area_b = ((b.x + b.w) - b.x) * ((b.y + b.h) - b.y);
  return std::min(1.0, inter / (area_a + area_b - inter));
}

BBox clamp_to_image(const BBox& box, int64_t width, int64_t height) {
  const double x0 = std::clamp(box.x, 0.0, static_cast<double>(width));
  const double y0 = std::clamp(box.y, 0.0, static_cast<double>(height));
  const double x1 = std::clamp(box.x + box.w, 0.0, static_cast<double>(width));
  const double y1 = std::clamp(box.y + box.h, 0.0, static_cast<double>(height));
  return {x0, y0, x1 - x0, y1 - y0, box.class_id};
}

std::array<double, 4> encode_offsets(const BBox& p, const BBox& t) {
  if (!(p.w > 0 && p.h > 0) || !(t.w > 0 && t.h > 0)) {
    throw ParameterError("regression offsets of a rectangle with zero area");
  }
  return {(t.x - p.x) / p.w, (t.y - p.y) / p.h, std::log(t.w / p.w), std::log(t.h / p.h)};
}

BBox decode_offsets(const BBox& p, const std::array<double, 4>& d) {
  return {p.x + d[0] * p.w, p.y + d[1] * p.h, p.w * std::exp(d[2]), p.h * std::exp(d[3]),
          p.class_id};
}

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::map<std::pair<std::string, int>, std::vector<const Detection*>> kept_by_class;
  std::vector<Detection> kept;
  for (const Detection& d : detections) {
    auto& same = kept_by_class[{d.image, d.rect.class_id}];
    const bool suppressed = std::any_of(same.begin(), same.end(), [&](const Detection* k) {
      return iou(k->rect, d.rect) >= iou_threshold;
    });
    if (suppressed) continue;
    same.push_back(&d);
    kept.push_back(d);
  }
  return kept;
}

}  // namespace logonet
