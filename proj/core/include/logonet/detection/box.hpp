#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "logonet/data/manifest.hpp"

namespace logonet {

// Intersection over union of two rectangles (continuous areas). Throws
// ParameterError for a rectangle with zero or negative area.
double iou(const BBox& a, const BBox& b);

// Clips a rectangle to [0, width] x [0, height].
BBox clamp_to_image(const BBox& box, int64_t width, int64_t height);

// Regression targets of `target` relative to `proposal`:
//   tx = (x - xp) / wp, ty = (y - yp) / hp, tw = log(w / wp), th = log(h / hp)
std::array<double, 4> encode_offsets(const BBox& proposal, const BBox& target);
BBox decode_offsets(const BBox& proposal, const std::array<double, 4>& offsets);

struct Detection {
  std::string image;
  BBox rect;  // rect.class_id is the detected class
  double score = 0.0;
};

// Per-class greedy suppression: within each class, detections are visited by
// descending score (stable) and dropped when their IoU with an already kept
// detection is >= iou_threshold. Output is sorted by descending score.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

}  // namespace logonet
