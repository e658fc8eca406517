#pragma once

#include <cstdint>
#include <vector>

#include "logonet/tensor.hpp"

namespace logonet {

struct Segmentation {
  int64_t width = 0;
  int64_t height = 0;
  int count = 0;
  // Row-major label per pixel, contiguous from 0 in raster order of first
  // appearance.
  std::vector<int> labels;

  int at(int64_t x, int64_t y) const { return labels[static_cast<size_t>(y * width + x)]; }
};

struct SegmentationOptions {
  double k = 100.0;      // threshold scale; larger favours larger segments
  int64_t min_size = 20;  // components below this are merged into a neighbour
  double sigma = 0.8;    // Gaussian pre-smoothing; 0 disables
};

// Graph-based segmentation over the 8-connected pixel grid. Edge weights are
// Euclidean RGB distances on the 0-255 scale. Components merge when the
// connecting edge is no heavier than both internal differences plus k/|C|.
Segmentation felzenszwalb_segment(const Tensor& image, const SegmentationOptions& options = {});

}  // namespace logonet
