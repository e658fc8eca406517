#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "logonet/tensor.hpp"

namespace logonet {

inline constexpr int kNoLogo = -1;

// Pixel rectangle with top-left (x, y) and extents (w, h), tagged with a
// class. Detection code uses the same struct with class_id = -1 for
// class-agnostic rectangles.
struct BBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;
  int class_id = -1;

  double area() const { return w * h; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

// Scales a box by the factors that map a (src_w, src_h) image to
// (dst_w, dst_h).
BBox scale_box(const BBox& box, int64_t src_w, int64_t src_h, int64_t dst_w, int64_t dst_h);

struct ImageRecord {
  std::string id;
  std::filesystem::path path;
  int label = kNoLogo;
  std::vector<BBox> boxes;
  // Pixel size when known from the manifest or a header scan; 0 otherwise.
  int64_t width = 0;
  int64_t height = 0;

  bool foreground() const { return label != kNoLogo; }
};

struct SplitCounts {
  int64_t foreground = 0;
  int64_t background = 0;
};

struct Manifest {
  std::string split;  // "trainval" or "test"
  std::vector<std::string> classes;
  std::vector<ImageRecord> records;

  int64_t num_classes() const { return static_cast<int64_t>(classes.size()); }
  // Index used for the "no logo" class in detection nets.
  int background_class() const { return static_cast<int>(classes.size()); }
  SplitCounts counts() const;
  Manifest foreground_only() const;
  // Throws DataError on duplicate paths/ids, duplicate class names, labels
  // out of range, foreground records without boxes, boxes whose class
  // differs from the record's, background records with boxes, or
  // non-positive box extents.
  void validate() const;
};

// Decodes a record's image.
Tensor load_pixels(const ImageRecord& record);

// JSON lines, one record per line:
//   {"path": "...", "label": 3, "boxes": [[x, y, w, h, class], ...]}
// Optional "id", "width" and "height" keys are written and read when present.
// Class names live in a "classes.txt" file next to the manifest. Relative
// paths are resolved against the manifest's directory.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);
std::vector<std::string> read_class_table(const std::filesystem::path& path);
void write_class_table(const std::vector<std::string>& classes,
                       const std::filesystem::path& path);

// Throws DataError if the two manifests share an id.
void check_disjoint(const Manifest& a, const Manifest& b);

}  // namespace logonet
