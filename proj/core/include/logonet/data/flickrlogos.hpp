#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "logonet/data/manifest.hpp"

namespace logonet {

struct FlickrLogos {
  Manifest trainval;
  Manifest test;
  std::vector<std::string> warnings;
};

// Expected split sizes of the real dataset.
inline constexpr SplitCounts kFlickrLogosTrainval{1280, 3000};
inline constexpr SplitCounts kFlickrLogosTest{960, 3000};

// Reads a FlickrLogos-32 style root:
//   classes/jpg/<class>/<image>           images ("no-logo" holds background)
//   classes/masks/<class>/<image>.bboxes.txt
//   trainvalset.txt (or trainset.txt + valset.txt) and testset.txt
// Split lists hold "class,image" lines or relative image paths. When an
// image has a .ppm sibling the record points at it. Boxes are clamped to the
// image. Count mismatches against the real dataset produce warnings.
FlickrLogos load_flickrlogos(const std::filesystem::path& root);

}  // namespace logonet
