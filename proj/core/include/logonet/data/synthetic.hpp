#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "logonet/data/manifest.hpp"

namespace logonet {

// Glyph alphabet: 8 shapes x 8 hues. Glyph g has shape g % 8 and hue
// (g + 3 * (g / 8)) % 8, so any 8 consecutive glyphs differ in both.
inline constexpr int kGlyphCount = 64;
std::string glyph_name(int glyph);

struct SyntheticConfig {
  int num_classes = 8;
  // Class c renders glyph class_offset + c; a proxy task uses a disjoint
  // offset.
  int class_offset = 0;
  int train_per_class = 40;
  int test_per_class = 20;
  int train_background = 0;
  int test_background = 0;
  int image_size = 128;
  // Glyph side as a fraction of the image side.
  double scale_min = 0.05;
  double scale_max = 0.8;
  uint64_t texture_seed = 0;
  // Std-dev of additive pixel noise, in [0, 1] intensity units.
  double noise = 0.02;

  void validate() const;
};

struct SyntheticDataset {
  Manifest trainval;
  Manifest test;
};

// Renders the dataset under `out_dir` (images/<id>.ppm, trainval.jsonl,
// test.jsonl, classes.txt) and returns the manifests.
SyntheticDataset generate_synthetic(const SyntheticConfig& config, uint64_t seed,
                                    const std::filesystem::path& out_dir);

struct RenderedImage {
  Tensor pixels;  // (1, 3, size, size)
  BBox box;       // tight bounds of the glyph pixels; w = h = 0 if none
  Tensor mask;    // (1, 1, size, size), 1 where glyph pixels were drawn
};
// One image; glyph < 0 renders background only.
RenderedImage render_synthetic(int glyph, double scale, int size, uint64_t seed,
                               double noise, uint64_t texture_seed = 0);

}  // namespace logonet
