#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>

#include "logonet/tensor.hpp"

namespace logonet {

// Binary PPM (P6, maxval 255) <-> (1, 3, h, w) tensor with values in [0, 1].
Tensor decode_image(const std::filesystem::path& path);
// Values are clamped to [0, 1] and quantized to round(255 * v).
void encode_image(const Tensor& image, const std::filesystem::path& path);

struct ImageSize {
  int64_t width = 0;
  int64_t height = 0;
};
// Reads only the header. Understands PPM and baseline/progressive JPEG.
ImageSize read_image_size(const std::filesystem::path& path);

// Per-channel mean of a (n, 3, h, w) tensor, over all samples.
std::array<double, 3> channel_means(const Tensor& images);

// Bilinear resize to (height, width) then per-channel mean subtraction.
Tensor preprocess(const Tensor& image, int64_t height, int64_t width,
                  std::span<const double> mean);

}  // namespace logonet
