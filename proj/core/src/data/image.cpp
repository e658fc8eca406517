#include "logonet/data/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "logonet/error.hpp"
#include "logonet/kernels.hpp"

namespace logonet {
namespace {

struct PpmHeader {
  int64_t width = 0;
  int64_t height = 0;
  size_t data_offset = 0;
};

PpmHeader parse_ppm_header(const std::string& bytes, const std::string& source) {
  if (bytes.size() < 2 || bytes[0] != 'P') {
    throw FormatError("'" + source + "' is not a PPM file");
  }
  if (bytes[1] != '6') {
    throw FormatError("'" + source + "' is a P" + std::string(1, bytes[1]) +
                      " file; only binary RGB (P6) is supported");
  }
  size_t pos = 2;
  auto next_int = [&]() -> int64_t {
    while (pos < bytes.size()) {
      const char ch = bytes[pos];
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos;
      } else {
        break;
      }
    }
    int64_t value = 0;
    const size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + (bytes[pos] - '0');
      if (value > (int64_t{1} << 31)) throw FormatError("'" + source + "' header value too large");
      ++pos;
    }
    if (pos == start) throw FormatError("'" + source + "' has a malformed PPM header");
    return value;
  };
  PpmHeader h;
  h.width = next_int();
  h.height = next_int();
  const int64_t maxval = next_int();
  if (maxval != 255) {
    throw FormatError("'" + source + "' has maxval " + std::to_string(maxval) + "; expected 255");
  }
  if (h.width < 1 || h.height < 1) throw FormatError("'" + source + "' has an empty image");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw FormatError("'" + source + "' has a malformed PPM header");
  }
  h.data_offset = pos + 1;
  return h;
}

std::string read_file(const std::filesystem::path& path, size_t limit = 0) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  if (limit == 0) {
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }
  std::string out(limit, '\0');
  in.read(out.data(), static_cast<std::streamsize>(limit));
  out.resize(static_cast<size_t>(in.gcount()));
  return out;
}

ImageSize jpeg_size(const std::string& bytes, const std::string& source) {
  auto byte = [&](size_t i) -> unsigned {
    if (i >= bytes.size()) throw FormatError("'" + source + "' is a truncated JPEG");
    return static_cast<unsigned char>(bytes[i]);
  };
  size_t pos = 2;
  while (true) {
    while (byte(pos) != 0xFF) ++pos;
    while (byte(pos) == 0xFF) ++pos;
    const unsigned marker = byte(pos++);
    if (marker == 0xD8 || (marker >= 0xD0 && marker <= 0xD7) || marker == 0x01) continue;
    if (marker == 0xD9 || marker == 0xDA) break;
    const size_t length = (byte(pos) << 8) | byte(pos + 1);
    const bool sof = marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 &&
                     marker != 0xCC;
    if (sof) {
      ImageSize s;
      s.height = (byte(pos + 3) << 8) | byte(pos + 4);
      s.width = (byte(pos + 5) << 8) | byte(pos + 6);
      return s;
    }
    pos += length;
  }
  throw FormatError("'" + source + "' has no JPEG frame header");
}

}  // namespace

Tensor decode_image(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const PpmHeader h = parse_ppm_header(bytes, path.string());
  const size_t need = static_cast<size_t>(h.width * h.height * 3);
  if (bytes.size() - h.data_offset < need) {
    throw FormatError("'" + path.string() + "' is truncated: expected " + std::to_string(need) +
                      " pixel bytes, found " + std::to_string(bytes.size() - h.data_offset));
  }
  Tensor out({1, 3, h.height, h.width});
  const int64_t plane = h.width * h.height;
  const auto* px = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (int64_t i = 0; i < plane; ++i) {
    for (int64_t c = 0; c < 3; ++c) out[c * plane + i] = px[i * 3 + c] / 255.0;
  }
  return out;
}

void encode_image(const Tensor& image, const std::filesystem::path& path) {
  const Shape& s = image.shape();
  if (s.n != 1 || s.c != 3) {
    throw DimensionError("encode_image expects a (1, 3, h, w) tensor, got " + to_string(s));
  }
  const int64_t plane = s.plane();
  std::string out = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  const size_t header = out.size();
  out.resize(header + static_cast<size_t>(plane * 3));
  for (int64_t i = 0; i < plane; ++i) {
    for (int64_t c = 0; c < 3; ++c) {
      const double v = std::clamp(image[c * plane + i], 0.0, 1.0);
      out[header + static_cast<size_t>(i * 3 + c)] =
          static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

ImageSize read_image_size(const std::filesystem::path& path) {
  const std::string head = read_file(path, 1 << 16);
  if (head.size() >= 2 && static_cast<unsigned char>(head[0]) == 0xFF &&
      static_cast<unsigned char>(head[1]) == 0xD8) {
    try {
      return jpeg_size(head, path.string());
    } catch (const FormatError&) {
      return jpeg_size(read_file(path), path.string());
    }
  }
  const PpmHeader h = parse_ppm_header(head, path.string());
  return {h.width, h.height};
}

std::array<double, 3> channel_means(const Tensor& images) {
  const Shape& s = images.shape();
  if (s.c != 3) throw DimensionError("channel_means expects 3 channels, got " + to_string(s));
  std::array<double, 3> mean{};
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t c = 0; c < 3; ++c) {
      const double* p = images.ptr() + (n * 3 + c) * s.plane();
      double acc = 0.0;
      for (int64_t i = 0; i < s.plane(); ++i) acc += p[i];
      mean[static_cast<size_t>(c)] += acc;
    }
  }
  for (double& m : mean) m /= static_cast<double>(s.n * s.plane());
  return mean;
}

Tensor preprocess(const Tensor& image, int64_t height, int64_t width,
                  std::span<const double> mean) {
  if (height < 8 || width < 8) {
    throw ParameterError("preprocess target must be at least 8x8, got " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  const Shape& s = image.shape();
  if (static_cast<int64_t>(mean.size()) != s.c) {
    throw DimensionError("preprocess: " + std::to_string(mean.size()) + " channel means for " +
                         to_string(s));
  }
  Tensor out = kernels::bilinear_resize(image, height, width);
  const int64_t plane = height * width;
  for (int64_t n = 0; n < s.n; ++n) {
    for (int64_t c = 0; c < s.c; ++c) {
      double* p = out.ptr() + (n * s.c + c) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] -= mean[static_cast<size_t>(c)];
    }
  }
  return out;
}

}  // namespace logonet
