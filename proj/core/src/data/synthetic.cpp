#include "logonet/data/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "logonet/data/image.hpp"
#include "logonet/error.hpp"
#include "logonet/parallel.hpp"
#include "logonet/rng.hpp"

namespace fs = std::filesystem;

namespace logonet {
namespace {

constexpr const char* kShapeNames[8] = {"disk", "square", "triangle", "diamond",
                                        "cross", "ring",  "bars",     "ell"};
constexpr const char* kHueNames[8] = {"red",  "orange", "lime",   "green",
                                      "cyan", "azure",  "violet", "rose"};

int glyph_shape(int glyph) { return glyph % 8; }
int glyph_hue(int glyph) { return (glyph + 3 * (glyph / 8)) % 8; }

bool inside(int shape, double u, double v) {
  const double du = u - 0.5, dv = v - 0.5;
  switch (shape) {
    case 0: return du * du + dv * dv <= 0.25;
    case 1: return true;
    case 2: return std::abs(du) <= v / 2.0;
    case 3: return std::abs(du) + std::abs(dv) <= 0.5;
    case 4: return std::abs(du) <= 1.0 / 6.0 || std::abs(dv) <= 1.0 / 6.0;
    case 5: {
      const double r2 = du * du + dv * dv;
      return r2 <= 0.25 && r2 >= 0.09;
    }
    case 6: return static_cast<int>(v * 5.0) % 2 == 0;
    default: return u <= 1.0 / 3.0 || v >= 2.0 / 3.0;
  }
}

std::array<double, 3> hue_rgb(double hue_degrees, double value) {
  const double h = std::fmod(hue_degrees, 360.0) / 60.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  std::array<double, 3> rgb{};
  switch (static_cast<int>(h)) {
    case 0: rgb = {1, x, 0}; break;
    case 1: rgb = {x, 1, 0}; break;
    case 2: rgb = {0, 1, x}; break;
    case 3: rgb = {0, x, 1}; break;
    case 4: rgb = {x, 0, 1}; break;
    default: rgb = {1, 0, x}; break;
  }
  for (double& c : rgb) c *= value;
  return rgb;
}

std::string record_id(std::string_view split, size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*s_%06zu", static_cast<int>(split.size()), split.data(),
                index);
  return buf;
}

}  // namespace

std::string glyph_name(int glyph) {
  if (glyph < 0 || glyph >= kGlyphCount) {
    throw ParameterError("glyph " + std::to_string(glyph) + " outside the alphabet");
  }
  return std::string(kShapeNames[glyph_shape(glyph)]) + "-" + kHueNames[glyph_hue(glyph)];
}

void SyntheticConfig::validate() const {
  if (num_classes < 1 || class_offset < 0 || class_offset + num_classes > kGlyphCount) {
    throw ConfigError("synthetic classes [" + std::to_string(class_offset) + ", " +
                      std::to_string(class_offset + num_classes) + ") exceed the " +
                      std::to_string(kGlyphCount) + "-glyph alphabet");
  }
  if (train_per_class < 0 || test_per_class < 0 || train_background < 0 || test_background < 0) {
    throw ConfigError("synthetic image counts must be non-negative");
  }
  if (image_size < 16) throw ConfigError("synthetic image_size must be at least 16");
  if (!(scale_min > 0.0) || !(scale_max <= 1.0) || scale_min > scale_max) {
    throw ConfigError("synthetic scale range must satisfy 0 < min <= max <= 1");
  }
  if (!(noise >= 0.0) || noise > 1.0) throw ConfigError("synthetic noise must be in [0, 1]");
}

RenderedImage render_synthetic(int glyph, double scale, int size, uint64_t seed, double noise,
                               uint64_t texture_seed) {
  Rng rng(seed);
  Rng texture(Rng::derive(seed, texture_seed + 0x7e57));
  const int64_t plane = static_cast<int64_t>(size) * size;
  RenderedImage out{Tensor({1, 3, size, size}), {}, Tensor({1, 1, size, size})};

  // Low-saturation background: tinted gray with a gradient and two waves.
  const double base = texture.uniform(0.3, 0.7);
  std::array<double, 3> tint{};
  for (double& t : tint) t = texture.uniform(-0.05, 0.05);
  const double gx = texture.uniform(-0.15, 0.15), gy = texture.uniform(-0.15, 0.15);
  std::array<double, 2> freq{}, angle{}, phase{};
  for (int k = 0; k < 2; ++k) {
    freq[k] = texture.uniform(1.0, 6.0) * 2.0 * std::numbers::pi / size;
    angle[k] = texture.uniform(0.0, std::numbers::pi);
    phase[k] = texture.uniform(0.0, 2.0 * std::numbers::pi);
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      double g = base + gx * (x / double(size) - 0.5) + gy * (y / double(size) - 0.5);
      for (int k = 0; k < 2; ++k) {
        g += 0.06 * std::sin(freq[k] * (x * std::cos(angle[k]) + y * std::sin(angle[k])) +
                             phase[k]);
      }
      for (int c = 0; c < 3; ++c) out.pixels[c * plane + y * size + x] = g + tint[c];
    }
  }

  if (glyph >= 0) {
    if (glyph >= kGlyphCount) throw ParameterError("glyph outside the alphabet");
    const int side = std::clamp(static_cast<int>(std::lround(scale * size)), 2, size);
    const int x0 = static_cast<int>(rng.below(static_cast<uint64_t>(size - side + 1)));
    const int y0 = static_cast<int>(rng.below(static_cast<uint64_t>(size - side + 1)));
    const int rotation = static_cast<int>(rng.below(4));
    const auto color = hue_rgb(45.0 * glyph_hue(glyph), rng.uniform(0.8, 1.0));
    const int shape = glyph_shape(glyph);
    int bx0 = size, by0 = size, bx1 = -1, by1 = -1;
    for (int y = y0; y < y0 + side; ++y) {
      for (int x = x0; x < x0 + side; ++x) {
        const double a = (x - x0 + 0.5) / side, b = (y - y0 + 0.5) / side;
        double u = a, v = b;
        switch (rotation) {
          case 1: u = b; v = 1.0 - a; break;
          case 2: u = 1.0 - a; v = 1.0 - b; break;
          case 3: u = 1.0 - b; v = a; break;
          default: break;
        }
        if (!inside(shape, u, v)) continue;
        for (int c = 0; c < 3; ++c) out.pixels[c * plane + y * size + x] = color[c];
        out.mask[y * size + x] = 1.0;
        bx0 = std::min(bx0, x);
        by0 = std::min(by0, y);
        bx1 = std::max(bx1, x);
        by1 = std::max(by1, y);
      }
    }
    if (bx1 >= 0) out.box = {double(bx0), double(by0), double(bx1 - bx0 + 1),
                             double(by1 - by0 + 1), -1};
  }

  for (int64_t i = 0; i < out.pixels.size(); ++i) {
    double v = out.pixels[i];
    if (noise > 0.0) v += rng.normal(0.0, noise);
    out.pixels[i] = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  }
  return out;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, uint64_t seed,
                                    const fs::path& out_dir) {
  config.validate();
  std::vector<std::string> classes;
  for (int c = 0; c < config.num_classes; ++c) classes.push_back(glyph_name(config.class_offset + c));

  fs::create_directories(out_dir / "images");
  SyntheticDataset ds;
  const std::pair<Manifest*, std::pair<int, int>> splits[] = {
      {&ds.trainval, {config.train_per_class, config.train_background}},
      {&ds.test, {config.test_per_class, config.test_background}},
  };
  const char* names[] = {"trainval", "test"};
  for (int s = 0; s < 2; ++s) {
    Manifest& m = *splits[s].first;
    const auto [per_class, background] = splits[s].second;
    m.split = names[s];
    m.classes = classes;
    std::vector<int> labels;
    for (int c = 0; c < config.num_classes; ++c) labels.insert(labels.end(), per_class, c);
    labels.insert(labels.end(), background, kNoLogo);
    m.records.resize(labels.size());

    const uint64_t split_seed = Rng::derive(seed, static_cast<uint64_t>(s) + 1);
    parallel_for(static_cast<int64_t>(labels.size()), [&](int64_t i) {
      const size_t idx = static_cast<size_t>(i);
      const uint64_t image_seed = Rng::derive(split_seed, idx);
      Rng scale_rng(Rng::derive(image_seed, 1));
      const double scale = scale_rng.uniform(config.scale_min, config.scale_max);
      const int label = labels[idx];
      const int glyph = label == kNoLogo ? -1 : config.class_offset + label;
      RenderedImage img = render_synthetic(glyph, scale, config.image_size, image_seed,
                                           config.noise, config.texture_seed);
      ImageRecord& r = m.records[idx];
      r.id = record_id(names[s], idx);
      r.path = out_dir / "images" / (r.id + ".ppm");
      r.label = label;
      r.width = r.height = config.image_size;
      if (label != kNoLogo) {
        img.box.class_id = label;
        r.boxes.push_back(img.box);
      }
      encode_image(img.pixels, r.path);
    });
    m.validate();
    write_manifest(m, out_dir / (std::string(names[s]) + ".jsonl"));
  }
  return ds;
}

}  // namespace logonet
