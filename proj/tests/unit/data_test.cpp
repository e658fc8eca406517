#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "logonet/data/flickrlogos.hpp"
#include "logonet/data/image.hpp"
#include "logonet/data/manifest.hpp"
#include "logonet/data/synthetic.hpp"
#include "logonet/error.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace logonet {
namespace {

namespace fs = std::filesystem;

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << bytes;
}

// ---- PPM codec -------------------------------------------------------------

TEST(ImageCodecTest, WhiteTwoByTwo) {
  const auto dir = fixture::scratch("codec_white");
  write_bytes(dir / "w.ppm", "P6\n2 2\n255\n" + std::string(12, '\xff'));
  const Tensor t = decode_image(dir / "w.ppm");
  EXPECT_EQ(t.shape(), (Shape{1, 3, 2, 2}));
  for (double v : t.data()) EXPECT_EQ(v, 1.0);
}

TEST(ImageCodecTest, RoundTripIsExactAfterQuantization) {
  const auto dir = fixture::scratch("codec_roundtrip");
  const Tensor img = oracle::random_tensor({1, 3, 7, 5}, 3, 0.0, 1.0);
  encode_image(img, dir / "a.ppm");
  const Tensor once = decode_image(dir / "a.ppm");
  for (int64_t i = 0; i < img.size(); ++i) {
    EXPECT_EQ(once[i], std::round(img[i] * 255.0) / 255.0);
  }
  encode_image(once, dir / "b.ppm");
  EXPECT_EQ(read_bytes(dir / "a.ppm"), read_bytes(dir / "b.ppm"));
  EXPECT_EQ(decode_image(dir / "b.ppm"), once);
  const ImageSize size = read_image_size(dir / "a.ppm");
  EXPECT_EQ(size.width, 5);
  EXPECT_EQ(size.height, 7);
}

TEST(ImageCodecTest, HeaderComments) {
  const auto dir = fixture::scratch("codec_comment");
  write_bytes(dir / "c.ppm", "P6\n# made by hand\n1 1\n255\n" + std::string("\x00\x80\xff", 3));
  const Tensor t = decode_image(dir / "c.ppm");
  EXPECT_EQ(t[0], 0.0);
  EXPECT_EQ(t[1], 128.0 / 255.0);
  EXPECT_EQ(t[2], 1.0);
}

TEST(ImageCodecTest, BadFilesAreFormatErrors) {
  const auto dir = fixture::scratch("codec_bad");
  write_bytes(dir / "gray.pgm", "P5\n2 2\n255\n" + std::string(4, '\x10'));
  EXPECT_THROW(decode_image(dir / "gray.pgm"), FormatError);
  write_bytes(dir / "short.ppm", "P6\n2 2\n255\n" + std::string(11, '\x10'));
  EXPECT_THROW(decode_image(dir / "short.ppm"), FormatError);
  write_bytes(dir / "deep.ppm", "P6\n1 1\n65535\n" + std::string(6, '\x10'));
  EXPECT_THROW(decode_image(dir / "deep.ppm"), FormatError);
  EXPECT_THROW(decode_image(dir / "missing.ppm"), IoError);
}

// ---- preprocess --------------------------------------------------------------

TEST(PreprocessTest, OwnMeanCentersChannels) {
  const Tensor img = oracle::random_tensor({1, 3, 9, 11}, 4, 0.0, 1.0);
  const std::array<double, 3> mean = channel_means(img);
  const Tensor out = preprocess(img, 9, 11, mean);
  const std::array<double, 3> centered = channel_means(out);
  for (double m : centered) EXPECT_NEAR(m, 0.0, 1e-10);
}

TEST(PreprocessTest, SameSizeIsIdentity) {
  const Tensor img = oracle::random_tensor({1, 3, 8, 8}, 5, 0.0, 1.0);
  const double zero[] = {0.0, 0.0, 0.0};
  EXPECT_EQ(preprocess(img, 8, 8, zero), img);
}

TEST(PreprocessTest, ResizeMatchesOracle) {
  const Tensor img = oracle::random_tensor({1, 3, 10, 14}, 6, 0.0, 1.0);
  const double mean[] = {0.25, 0.5, 0.75};
  const Tensor out = preprocess(img, 16, 12, mean);
  const Tensor want = oracle::bilinear_resize(img, 16, 12);
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < 16; ++y)
      for (int64_t x = 0; x < 12; ++x)
        EXPECT_NEAR(out.at(0, c, y, x), want.at(0, c, y, x) - mean[c], 1e-12);
}

TEST(PreprocessTest, BoxesScaleWithImage) {
  const BBox b{10, 20, 30, 40, 2};
  const BBox s = scale_box(b, 100, 200, 50, 100);
  EXPECT_EQ(s, (BBox{5, 10, 15, 20, 2}));
  const BBox t = scale_box(b, 100, 100, 300, 50);
  EXPECT_EQ(t, (BBox{30, 10, 90, 20, 2}));
}

// ---- manifest ------------------------------------------------------------------

Manifest sample_manifest(const fs::path& dir) {
  Manifest m;
  m.split = "trainval";
  m.classes = {"alpha", "beta"};
  encode_image(Tensor({1, 3, 4, 4}, 0.5), dir / "img" / "a.ppm");
  encode_image(Tensor({1, 3, 4, 4}, 0.25), dir / "img" / "b.ppm");
  encode_image(Tensor({1, 3, 4, 4}, 0.0), dir / "img" / "c.ppm");
  m.records = {{"a", dir / "img" / "a.ppm", 0, {{0, 0, 2, 2, 0}}, 4, 4},
               {"b", dir / "img" / "b.ppm", 1, {{1, 1, 2, 3, 1}, {0, 0, 1, 1, 1}}, 4, 4},
               {"c", dir / "img" / "c.ppm", kNoLogo, {}, 4, 4}};
  return m;
}

TEST(ManifestTest, JsonLinesRoundTrip) {
  const auto dir = fixture::scratch("manifest_roundtrip");
  fs::create_directories(dir / "img");
  const Manifest m = sample_manifest(dir);
  m.validate();
  write_manifest(m, dir / "trainval.jsonl");
  const Manifest back = read_manifest(dir / "trainval.jsonl");
  EXPECT_EQ(back.classes, m.classes);
  ASSERT_EQ(back.records.size(), 3u);
  for (size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.records[i].id, m.records[i].id);
    EXPECT_EQ(back.records[i].label, m.records[i].label);
    EXPECT_EQ(back.records[i].boxes, m.records[i].boxes);
    EXPECT_EQ(fs::canonical(back.records[i].path), fs::canonical(m.records[i].path));
  }
  EXPECT_EQ(back.counts().foreground, 2);
  EXPECT_EQ(back.counts().background, 1);
  EXPECT_EQ(back.foreground_only().records.size(), 2u);
  EXPECT_EQ(back.background_class(), 2);
  EXPECT_EQ(load_pixels(back.records[1]).at(0, 0, 0, 0), 64.0 / 255.0);
}

TEST(ManifestTest, ValidationRejectsBrokenRecords) {
  const auto dir = fixture::scratch("manifest_validate");
  fs::create_directories(dir / "img");
  const Manifest good = sample_manifest(dir);
  auto expect_bad = [&](const std::function<void(Manifest&)>& edit) {
    Manifest m = good;
    edit(m);
    EXPECT_THROW(m.validate(), DataError);
  };
  expect_bad([](Manifest& m) { m.records[1].path = m.records[0].path; });
  expect_bad([](Manifest& m) { m.records[1].id = "a"; });
  expect_bad([](Manifest& m) { m.classes[1] = "alpha"; });
  expect_bad([](Manifest& m) { m.records[0].label = 2; });
  expect_bad([](Manifest& m) { m.records[0].boxes.clear(); });
  expect_bad([](Manifest& m) { m.records[1].boxes[1].class_id = 0; });
  expect_bad([](Manifest& m) { m.records[2].boxes = {{0, 0, 1, 1, -1}}; });
  expect_bad([](Manifest& m) { m.records[0].boxes[0].w = 0; });
}

TEST(ManifestTest, MalformedLineIsFormatErrorWithLine) {
  const auto dir = fixture::scratch("manifest_malformed");
  write_bytes(dir / "classes.txt", "alpha\n");
  write_bytes(dir / "test.jsonl", "{\"path\": \"x.ppm\", \"label\": 0, \"boxes\": [[0,0,1,1,0]]}\n{oops\n");
  try {
    read_manifest(dir / "test.jsonl");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, DisjointCheck) {
  const auto dir = fixture::scratch("manifest_disjoint");
  fs::create_directories(dir / "img");
  Manifest a = sample_manifest(dir);
  Manifest b = a;
  b.split = "test";
  EXPECT_THROW(check_disjoint(a, b), DataError);
  for (ImageRecord& r : b.records) r.id += "_t";
  EXPECT_NO_THROW(check_disjoint(a, b));
}

// ---- FlickrLogos layout ------------------------------------------------------------

// classes/jpg/<class>/<n>.ppm with masks/<class>/<n>.ppm.bboxes.txt, three
// classes with two images each plus one background image.
fs::path flickr_fixture(const std::string& name) {
  const fs::path root = fixture::scratch(name);
  const char* classes[] = {"adidas", "apple", "bmw"};
  std::string trainval, test;
  for (const char* c : classes) {
    for (int i = 0; i < 2; ++i) {
      const std::string file = std::to_string(i) + ".ppm";
      encode_image(Tensor({1, 3, 16, 20}, 0.5), root / "classes" / "jpg" / c / file);
      // The second box pokes past the right and bottom edges.
      write_bytes(root / "classes" / "masks" / c / (file + ".bboxes.txt"),
                  "x y width height\n2 3 5 4\n15 12 10 10\n");
      (i == 0 ? trainval : test) += std::string(c) + "," + file + "\n";
    }
  }
  encode_image(Tensor({1, 3, 16, 20}, 0.1), root / "classes" / "jpg" / "no-logo" / "bg.ppm");
  trainval += "no-logo/bg.ppm\n";
  write_bytes(root / "trainvalset.txt", trainval);
  write_bytes(root / "testset.txt", test);
  return root;
}

TEST(FlickrLogosTest, CanonicalFixture) {
  const FlickrLogos data = load_flickrlogos(flickr_fixture("flickr_canonical"));
  EXPECT_EQ(data.trainval.classes, (std::vector<std::string>{"adidas", "apple", "bmw"}));
  EXPECT_EQ(data.trainval.counts().foreground + data.test.counts().foreground, 6);
  EXPECT_EQ(data.trainval.counts().background, 1);
  for (const Manifest* m : {&data.trainval, &data.test}) {
    for (const ImageRecord& r : m->records) {
      EXPECT_EQ(r.width, 20);
      EXPECT_EQ(r.height, 16);
      if (!r.foreground()) {
        EXPECT_TRUE(r.boxes.empty());
        continue;
      }
      ASSERT_EQ(r.boxes.size(), 2u);
      for (const BBox& b : r.boxes) {
        EXPECT_EQ(b.class_id, r.label);
        EXPECT_GE(b.x, 0);
        EXPECT_GE(b.y, 0);
        EXPECT_LE(b.x + b.w, 20);
        EXPECT_LE(b.y + b.h, 16);
      }
      EXPECT_EQ(r.boxes[0], (BBox{2, 3, 5, 4, r.label}));
      EXPECT_EQ(r.boxes[1], (BBox{15, 12, 5, 4, r.label}));
    }
  }
  // Real split sizes differ, which is reported rather than fatal.
  EXPECT_FALSE(data.warnings.empty());
}

TEST(FlickrLogosTest, MissingSplitListIsLayoutError) {
  const fs::path root = flickr_fixture("flickr_missing_list");
  fs::remove(root / "testset.txt");
  EXPECT_THROW(load_flickrlogos(root), LayoutError);
  EXPECT_THROW(load_flickrlogos(root / "nope"), LayoutError);
}

TEST(FlickrLogosTest, ZeroAreaBoxIsDataErrorWithFileAndLine) {
  const fs::path root = flickr_fixture("flickr_zero_area");
  const fs::path ann = root / "classes" / "masks" / "apple" / "1.ppm.bboxes.txt";
  write_bytes(ann, "x y width height\n1 1 4 4\n3 3 0 5\n");
  try {
    load_flickrlogos(root);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(ann.string() + ":3"), std::string::npos) << e.what();
  }
}

TEST(FlickrLogosTest, UnparsableLineIsDataError) {
  const fs::path root = flickr_fixture("flickr_garbage");
  write_bytes(root / "classes" / "masks" / "bmw" / "0.ppm.bboxes.txt", "x y width height\n1 2 three 4\n");
  EXPECT_THROW(load_flickrlogos(root), DataError);
}

// ---- synthetic ------------------------------------------------------------------

TEST(SyntheticTest, EightByFortyBookkeeping) {
  SyntheticConfig c = fixture::small_synthetic(8, 40, 2);
  c.scale_min = 0.05;
  c.test_background = 3;
  const SyntheticDataset& d = fixture::cached_synthetic("synth_8x40", c, 11);
  EXPECT_EQ(d.trainval.counts().foreground, 320);
  EXPECT_EQ(d.test.counts().background, 3);
  std::vector<int> per_class(8, 0);
  for (const ImageRecord& r : d.trainval.records) {
    ASSERT_EQ(r.boxes.size(), 1u);
    ++per_class[static_cast<size_t>(r.label)];
    const BBox& b = r.boxes[0];
    EXPECT_GT(b.w, 0);
    EXPECT_GT(b.h, 0);
    EXPECT_GE(b.x, 0);
    EXPECT_GE(b.y, 0);
    EXPECT_LE(b.x + b.w, c.image_size);
    EXPECT_LE(b.y + b.h, c.image_size);
  }
  EXPECT_EQ(per_class, std::vector<int>(8, 40));
  EXPECT_NO_THROW(check_disjoint(d.trainval, d.test));
  d.trainval.validate();
  d.test.validate();
}

TEST(SyntheticTest, FixedScaleBoxArea) {
  SyntheticConfig c = fixture::small_synthetic(8, 5, 5);
  c.image_size = 96;
  c.scale_min = c.scale_max = 0.5;
  const SyntheticDataset d = generate_synthetic(c, 12, fixture::scratch("synth_scale"));
  const double want = std::pow(0.5 * c.image_size, 2);
  for (const Manifest* m : {&d.trainval, &d.test}) {
    for (const ImageRecord& r : m->records) {
      EXPECT_NEAR(r.boxes[0].area(), want, 0.1 * want) << r.id;
    }
  }
}

TEST(SyntheticTest, SameSeedByteIdentical) {
  const SyntheticConfig c = fixture::small_synthetic(3, 2, 1);
  const SyntheticDataset a = generate_synthetic(c, 13, fixture::scratch("synth_det_a"));
  const SyntheticDataset b = generate_synthetic(c, 13, fixture::scratch("synth_det_b"));
  ASSERT_EQ(a.trainval.records.size(), b.trainval.records.size());
  for (size_t i = 0; i < a.trainval.records.size(); ++i) {
    EXPECT_EQ(read_bytes(a.trainval.records[i].path), read_bytes(b.trainval.records[i].path));
  }
  const SyntheticDataset other = generate_synthetic(c, 14, fixture::scratch("synth_det_c"));
  EXPECT_NE(read_bytes(a.trainval.records[0].path), read_bytes(other.trainval.records[0].path));
}

TEST(SyntheticTest, BoxIsTightToGlyph) {
  Rng rng(15);
  for (int i = 0; i < 40; ++i) {
    const int glyph = static_cast<int>(rng.below(kGlyphCount));
    const double scale = rng.uniform(0.05, 0.8);
    const RenderedImage img = render_synthetic(glyph, scale, 64, 100 + i, 0.02);
    int64_t x0 = 64, y0 = 64, x1 = -1, y1 = -1;
    for (int64_t y = 0; y < 64; ++y)
      for (int64_t x = 0; x < 64; ++x)
        if (img.mask.at(0, 0, y, x) > 0) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    ASSERT_GE(x1, 0) << "glyph " << glyph << " drew nothing";
    // Glyph pixels inside the box; box within the glyph bounds dilated by 2.
    EXPECT_LE(img.box.x, x0);
    EXPECT_LE(img.box.y, y0);
    EXPECT_GE(img.box.x + img.box.w, x1 + 1);
    EXPECT_GE(img.box.y + img.box.h, y1 + 1);
    EXPECT_GE(img.box.x, x0 - 2);
    EXPECT_GE(img.box.y, y0 - 2);
    EXPECT_LE(img.box.x + img.box.w, x1 + 1 + 2);
    EXPECT_LE(img.box.y + img.box.h, y1 + 1 + 2);
  }
  const RenderedImage bg = render_synthetic(-1, 0.5, 32, 1, 0.02);
  EXPECT_EQ(bg.box.w, 0);
  for (double v : bg.mask.data()) EXPECT_EQ(v, 0.0);
}

TEST(SyntheticTest, GlyphsDifferInShapeAndHue) {
  std::set<std::string> names;
  for (int g = 0; g < kGlyphCount; ++g) names.insert(glyph_name(g));
  EXPECT_EQ(names.size(), static_cast<size_t>(kGlyphCount));
}

TEST(SyntheticTest, InvalidConfigIsConfigError) {
  SyntheticConfig c;
  c.num_classes = 65;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SyntheticConfig{};
  c.scale_min = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SyntheticConfig{};
  c.scale_max = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SyntheticConfig{};
  c.class_offset = 60;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace logonet
