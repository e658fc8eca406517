#include "logonet/data/flickrlogos.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "logonet/data/image.hpp"
#include "logonet/error.hpp"

namespace fs = std::filesystem;

namespace logonet {
namespace {

constexpr std::string_view kNoLogoDir = "no-logo";

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

struct Entry {
  std::string class_dir;
  std::string file;
};

std::vector<Entry> read_split_list(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LayoutError("missing split list '" + path.string() + "'");
  std::vector<Entry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma != std::string::npos) {
      entries.push_back({trim(line.substr(0, comma)), trim(line.substr(comma + 1))});
      continue;
    }
    const fs::path rel(line);
    if (!rel.has_parent_path()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 'class,image' or a relative image path");
    }
    entries.push_back({rel.parent_path().filename().string(), rel.filename().string()});
  }
  return entries;
}

std::vector<BBox> read_boxes(const fs::path& path, int class_id) {
  std::ifstream in(path);
  if (!in) throw LayoutError("missing bbox annotation '" + path.string() + "'");
  std::vector<BBox> boxes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (line_no == 1 && std::isalpha(static_cast<unsigned char>(line[0]))) continue;
    std::istringstream fields(line);
    double v[4];
    std::string extra;
    if (!(fields >> v[0] >> v[1] >> v[2] >> v[3]) || (fields >> extra)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 'x y w h', got '" + line + "'");
    }
    if (!(v[2] > 0) || !(v[3] > 0)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": zero-area box");
    }
    boxes.push_back({v[0], v[1], v[2], v[3], class_id});
  }
  if (boxes.empty()) throw DataError(path.string() + ": no boxes");
  return boxes;
}

BBox clamp_box(BBox b, int64_t width, int64_t height, const std::string& where) {
  const double x0 = std::clamp(b.x, 0.0, static_cast<double>(width));
  const double y0 = std::clamp(b.y, 0.0, static_cast<double>(height));
  const double x1 = std::clamp(b.x + b.w, 0.0, static_cast<double>(width));
  const double y1 = std::clamp(b.y + b.h, 0.0, static_cast<double>(height));
  if (!(x1 > x0) || !(y1 > y0)) throw DataError(where + ": box lies outside the image");
  return {x0, y0, x1 - x0, y1 - y0, b.class_id};
}

std::vector<Entry> split_entries(const fs::path& root, std::initializer_list<const char*> names,
                                 std::initializer_list<const char*> fallback) {
  bool all = true;
  for (const char* n : names) all = all && fs::exists(root / n);
  std::vector<Entry> out;
  for (const char* n : all ? names : fallback) {
    const auto part = read_split_list(root / n);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

Manifest build_split(const fs::path& root, const std::string& split,
                     const std::vector<Entry>& entries, const std::vector<std::string>& classes,
                     const std::map<std::string, int>& class_index) {
  Manifest m;
  m.split = split;
  m.classes = classes;
  for (const Entry& e : entries) {
    ImageRecord r;
    const bool background = lower(e.class_dir) == kNoLogoDir;
    if (!background) {
      auto it = class_index.find(lower(e.class_dir));
      if (it == class_index.end()) {
        throw DataError("split list '" + split + "' names unknown class '" + e.class_dir + "'");
      }
      r.label = it->second;
    }
    fs::path image = root / "classes" / "jpg" / e.class_dir / e.file;
    fs::path ppm = image;
    ppm.replace_extension(".ppm");
    if (fs::exists(ppm)) image = ppm;
    if (!fs::exists(image)) throw LayoutError("missing image '" + image.string() + "'");
    r.path = image;
    r.id = e.class_dir + "/" + fs::path(e.file).stem().string();
    const ImageSize size = read_image_size(image);
    r.width = size.width;
    r.height = size.height;
    if (!background) {
      const fs::path ann = root / "classes" / "masks" / e.class_dir / (e.file + ".bboxes.txt");
      for (const BBox& b : read_boxes(ann, r.label)) {
        r.boxes.push_back(clamp_box(b, r.width, r.height, ann.string()));
      }
    }
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void check_counts(const Manifest& m, SplitCounts expected, std::vector<std::string>& warnings) {
  const SplitCounts got = m.counts();
  if (got.foreground != expected.foreground || got.background != expected.background) {
    warnings.push_back(m.split + " split has " + std::to_string(got.foreground) +
                       " foreground / " + std::to_string(got.background) +
                       " background images; the published dataset has " +
                       std::to_string(expected.foreground) + " / " +
                       std::to_string(expected.background));
  }
}

}  // namespace

FlickrLogos load_flickrlogos(const fs::path& root) {
  if (!fs::is_directory(root)) throw LayoutError("dataset root '" + root.string() + "' not found");
  const fs::path jpg = root / "classes" / "jpg";
  if (!fs::is_directory(jpg)) throw LayoutError("missing image directory '" + jpg.string() + "'");

  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(jpg)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (lower(name) != kNoLogoDir) classes.push_back(name);
  }
  std::sort(classes.begin(), classes.end(), [](const std::string& a, const std::string& b) {
    const auto la = lower(a), lb = lower(b);
    return la != lb ? la < lb : a < b;
  });
  std::map<std::string, int> class_index;
  for (size_t i = 0; i < classes.size(); ++i) class_index[lower(classes[i])] = static_cast<int>(i);

  FlickrLogos out;
  out.trainval = build_split(root, "trainval",
                             split_entries(root, {"trainvalset.txt"}, {"trainset.txt", "valset.txt"}),
                             classes, class_index);
  out.test = build_split(root, "test", split_entries(root, {"testset.txt"}, {"testset.txt"}),
                         classes, class_index);
  check_disjoint(out.trainval, out.test);
  check_counts(out.trainval, kFlickrLogosTrainval, out.warnings);
  check_counts(out.test, kFlickrLogosTest, out.warnings);
  return out;
}

}  // namespace logonet
