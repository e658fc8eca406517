#include "logonet/data/manifest.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "logonet/data/image.hpp"
#include "logonet/error.hpp"

namespace logonet {

BBox scale_box(const BBox& box, int64_t src_w, int64_t src_h, int64_t dst_w, int64_t dst_h) {
  const double sx = static_cast<double>(dst_w) / static_cast<double>(src_w);
  const double sy = static_cast<double>(dst_h) / static_cast<double>(src_h);
  return {box.x * sx, box.y * sy, box.w * sx, box.h * sy, box.class_id};
}

SplitCounts Manifest::counts() const {
  SplitCounts c;
  for (const ImageRecord& r : records) (r.foreground() ? c.foreground : c.background) += 1;
  return c;
}

Manifest Manifest::foreground_only() const {
  Manifest out{split, classes, {}};
  for (const ImageRecord& r : records) {
    if (r.foreground()) out.records.push_back(r);
  }
  return out;
}

void Manifest::validate() const {
  std::set<std::string> names;
  for (const std::string& c : classes) {
    if (!names.insert(c).second) throw DataError("duplicate class name '" + c + "'");
  }
  std::set<std::string> ids;
  std::set<std::filesystem::path> paths;
  for (size_t i = 0; i < records.size(); ++i) {
    const ImageRecord& r = records[i];
    const std::string where = "record " + std::to_string(i) + " ('" + r.id + "')";
    if (!ids.insert(r.id).second) throw DataError(where + ": duplicate id");
    if (!paths.insert(r.path).second) throw DataError(where + ": duplicate path");
    if (r.label != kNoLogo && (r.label < 0 || r.label >= num_classes())) {
      throw DataError(where + ": label " + std::to_string(r.label) + " out of range");
    }
    if (r.foreground() && r.boxes.empty()) throw DataError(where + ": foreground without boxes");
    if (!r.foreground() && !r.boxes.empty()) throw DataError(where + ": background with boxes");
    for (const BBox& b : r.boxes) {
      if (!(b.w > 0) || !(b.h > 0)) throw DataError(where + ": box with non-positive extent");
      if (b.class_id != r.label) {
        throw DataError(where + ": box class " + std::to_string(b.class_id) +
                        " differs from image label " + std::to_string(r.label));
      }
    }
  }
}

Tensor load_pixels(const ImageRecord& record) { return decode_image(record.path); }

std::vector<std::string> read_class_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LayoutError("missing class table '" + path.string() + "'");
  std::vector<std::string> classes;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) classes.push_back(line);
  }
  return classes;
}

void write_class_table(const std::vector<std::string>& classes,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const std::string& c : classes) out << c << "\n";
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path dir = path.parent_path();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const ImageRecord& r : manifest.records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    std::filesystem::path p = r.path;
    if (!dir.empty() && p.is_absolute()) {
      const auto rel = p.lexically_relative(std::filesystem::absolute(dir));
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    } else if (!dir.empty()) {
      const auto rel = p.lexically_relative(dir);
      if (!rel.empty() && *rel.begin() != "..") p = rel;
    }
    j["path"] = p.generic_string();
    j["label"] = r.label;
    nlohmann::json boxes = nlohmann::json::array();
    for (const BBox& b : r.boxes) boxes.push_back({b.x, b.y, b.w, b.h, b.class_id});
    j["boxes"] = boxes;
    if (r.width > 0) {
      j["width"] = r.width;
      j["height"] = r.height;
    }
    out << j.dump() << "\n";
  }
  write_class_table(manifest.classes, dir / "classes.txt");
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LayoutError("missing manifest '" + path.string() + "'");
  const std::filesystem::path dir = path.parent_path();
  Manifest m;
  m.split = path.stem().string();
  m.classes = read_class_table(dir / "classes.txt");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    ImageRecord r;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      std::filesystem::path p = j.at("path").get<std::string>();
      r.path = p.is_absolute() ? p : dir / p;
      r.id = j.contains("id") ? j["id"].get<std::string>() : p.stem().string();
      r.label = j.at("label").get<int>();
      for (const auto& b : j.at("boxes")) {
        if (!b.is_array() || b.size() != 5) throw DataError(where + ": box must be [x,y,w,h,class]");
        r.boxes.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                           b[3].get<double>(), b[4].get<int>()});
      }
      if (j.contains("width")) {
        r.width = j["width"].get<int64_t>();
        r.height = j.at("height").get<int64_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": " + e.what());
    }
    m.records.push_back(std::move(r));
  }
  m.validate();
  return m;
}

void check_disjoint(const Manifest& a, const Manifest& b) {
  std::set<std::string> ids;
  for (const ImageRecord& r : a.records) ids.insert(r.id);
  for (const ImageRecord& r : b.records) {
    if (ids.count(r.id)) {
      throw DataError("image '" + r.id + "' appears in both " + a.split + " and " + b.split);
    }
  }
}

}  // namespace logonet
