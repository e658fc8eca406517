#include "logonet/detection/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

#include "logonet/data/image.hpp"
#include "logonet/error.hpp"

namespace logonet {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

ClassAP ranked_average_precision(const std::vector<std::pair<double, bool>>& ranked,
                                 int64_t positives) {
  ClassAP result;
  result.num_ground_truth = positives;
  if (positives <= 0) return result;

  int64_t tp = 0, fp = 0;
  for (size_t i = 0; i < ranked.size(); ++i) {
    (ranked[i].second ? tp : fp) += 1;
    const bool group_end = i + 1 == ranked.size() || ranked[i + 1].first != ranked[i].first;
    if (!group_end) continue;
    result.curve.points.push_back({ranked[i].first,
                                   static_cast<double>(tp) / static_cast<double>(positives),
                                   static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  const auto& pts = result.curve.points;
  std::vector<double> envelope(pts.size());
  double best = 0.0;
  for (size_t i = pts.size(); i-- > 0;) {
    best = std::max(best, pts[i].precision);
    envelope[i] = best;
  }
  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    ap += (pts[i].recall - prev_recall) * envelope[i];
    prev_recall = pts[i].recall;
  }
  result.ap = ap;
  return result;
}

ClassAP average_precision(std::vector<Detection> detections,
                          const std::vector<GroundTruthBox>& ground_truth,
                          double iou_threshold) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return std::tie(a.image, a.rect.x, a.rect.y, a.rect.w, a.rect.h) <
                            std::tie(b.image, b.rect.x, b.rect.y, b.rect.w, b.rect.h);
                   });
  std::map<std::string, std::vector<std::pair<BBox, bool>>> gt;
  for (const GroundTruthBox& g : ground_truth) gt[g.image].push_back({g.rect, false});

  std::vector<std::pair<double, bool>> ranked;
  for (const Detection& d : detections) {
    bool hit = false;
    auto it = gt.find(d.image);
    if (it != gt.end() && d.rect.w > 0 && d.rect.h > 0) {
      int best = -1;
      double best_iou = 0.0;
      for (size_t j = 0; j < it->second.size(); ++j) {
        if (it->second[j].second) continue;
        const double o = iou(d.rect, it->second[j].first);
        if (o >= iou_threshold && (best < 0 || o > best_iou)) {
          best = static_cast<int>(j);
          best_iou = o;
        }
      }
      if (best >= 0) {
        it->second[static_cast<size_t>(best)].second = true;
        hit = true;
      }
    }
    ranked.push_back({d.score, hit});
  }
  return ranked_average_precision(ranked, static_cast<int64_t>(ground_truth.size()));
}

namespace {

void finish(APReport& report) {
  double sum = 0.0;
  int64_t n = 0;
  for (const ClassAP& c : report.per_class) {
    if (c.ap) {
      sum += *c.ap;
      ++n;
    }
  }
  if (n > 0) report.mean_ap = sum / static_cast<double>(n);
}

}  // namespace

APReport evaluate_localized(const std::vector<Detection>& detections, const Manifest& split,
                            double iou_threshold) {
  APReport report;
  report.classes = split.classes;
  const size_t k = split.classes.size();
  std::vector<std::vector<Detection>> by_class(k);
  std::vector<std::vector<GroundTruthBox>> gt(k);
  for (const Detection& d : detections) {
    if (d.rect.class_id < 0 || static_cast<size_t>(d.rect.class_id) >= k) {
      throw DataError("detection on '" + d.image + "' has class " +
                      std::to_string(d.rect.class_id) + " outside the class table");
    }
    by_class[static_cast<size_t>(d.rect.class_id)].push_back(d);
  }
  for (const ImageRecord& r : split.records) {
    for (const BBox& b : r.boxes) gt[static_cast<size_t>(b.class_id)].push_back({r.id, b});
  }
  for (size_t c = 0; c < k; ++c) {
    report.per_class.push_back(average_precision(by_class[c], gt[c], iou_threshold));
  }
  finish(report);
  return report;
}

APReport image_level_ap(const std::vector<ImageScores>& images,
                        const std::vector<std::string>& classes) {
  APReport report;
  report.classes = classes;
  for (const ImageScores& im : images) {
    if (im.scores.size() < classes.size()) {
      throw DimensionError("image '" + im.image + "' has " + std::to_string(im.scores.size()) +
                           " scores for " + std::to_string(classes.size()) + " classes");
    }
  }
  std::vector<size_t> order(images.size());
  for (size_t c = 0; c < classes.size(); ++c) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      const double sa = images[a].scores[c], sb = images[b].scores[c];
      if (sa != sb) return sa > sb;
      return images[a].image < images[b].image;
    });
    std::vector<std::pair<double, bool>> ranked;
    int64_t positives = 0;
    for (size_t i : order) {
      const bool relevant = images[i].label == static_cast<int>(c);
      positives += relevant ? 1 : 0;
      ranked.push_back({images[i].scores[c], relevant});
    }
    report.per_class.push_back(ranked_average_precision(ranked, positives));
  }
  finish(report);
  return report;
}

void write_ap_csv(const APReport& report, const std::filesystem::path& path) {
  std::ofstream out = open_csv(path);
  out << "class,ap\n";
  for (size_t c = 0; c < report.classes.size(); ++c) {
    const auto& ap = report.per_class[c].ap;
    out << report.classes[c] << ',' << (ap ? format_double(*ap) : "N/A") << '\n';
  }
  out << "mAP," << (report.mean_ap ? format_double(*report.mean_ap) : "N/A") << '\n';
}

void write_detections(const std::vector<Detection>& detections,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const Detection& d : detections) {
    const nlohmann::json j = {{"image", d.image},
                              {"class", d.rect.class_id},
                              {"score", d.score},
                              {"rect", {d.rect.x, d.rect.y, d.rect.w, d.rect.h}}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::vector<Detection> out;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& r = j.at("rect");
      if (!r.is_array() || r.size() != 4) throw FormatError("rect needs 4 numbers");
      Detection d;
      d.image = j.at("image").get<std::string>();
      d.score = j.at("score").get<double>();
      d.rect = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>(),
                r[3].get<double>(), j.at("class").get<int>()};
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_pr_csv(const std::string& class_name, const PRCurve& curve,
                  const std::filesystem::path& path) {
  std::ofstream out = open_csv(path);
  out << "class,threshold,recall,precision\n";
  for (const PRPoint& p : curve.points) {
    out << class_name << ',' << format_double(p.threshold) << ',' << format_double(p.recall)
        << ',' << format_double(p.precision) << '\n';
  }
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ParameterError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("quantile probability must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

SizeAnalysis bbox_size_analysis(const std::vector<ClassificationOutcome>& outcomes,
                                const Manifest& split) {
  std::map<std::string, const ImageRecord*> by_id;
  for (const ImageRecord& r : split.records) by_id[r.id] = &r;

  SizeAnalysis result;
  std::vector<std::pair<double, bool>> items;
  for (const ClassificationOutcome& o : outcomes) {
    auto it = by_id.find(o.id);
    if (it == by_id.end()) throw DataError("outcome for unknown image '" + o.id + "'");
    const ImageRecord& r = *it->second;
    if (r.boxes.empty()) {
      ++result.excluded;
      continue;
    }
    int64_t w = r.width, h = r.height;
    if (w <= 0 || h <= 0) {
      const ImageSize size = read_image_size(r.path);
      w = size.width;
      h = size.height;
    }
    double largest = 0.0;
    for (const BBox& b : r.boxes) largest = std::max(largest, b.area());
    items.push_back({largest / static_cast<double>(w * h), o.correct()});
  }
  if (items.empty()) return result;

  std::vector<double> fractions;
  for (const auto& [f, ok] : items) fractions.push_back(f);
  for (int q = 0; q < 3; ++q) result.quartiles[static_cast<size_t>(q)] = quantile(fractions, 0.25 * (q + 1));
  const double lo = *std::min_element(fractions.begin(), fractions.end());
  const double hi = *std::max_element(fractions.begin(), fractions.end());
  const double bounds[5] = {lo, result.quartiles[0], result.quartiles[1], result.quartiles[2], hi};
  for (int b = 0; b < 4; ++b) result.buckets.push_back({b, bounds[b], bounds[b + 1], 0, 0});
  for (const auto& [f, ok] : items) {
    int b = 3;
    for (int q = 0; q < 3; ++q) {
      if (f <= result.quartiles[static_cast<size_t>(q)]) {
        b = q;
        break;
      }
    }
    result.buckets[static_cast<size_t>(b)].count += 1;
    result.buckets[static_cast<size_t>(b)].correct += ok ? 1 : 0;
  }
  return result;
}

void write_size_csv(const SizeAnalysis& analysis, const std::filesystem::path& path) {
  std::ofstream out = open_csv(path);
  out << "bucket,lower,upper,count,correct,accuracy\n";
  for (const SizeBucket& b : analysis.buckets) {
    out << b.index << ',' << format_double(b.lower) << ',' << format_double(b.upper) << ','
        << b.count << ',' << b.correct << ',' << format_double(b.accuracy()) << '\n';
  }
}

}  // namespace logonet
