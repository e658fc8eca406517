#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "logonet/data/manifest.hpp"
#include "logonet/detection/box.hpp"
#include "logonet/training.hpp"

namespace logonet {

struct PRPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per distinct score, descending
};

struct ClassAP {
  std::optional<double> ap;  // empty: no ground truth (N/A)
  PRCurve curve;
  int64_t num_ground_truth = 0;
};

struct APReport {
  std::vector<std::string> classes;
  std::vector<ClassAP> per_class;
  std::optional<double> mean_ap;  // over classes with ground truth
};

struct GroundTruthBox {
  std::string image;
  BBox rect;
};

// Detections are ranked by descending score, ties by image id then rect
// (x, y, w, h). Each one matches the highest-IoU unmatched ground-truth box
// of its image with IoU >= iou_threshold (true positive) or counts as a false
// positive. Tied scores form one threshold. AP is the all-point interpolated
// area: sum over points of (r_i - r_{i-1}) * max_{j >= i} p_j.
ClassAP average_precision(std::vector<Detection> detections,
                          const std::vector<GroundTruthBox>& ground_truth,
                          double iou_threshold = 0.5);

// AP from an already ranked list of (score, is_true_positive) with
// `positives` relevant items in total.
ClassAP ranked_average_precision(const std::vector<std::pair<double, bool>>& ranked,
                                 int64_t positives);

// Localized detection: per-class AP of `detections` against the boxes of
// `split`.
APReport evaluate_localized(const std::vector<Detection>& detections, const Manifest& split,
                            double iou_threshold = 0.5);

struct ImageScores {
  std::string image;
  std::vector<double> scores;  // per class; a trailing background entry is ignored
  int label = kNoLogo;
};

// Detection without localization: per class, images ranked by that class's
// score (ties by image id); an image is relevant iff its label is the class.
APReport image_level_ap(const std::vector<ImageScores>& images,
                        const std::vector<std::string>& classes);

// "class,ap" rows (N/A for classes without ground truth), then "mAP,<value>".
void write_ap_csv(const APReport& report, const std::filesystem::path& path);
// "class,threshold,recall,precision" rows.
void write_pr_csv(const std::string& class_name, const PRCurve& curve,
                  const std::filesystem::path& path);

// JSON lines {"image": id, "class": int, "score": float, "rect": [x, y, w, h]}.
void write_detections(const std::vector<Detection>& detections,
                      const std::filesystem::path& path);
std::vector<Detection> read_detections(const std::filesystem::path& path);

// Hyndman-Fan type 7 (linear interpolation) sample quantile.
double quantile(std::vector<double> values, double p);

struct SizeBucket {
  int index = 0;
  double lower = 0.0;  // area fraction bounds; bucket holds (lower, upper]
  double upper = 0.0;  // except the first, which includes its lower bound
  int64_t count = 0;
  int64_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
};

struct SizeAnalysis {
  std::array<double, 3> quartiles{};
  std::vector<SizeBucket> buckets;
  int64_t excluded = 0;  // outcomes whose image has no boxes
};

// Buckets classification outcomes by the largest ground-truth box's area as
// a fraction of the image, split at the empirical quartiles.
SizeAnalysis bbox_size_analysis(const std::vector<ClassificationOutcome>& outcomes,
                                const Manifest& split);
void write_size_csv(const SizeAnalysis& analysis, const std::filesystem::path& path);

}  // namespace logonet
