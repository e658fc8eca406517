#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logonet/detection/box.hpp"
#include "logonet/detection/proposals.hpp"
#include "logonet/network.hpp"
#include "logonet/training.hpp"

namespace logonet {

struct DetectorConfig {
  // Trunk layer whose activation feeds RoI pooling; empty means the last
  // inception layer.
  std::string feature_layer;
  int pool_h = 2;
  int pool_w = 2;
  int64_t hidden = 128;
  int64_t num_classes = 32;  // logo classes; background is index num_classes
  int64_t input_size = 0;    // square input side; 0 means the trunk's nominal size

  nlohmann::json to_json() const;
  static DetectorConfig from_json(const nlohmann::json& json);
};

// Fast R-CNN style head on a classification trunk:
//   trunk features -> RoI max pooling -> linear + ReLU ->
//   { (num_classes + 1)-way classifier, 4 * num_classes box offsets }
class DetectionNet {
 public:
  static DetectionNet build(const Network& trunk, DetectorConfig config, uint64_t seed);

  DetectionNet(DetectionNet&&) noexcept = default;
  DetectionNet& operator=(DetectionNet&&) noexcept = default;

  const DetectorConfig& config() const { return config_; }
  const Network& trunk() const { return trunk_; }
  Network& trunk() { return trunk_; }
  std::vector<Parameter>& head_parameters() { return head_; }
  const std::vector<Parameter>& head_parameters() const { return head_; }
  Parameter& head_parameter(std::string_view name);
  std::vector<Parameter*> trainable();
  int background_class() const { return static_cast<int>(config_.num_classes); }
  int64_t input_size() const;

  struct Output {
    Var cls_logits;  // (rois, num_classes + 1, 1, 1)
    Var bbox_pred;   // (rois, 4 * num_classes, 1, 1)
  };
  // `image` is preprocessed at input_size(); rois are in its pixel frame.
  Output forward(const Tensor& image, const std::vector<BBox>& rois) const;

  // Raw [0, 1] image at any size -> preprocessed input tensor.
  Tensor prepare(const Tensor& pixels) const;

  void save(const std::filesystem::path& path) const;
  static DetectionNet load(const std::filesystem::path& path);

 private:
  DetectionNet(Network trunk, DetectorConfig config)
      : trunk_(std::move(trunk)), config_(std::move(config)) {}

  Network trunk_;
  DetectorConfig config_;
  std::vector<Parameter> head_;
};

// Feature-cell rectangle covering a pixel rectangle, clamped to the map and
// at least one cell wide.
kernels::CellRect project_to_cells(const BBox& rect, int64_t image_w, int64_t image_h,
                                   int64_t map_w, int64_t map_h);

// Classification cross-entropy over all RoIs plus smooth-L1 box regression
// over RoIs whose label is not background, the latter divided by the RoI
// count and scaled by `box_weight`.
Var detection_loss(const Var& cls_logits, const Var& bbox_pred, const std::vector<int>& labels,
                   const Tensor& targets, int background_class, double box_weight = 1.0);

struct DetectOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.3;
};

// Turns per-proposal posteriors (rois, K + 1) and offsets (rois, 4K) into
// detections: every non-background class scoring above the threshold yields
// a regressed, clamped rectangle; then per-class NMS.
std::vector<Detection> decode_detections(const std::string& image,
                                         const std::vector<RegionProposal>& proposals,
                                         const Tensor& probs, const Tensor& offsets,
                                         int64_t width, int64_t height,
                                         const DetectOptions& options = {});

// Runs the detector on a raw image with proposals in its pixel frame.
std::vector<Detection> detect(const DetectionNet& net, const std::string& image_id,
                              const Tensor& pixels,
                              const std::vector<RegionProposal>& proposals,
                              const DetectOptions& options = {});

// Softmax posteriors of the whole-image proposal: (num_classes + 1) values.
std::vector<double> image_posteriors(const DetectionNet& net, const Tensor& pixels);

enum class ProposalMode { kWholeImage, kSelectiveSearch };
std::string_view to_string(ProposalMode mode);
ProposalMode parse_proposal_mode(std::string_view text);

struct DetectorTrainOptions {
  ProposalMode mode = ProposalMode::kSelectiveSearch;
  double fg_fraction = 0.25;
  double fg_iou = 0.5;
  double bg_iou_low = 0.1;
  SelectiveSearchOptions search;
};

// One image per iteration, config.batch_size RoIs sampled from its
// proposals. Whole-image mode labels the single proposal with the image
// label; selective-search mode adds the ground-truth boxes and labels by
// IoU (>= fg_iou: the box's class, [bg_iou_low, fg_iou): background, lower:
// unused). All proposals of background images are background samples.
TrainLog train_detector(DetectionNet& net, const Manifest& train, const TrainConfig& config,
                        const DetectorTrainOptions& options = {});

}  // namespace logonet
