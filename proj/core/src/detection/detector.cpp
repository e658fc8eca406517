#include "logonet/detection/detector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "logonet/checkpoint.hpp"
#include "logonet/data/image.hpp"
#include "logonet/error.hpp"

namespace logonet {
namespace {

constexpr std::string_view kBufferPrefix = "buffer:";

uint64_t name_seed(uint64_t seed, std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return Rng::derive(seed, h);
}

Tensor gaussian(Shape shape, double std_dev, uint64_t seed) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.data()) v = rng.normal(0.0, std_dev);
  return t;
}

std::string last_inception(const NetworkSpec& spec) {
  std::string name;
  for (const LayerSpec& l : spec.layers) {
    if (std::holds_alternative<InceptionSpec>(l.op)) name = l.name;
  }
  if (name.empty()) throw BuildError("detector trunk has no inception layer");
  return name;
}

}  // namespace

nlohmann::json DetectorConfig::to_json() const {
  return {{"feature_layer", feature_layer}, {"pool_h", pool_h},
          {"pool_w", pool_w},               {"hidden", hidden},
          {"num_classes", num_classes},     {"input_size", input_size}};
}

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j) {
  try {
    DetectorConfig c;
    c.feature_layer = j.at("feature_layer").get<std::string>();
    c.pool_h = j.at("pool_h").get<int>();
    c.pool_w = j.at("pool_w").get<int>();
    c.hidden = j.at("hidden").get<int64_t>();
    c.num_classes = j.at("num_classes").get<int64_t>();
    c.input_size = j.at("input_size").get<int64_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed detector config: ") + e.what());
  }
}

DetectionNet DetectionNet::build(const Network& trunk, DetectorConfig config, uint64_t seed) {
  if (config.num_classes < 1 || config.hidden < 1 || config.pool_h < 1 || config.pool_w < 1) {
    throw ParameterError("detector classes, hidden size and pooling grid must be >= 1");
  }
  if (config.feature_layer.empty()) config.feature_layer = last_inception(trunk.spec());
  const int layer = trunk.spec().find_layer(config.feature_layer);
  if (layer < 0) throw LookupError("unknown feature layer '" + config.feature_layer + "'");
  if (config.input_size == 0) config.input_size = trunk.spec().nominal_h;

  DetectionNet net(trunk.clone(), config);
  const ShapeReport shapes = infer_shapes(net.trunk_.spec(), config.input_size, config.input_size);
  const Shape feat = shapes.layer_outputs[static_cast<size_t>(layer)];
  const int64_t in = feat.c * config.pool_h * config.pool_w;
  const int64_t k = config.num_classes;
  auto add = [&](const std::string& name, int64_t out, int64_t fan_in, double std_dev) {
    net.head_.emplace_back(name + ".weight",
                           gaussian({out, fan_in, 1, 1}, std_dev, name_seed(seed, name)));
    net.head_.emplace_back(name + ".bias", Tensor({out, 1, 1, 1}));
  };
  add("det_fc", config.hidden, in, std::sqrt(2.0 / static_cast<double>(in)));
  add("det_cls", k + 1, config.hidden, 0.01);
  add("det_bbox", 4 * k, config.hidden, 0.001);
  return net;
}

Parameter& DetectionNet::head_parameter(std::string_view name) {
  for (Parameter& p : head_) {
    if (p.name == name) return p;
  }
  throw LookupError("unknown detector parameter '" + std::string(name) + "'");
}

std::vector<Parameter*> DetectionNet::trainable() {
  const int feature = trunk_.spec().find_layer(config_.feature_layer);
  std::vector<Parameter*> out;
  for (Parameter& p : trunk_.parameters()) {
    const int layer = trunk_.spec().find_layer(owning_layer(p.name));
    if (layer >= 0 && layer <= feature) out.push_back(&p);
  }
  for (Parameter& p : head_) out.push_back(&p);
  return out;
}

int64_t DetectionNet::input_size() const { return config_.input_size; }

kernels::CellRect project_to_cells(const BBox& rect, int64_t image_w, int64_t image_h,
                                   int64_t map_w, int64_t map_h) {
  const double sx = static_cast<double>(map_w) / static_cast<double>(image_w);
  const double sy = static_cast<double>(map_h) / static_cast<double>(image_h);
  kernels::CellRect c;
  c.x0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(rect.x * sx)), 0, map_w - 1);
  c.y0 = std::clamp<int64_t>(static_cast<int64_t>(std::floor(rect.y * sy)), 0, map_h - 1);
  c.x1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil((rect.x + rect.w) * sx)), c.x0 + 1,
                             map_w);
  c.y1 = std::clamp<int64_t>(static_cast<int64_t>(std::ceil((rect.y + rect.h) * sy)), c.y0 + 1,
                             map_h);
  return c;
}

DetectionNet::Output DetectionNet::forward(const Tensor& image,
                                           const std::vector<BBox>& rois) const {
  if (rois.empty()) throw ParameterError("detector forward needs at least one region");
  const Shape& s = image.shape();
  if (s.n != 1) throw DimensionError("detector forward takes one image, got " + to_string(s));
  const Var features = trunk_.features(image, config_.feature_layer);
  const Shape& f = features.shape();
  std::vector<kernels::CellRect> cells;
  for (const BBox& r : rois) cells.push_back(project_to_cells(r, s.w, s.h, f.w, f.h));
  const Var pooled = ag::roi_pool(features, cells, std::vector<int64_t>(rois.size(), 0),
                                  config_.pool_h, config_.pool_w);
  auto param = [&](std::string_view name) -> const Var& {
    for (const Parameter& p : head_) {
      if (p.name == name) return p.value;
    }
    throw LookupError("missing detector parameter '" + std::string(name) + "'");
  };
  const Var hidden = ag::relu(ag::linear(pooled, param("det_fc.weight"), param("det_fc.bias")));
  return {ag::linear(hidden, param("det_cls.weight"), param("det_cls.bias")),
          ag::linear(hidden, param("det_bbox.weight"), param("det_bbox.bias"))};
}

Tensor DetectionNet::prepare(const Tensor& pixels) const {
  const auto mean = network_mean(trunk_);
  return preprocess(pixels, config_.input_size, config_.input_size, mean);
}

void DetectionNet::save(const std::filesystem::path& path) const {
  CheckpointFile file;
  const nlohmann::json spec = {{"detector", config_.to_json()},
                               {"trunk", logonet::to_json(trunk_.spec())}};
  file.spec_json = spec.dump();
  file.fingerprint = sha256(file.spec_json);
  file.iteration = trunk_.iteration();
  for (const Parameter& p : trunk_.parameters()) file.records.emplace_back(p.name, p.value.value());
  for (const Parameter& p : head_) file.records.emplace_back(p.name, p.value.value());
  for (const auto& [name, value] : trunk_.buffers()) {
    file.records.emplace_back(std::string(kBufferPrefix) + name, value);
  }
  write_checkpoint_file(file, path);
}

DetectionNet DetectionNet::load(const std::filesystem::path& path) {
  CheckpointFile file = read_checkpoint_file(path);
  if (sha256(file.spec_json) != file.fingerprint) {
    throw FormatError("detector checkpoint '" + path.string() + "' fails its fingerprint check");
  }
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(file.spec_json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("detector checkpoint '" + path.string() + "': " + e.what());
  }
  if (!spec.contains("detector") || !spec.contains("trunk")) {
    throw FormatError("'" + path.string() + "' is a classifier checkpoint, not a detector");
  }
  Network trunk = Network::build(spec_from_json(spec["trunk"]), 0);
  DetectionNet net = build(trunk, DetectorConfig::from_json(spec["detector"]), 0);
  for (auto& [name, value] : file.records) {
    if (name.starts_with(kBufferPrefix)) {
      net.trunk_.buffers()[name.substr(kBufferPrefix.size())] = std::move(value);
      continue;
    }
    Parameter* target = nullptr;
    if (net.trunk_.find_parameter(name)) {
      target = &net.trunk_.parameter(name);
    } else {
      target = &net.head_parameter(name);
    }
    if (target->shape() != value.shape()) {
      throw FormatError("detector checkpoint parameter '" + name + "' has shape " +
                        to_string(value.shape()) + ", expected " + to_string(target->shape()));
    }
    target->value = Var::leaf(std::move(value));
  }
  net.trunk_.set_iteration(file.iteration);
  return net;
}

Var detection_loss(const Var& cls_logits, const Var& bbox_pred, const std::vector<int>& labels,
                   const Tensor& targets, int background_class, double box_weight) {
  std::vector<int> classes;
  for (int l : labels) classes.push_back(l == background_class ? -1 : l);
  const Var cls = ag::softmax_cross_entropy(cls_logits, labels).loss;
  const Var box = ag::smooth_l1_regression(bbox_pred, targets, std::move(classes),
                                           static_cast<double>(labels.size()));
  const Var terms[] = {cls, box};
  const double weights[] = {1.0, box_weight};
  return ag::weighted_sum(terms, weights);
}

std::vector<Detection> decode_detections(const std::string& image,
                                         const std::vector<RegionProposal>& proposals,
                                         const Tensor& probs, const Tensor& offsets,
                                         int64_t width, int64_t height,
                                         const DetectOptions& options) {
  const int64_t rois = static_cast<int64_t>(proposals.size());
  const int64_t k = probs.shape().sample_size() - 1;
  if (probs.shape().n != rois || offsets.shape().n != rois ||
      offsets.shape().sample_size() != 4 * k) {
    throw DimensionError("decode_detections: " + std::to_string(rois) + " proposals, probs " +
                         to_string(probs.shape()) + ", offsets " + to_string(offsets.shape()));
  }
  std::vector<Detection> out;
  for (int64_t r = 0; r < rois; ++r) {
    for (int64_t c = 0; c < k; ++c) {
      const double score = probs[r * (k + 1) + c];
      if (!(score > options.score_threshold)) continue;
      const double* o = offsets.ptr() + r * 4 * k + c * 4;
      BBox rect = clamp_to_image(
          decode_offsets(proposals[static_cast<size_t>(r)].rect, {o[0], o[1], o[2], o[3]}),
          width, height);
      if (!(rect.w > 0 && rect.h > 0)) continue;
      rect.class_id = static_cast<int>(c);
      out.push_back({image, rect, score});
    }
  }
  return nms(std::move(out), options.nms_iou);
}

std::vector<Detection> detect(const DetectionNet& net, const std::string& image_id,
                              const Tensor& pixels,
                              const std::vector<RegionProposal>& proposals,
                              const DetectOptions& options) {
  if (proposals.empty()) throw ParameterError("detect needs at least one proposal");
  const int64_t w = pixels.shape().w, h = pixels.shape().h;
  const int64_t s = net.input_size();
  std::vector<BBox> rois;
  for (const RegionProposal& p : proposals) rois.push_back(scale_box(p.rect, w, h, s, s));
  NoGradGuard no_grad;
  const auto out = net.forward(net.prepare(pixels), rois);
  return decode_detections(image_id, proposals, kernels::softmax(out.cls_logits.value()),
                           out.bbox_pred.value(), w, h, options);
}

std::vector<double> image_posteriors(const DetectionNet& net, const Tensor& pixels) {
  const int64_t s = net.input_size();
  const BBox whole = scale_box(whole_image_proposal(pixels).front().rect, pixels.shape().w,
                               pixels.shape().h, s, s);
  NoGradGuard no_grad;
  const auto out = net.forward(net.prepare(pixels), {whole});
  const Tensor probs = kernels::softmax(out.cls_logits.value());
  return probs.values();
}

std::string_view to_string(ProposalMode mode) {
  return mode == ProposalMode::kWholeImage ? "whole-image" : "selective-search";
}

ProposalMode parse_proposal_mode(std::string_view text) {
  if (text == "whole-image") return ProposalMode::kWholeImage;
  if (text == "selective-search") return ProposalMode::kSelectiveSearch;
  throw ConfigError("unknown proposal mode '" + std::string(text) +
                    "' (expected whole-image or selective-search)");
}

namespace {

struct Sample {
  BBox rect;  // original image frame
  int label;
  std::array<double, 4> target{};
};

struct ImagePlan {
  std::vector<Sample> foreground;
  std::vector<Sample> background;
};

ImagePlan plan_image(const ImageRecord& r, const Tensor& pixels, int background,
                     const DetectorTrainOptions& options) {
  ImagePlan plan;
  const int64_t w = pixels.shape().w, h = pixels.shape().h;
  if (options.mode == ProposalMode::kWholeImage) {
    const BBox whole = whole_image_proposal(w, h).front().rect;
    if (!r.foreground()) {
      plan.background.push_back({whole, background, {}});
    } else {
      const BBox* largest = &r.boxes.front();
      for (const BBox& b : r.boxes) {
        if (b.area() > largest->area()) largest = &b;
      }
      plan.foreground.push_back({whole, r.label, encode_offsets(whole, *largest)});
    }
    return plan;
  }
  std::vector<RegionProposal> proposals = selective_search(pixels, options.search);
  for (const BBox& b : r.boxes) proposals.push_back({b, ProposalSource::kGroundTruth, 0});
  for (const RegionProposal& p : proposals) {
    if (!(p.rect.w > 0 && p.rect.h > 0)) continue;
    if (!r.foreground()) {
      plan.background.push_back({p.rect, background, {}});
      continue;
    }
    const BBox* best = nullptr;
    double best_iou = 0.0;
    for (const BBox& b : r.boxes) {
      const double o = iou(p.rect, b);
      if (!best || o > best_iou) {
        best = &b;
        best_iou = o;
      }
    }
    if (best_iou >= options.fg_iou) {
      plan.foreground.push_back({p.rect, best->class_id, encode_offsets(p.rect, *best)});
    } else if (best_iou >= options.bg_iou_low) {
      plan.background.push_back({p.rect, background, {}});
    }
  }
  return plan;
}

}  // namespace

TrainLog train_detector(DetectionNet& net, const Manifest& train, const TrainConfig& config,
                        const DetectorTrainOptions& options) {
  config.validate();
  if (!(options.fg_fraction >= 0.0 && options.fg_fraction <= 1.0)) {
    throw ConfigError("fg_fraction must be in [0, 1]");
  }
  const int background = net.background_class();
  std::vector<Tensor> inputs;
  std::vector<ImagePlan> plans;
  std::vector<std::pair<int64_t, int64_t>> sizes;
  for (size_t i = 0; i < train.records.size(); ++i) {
    const ImageRecord& r = train.records[i];
    if (r.foreground() && r.label >= background) {
      throw DataError("training record '" + r.id + "' has label " + std::to_string(r.label) +
                      " but the detector has " + std::to_string(background) + " classes");
    }
    const Tensor pixels = load_pixels(r);
    plans.push_back(plan_image(r, pixels, background, options));
    sizes.push_back({pixels.shape().w, pixels.shape().h});
    inputs.push_back(net.prepare(pixels));
  }
  std::vector<size_t> usable;
  for (size_t i = 0; i < plans.size(); ++i) {
    if (!plans[i].foreground.empty() || !plans[i].background.empty()) usable.push_back(i);
  }
  if (usable.empty()) throw DataError("no training regions in split '" + train.split + "'");

  Rng sample_rng(Rng::derive(config.seed, 5));
  Rng shuffle_rng(Rng::derive(config.seed, 3));
  auto params = net.trainable();
  const SgdOptions sgd = config.sgd();
  const int64_t s = net.input_size();
  const size_t rois_per_image = static_cast<size_t>(config.batch_size);
  size_t cursor = usable.size();
  TrainLog log;
  const auto start = std::chrono::steady_clock::now();

  for (int64_t step = 0; step < config.iterations; ++step) {
    if (cursor >= usable.size()) {
      shuffle_rng.shuffle(std::span<size_t>(usable));
      cursor = 0;
    }
    const size_t img = usable[cursor++];
    ImagePlan plan = plans[img];
    sample_rng.shuffle(std::span<Sample>(plan.foreground));
    sample_rng.shuffle(std::span<Sample>(plan.background));
    size_t n_fg = std::min(plan.foreground.size(),
                           static_cast<size_t>(std::lround(options.fg_fraction *
                                                           static_cast<double>(rois_per_image))));
    if (plan.background.empty()) n_fg = std::min(plan.foreground.size(), rois_per_image);
    const size_t n_bg = std::min(plan.background.size(), rois_per_image - n_fg);

    std::vector<BBox> rois;
    std::vector<int> labels;
    std::vector<double> targets;
    auto take = [&](const Sample& smp) {
      rois.push_back(scale_box(smp.rect, sizes[img].first, sizes[img].second, s, s));
      labels.push_back(smp.label);
      targets.insert(targets.end(), smp.target.begin(), smp.target.end());
    };
    for (size_t i = 0; i < n_fg; ++i) take(plan.foreground[i]);
    for (size_t i = 0; i < n_bg; ++i) take(plan.background[i]);
    if (rois.empty()) continue;

    net.trunk().zero_grad();
    for (Parameter& p : net.head_parameters()) p.value.zero_grad();
    const auto out = net.forward(inputs[img], rois);
    std::vector<int> box_classes;
    for (int l : labels) box_classes.push_back(l == background ? -1 : l);
    const Var cls = ag::softmax_cross_entropy(out.cls_logits, labels).loss;
    const Var box = ag::smooth_l1_regression(
        out.bbox_pred, Tensor({static_cast<int64_t>(labels.size()), 4, 1, 1}, targets),
        box_classes, static_cast<double>(labels.size()));
    const Var terms[] = {cls, box};
    const double weights[] = {1.0, 1.0};
    const Var total = ag::weighted_sum(terms, weights);
    const int64_t iteration = static_cast<int64_t>(net.trunk().iteration()) + 1;
    if (!std::isfinite(total.value()[0])) {
      throw TrainingError("detector loss became non-finite at iteration " +
                          std::to_string(iteration));
    }
    backward(total);
    sgd_step(params, sgd);
    net.trunk().set_iteration(static_cast<uint64_t>(iteration));
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.entries.push_back({iteration, "det_cls", cls.value()[0], total.value()[0], seconds});
    log.entries.push_back({iteration, "det_bbox", box.value()[0], total.value()[0], seconds});
  }
  return log;
}

}  // namespace logonet
