#include "logonet_cli/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "logonet/checkpoint.hpp"
#include "logonet/data/flickrlogos.hpp"
#include "logonet/data/image.hpp"
#include "logonet/data/synthetic.hpp"
#include "logonet/detection/detector.hpp"
#include "logonet/detection/evaluation.hpp"
#include "logonet/detection/proposals.hpp"
#include "logonet/error.hpp"
#include "logonet/parallel.hpp"
#include "logonet/training.hpp"

namespace logonet::cli {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptionDef {
  std::string key;
  std::string fallback;
  std::string help;
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  std::replace(s.begin(), s.end(), '_', '-');
  return "--" + s;
}

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

const std::vector<OptionDef> kCommonOptions = {
    {"out", "", "output directory (required)"},
    {"seed", "0", "seed of every random stream"},
    {"threads", "1", "worker threads; 1 is the fully deterministic mode"},
};

const std::vector<OptionDef> kTrainOptions = {
    {"batch_size", "32", "images (or regions) per SGD step"},
    {"iterations", "1000", "SGD iterations"},
    {"lr", "0.001", "learning rate"},
    {"momentum", "0.9", "SGD momentum"},
    {"weight_decay", "0.0005", "L2 weight decay"},
    {"dropout_p", "none", "dropout probability for every head; none keeps the spec's"},
    {"input_sizes", "", "comma list of training sizes (64 or 64x48); empty is nominal"},
    {"eval_size", "0", "evaluation input size; 0 is nominal"},
};

const std::vector<OptionDef> kDataOptions = {
    {"data", "", "dataset: manifest directory, manifest .jsonl or FlickrLogos-32 root"},
    {"split", "test", "split to use (trainval or test)"},
};

class Context {
 public:
  Context(KeyValues values, fs::path out_dir, std::ostream& out)
      : values_(std::move(values)), out_dir_(std::move(out_dir)), out_(out) {}

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("option '" + key + "' not declared");
    return it->second;
  }
  const std::string& required(const std::string& key) const {
    const std::string& v = str(key);
    if (v.empty()) throw UsageError(flag_name(key) + " is required");
    return v;
  }
  int64_t integer(const std::string& key) const {
    const std::string& v = str(key);
    int64_t x = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec != std::errc() || end != v.data() + v.size()) {
      throw ConfigError("option " + flag_name(key) + ": expected an integer, got '" + v + "'");
    }
    return x;
  }
  double real(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size()) {
      throw ConfigError("option " + flag_name(key) + ": expected a number, got '" + v + "'");
    }
    return x;
  }
  uint64_t seed() const { return static_cast<uint64_t>(integer("seed")); }

  TrainConfig train_config() const {
    KeyValues kv;
    for (const OptionDef& d : kTrainOptions) kv[d.key] = str(d.key);
    kv["seed"] = str("seed");
    TrainConfig c;
    apply_key_values(c, kv);
    return c;
  }

  fs::path out_path(const std::string& name) const { return out_dir_ / name; }
  std::ostream& out() { return out_; }

 private:
  KeyValues values_;
  fs::path out_dir_;
  std::ostream& out_;
};

// ---------------------------------------------------------------- helpers

struct Dataset {
  std::optional<Manifest> trainval;
  std::optional<Manifest> test;
  std::vector<std::string> warnings;
};

Dataset load_dataset(const std::string& root_text) {
  if (root_text.empty()) throw UsageError("--data is required");
  const fs::path root(root_text);
  if (!fs::exists(root)) {
    throw LayoutError("dataset root '" + root.string() + "' does not exist");
  }
  Dataset d;
  if (fs::is_regular_file(root)) {
    Manifest m = read_manifest(root);
    d.trainval = m;
    d.test = std::move(m);
    return d;
  }
  const bool has_trainval = fs::exists(root / "trainval.jsonl");
  const bool has_test = fs::exists(root / "test.jsonl");
  if (has_trainval || has_test) {
    if (has_trainval) d.trainval = read_manifest(root / "trainval.jsonl");
    if (has_test) d.test = read_manifest(root / "test.jsonl");
    return d;
  }
  if (fs::is_directory(root / "classes" / "jpg")) {
    FlickrLogos f = load_flickrlogos(root);
    d.trainval = std::move(f.trainval);
    d.test = std::move(f.test);
    d.warnings = std::move(f.warnings);
    return d;
  }
  throw LayoutError("'" + root.string() +
                    "' holds neither trainval.jsonl/test.jsonl nor a classes/jpg tree");
}

Manifest select_split(Context& ctx, const std::string& split) {
  Dataset d = load_dataset(ctx.str("data"));
  for (const std::string& w : d.warnings) ctx.out() << "warning: " << w << '\n';
  std::optional<Manifest>* m = nullptr;
  if (split == "trainval") {
    m = &d.trainval;
  } else if (split == "test") {
    m = &d.test;
  } else {
    throw ConfigError("unknown split '" + split + "' (expected trainval or test)");
  }
  if (!*m) throw LayoutError("dataset '" + ctx.str("data") + "' has no " + split + " split");
  (*m)->validate();
  return std::move(**m);
}

std::string file_safe(const std::string& name) {
  std::string s = name;
  for (char& c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) c = '_';
  }
  return s;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string map_text(const std::optional<double>& v) { return v ? fixed4(*v) : "N/A"; }

void write_report(Context& ctx, const APReport& report, const std::string& label) {
  write_ap_csv(report, ctx.out_path("ap.csv"));
  for (size_t c = 0; c < report.classes.size(); ++c) {
    if (!report.per_class[c].ap) continue;
    write_pr_csv(report.classes[c], report.per_class[c].curve,
                 ctx.out_path("pr_" + file_safe(report.classes[c]) + ".csv"));
  }
  for (size_t c = 0; c < report.classes.size(); ++c) {
    ctx.out() << report.classes[c] << ": " << map_text(report.per_class[c].ap) << '\n';
  }
  ctx.out() << label << '=' << map_text(report.mean_ap) << '\n';
}

bool is_detector_checkpoint(const fs::path& path) {
  const CheckpointFile file = read_checkpoint_file(path);
  try {
    return nlohmann::json::parse(file.spec_json).contains("detector");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + path.string() + "' has an unreadable spec: " + e.what());
  }
}

std::vector<ImageScores> read_scores(const fs::path& path, const Manifest& split) {
  std::map<std::string, int> labels;
  for (const ImageRecord& r : split.records) labels[r.id] = r.label;
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::vector<ImageScores> out;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ImageScores s;
    try {
      const auto j = nlohmann::json::parse(line);
      s.image = j.at("image").get<std::string>();
      s.scores = j.at("scores").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const auto it = labels.find(s.image);
    if (it == labels.end()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": image '" + s.image +
                      "' is not in split '" + split.split + "'");
    }
    s.label = it->second;
    labels.erase(it);
    out.push_back(std::move(s));
  }
  if (!labels.empty()) {
    throw DataError("'" + path.string() + "' has no scores for " + std::to_string(labels.size()) +
                    " images of split '" + split.split + "', e.g. '" + labels.begin()->first +
                    "'");
  }
  return out;
}

std::vector<ImageScores> classifier_scores(const Network& net, const Manifest& split,
                                           int64_t eval_size) {
  ImageBatcher batcher(split, network_mean(net));
  const InputSize size = eval_size > 0 ? InputSize{eval_size, eval_size}
                                       : InputSize{net.spec().nominal_h, net.spec().nominal_w};
  std::vector<ImageScores> out;
  for (size_t start = 0; start < batcher.size(); start += 32) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(batcher.size(), start + 32); ++i) idx.push_back(i);
    const Prediction p = net.predict(batcher.batch(idx, size));
    const int64_t k = p.probs.shape().sample_size();
    for (size_t i = 0; i < idx.size(); ++i) {
      const ImageRecord& r = split.records[idx[i]];
      const double* row = p.probs.ptr() + static_cast<int64_t>(i) * k;
      out.push_back({r.id, std::vector<double>(row, row + k), r.label});
    }
  }
  return out;
}

std::vector<ClassificationOutcome> read_outcomes(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<ClassificationOutcome> out;
  for (int line_no = 2; std::getline(in, line); ++line_no) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() < 4) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected image,label,predicted,confidence");
    }
    try {
      out.push_back({f[0], std::stoi(f[1]), std::stoi(f[2]), std::stod(f[3])});
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
  }
  return out;
}

void write_outcomes(const std::vector<ClassificationOutcome>& outcomes, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "image,label,predicted,confidence,correct\n";
  char buf[64];
  for (const ClassificationOutcome& o : outcomes) {
    std::snprintf(buf, sizeof buf, "%.17g", o.confidence);
    out << o.id << ',' << o.label << ',' << o.predicted << ',' << buf << ','
        << (o.correct() ? 1 : 0) << '\n';
  }
}

std::vector<RegionProposal> proposals_for(const Tensor& pixels, ProposalMode mode) {
  if (mode == ProposalMode::kWholeImage) return whole_image_proposal(pixels);
  return selective_search(pixels);
}

bool timed() { return num_threads() > 1; }

// ---------------------------------------------------------------- commands

void cmd_synth_data(Context& ctx) {
  SyntheticConfig c;
  c.num_classes = static_cast<int>(ctx.integer("classes"));
  c.class_offset = static_cast<int>(ctx.integer("class_offset"));
  c.train_per_class = static_cast<int>(ctx.integer("train_per_class"));
  c.test_per_class = static_cast<int>(ctx.integer("test_per_class"));
  c.train_background = static_cast<int>(ctx.integer("train_background"));
  c.test_background = static_cast<int>(ctx.integer("test_background"));
  c.image_size = static_cast<int>(ctx.integer("image_size"));
  c.scale_min = ctx.real("scale_min");
  c.scale_max = ctx.real("scale_max");
  c.noise = ctx.real("noise");
  c.texture_seed = static_cast<uint64_t>(ctx.integer("texture_seed"));
  const SyntheticDataset d = generate_synthetic(c, ctx.seed(), ctx.out_path(""));
  const SplitCounts tv = d.trainval.counts(), te = d.test.counts();
  ctx.out() << "trainval: " << tv.foreground << " foreground, " << tv.background
            << " background\n"
            << "test: " << te.foreground << " foreground, " << te.background << " background\n";
}

void cmd_pretrain(Context& ctx) {
  const TrainConfig config = ctx.train_config();
  const Manifest train = select_split(ctx, "trainval").foreground_only();
  const NetworkSpec spec = variant_spec(parse_variant(ctx.str("variant")),
                                        parse_profile(ctx.str("profile")), train.num_classes());
  PretrainResult r = pretrain_proxy(spec, train, config);
  save_checkpoint(r.net, ctx.out_path("model.ckpt"));
  r.log.write_csv(ctx.out_path("trainlog.csv"), timed());
  const auto totals = r.log.totals();
  ctx.out() << "pretrained " << ctx.str("variant") << " for " << totals.size()
            << " iterations, loss " << (totals.empty() ? 0.0 : totals.front()) << " -> "
            << (totals.empty() ? 0.0 : totals.back()) << '\n';
}

void finetune_detector(Context& ctx, const TrainConfig& config, const Manifest& train) {
  Network trunk = [&] {
    if (!ctx.str("from").empty()) return load_checkpoint(ctx.str("from"));
    VariantOptions vo;
    vo.aux_weight = ctx.real("aux_weight");
    return Network::build(variant_spec(parse_variant(ctx.str("variant")),
                                       parse_profile(ctx.str("profile")), train.num_classes(),
                                       vo),
                          Rng::derive(config.seed, 1));
  }();
  if (!trunk.buffers().count("input.mean")) {
    trunk.buffers()["input.mean"] = mean_buffer(dataset_mean(train));
  }
  DetectorConfig dc;
  dc.feature_layer = ctx.str("feature_layer");
  dc.pool_h = dc.pool_w = static_cast<int>(ctx.integer("pool"));
  dc.hidden = ctx.integer("hidden");
  dc.num_classes = train.num_classes();
  dc.input_size = ctx.integer("input_size");
  DetectionNet net = DetectionNet::build(trunk, dc, Rng::derive(config.seed, 6));
  DetectorTrainOptions options;
  options.mode = parse_proposal_mode(ctx.str("proposals"));
  options.fg_fraction = ctx.real("fg_fraction");
  const TrainLog log = train_detector(net, train, config, options);
  net.save(ctx.out_path("detector.ckpt"));
  log.write_csv(ctx.out_path("trainlog.csv"), timed());
  const auto totals = log.totals();
  ctx.out() << "trained detector (" << to_string(options.mode) << ") for " << totals.size()
            << " iterations, loss " << (totals.empty() ? 0.0 : totals.front()) << " -> "
            << (totals.empty() ? 0.0 : totals.back()) << '\n';
}

void cmd_finetune(Context& ctx) {
  const TrainConfig config = ctx.train_config();
  const std::string& task = ctx.str("task");
  if (task == "detect") {
    finetune_detector(ctx, config, select_split(ctx, "trainval"));
    return;
  }
  if (task != "classify") {
    throw ConfigError("unknown task '" + task + "' (expected classify or detect)");
  }
  const Manifest train = select_split(ctx, "trainval").foreground_only();
  SurgeryPlan plan;
  plan.variant = parse_variant(ctx.str("variant"));
  plan.num_classes = train.num_classes();
  plan.aux_weight = ctx.real("aux_weight");
  std::stringstream heads(ctx.str("heads"));
  for (std::string h; std::getline(heads, h, ',');) {
    if (!h.empty()) plan.heads.push_back(h);
  }
  Network source = [&] {
    if (!ctx.str("from").empty()) return load_checkpoint(ctx.str("from"));
    return Network::build(googlenet_spec(parse_profile(ctx.str("profile")), train.num_classes()),
                          Rng::derive(config.seed, 7));
  }();
  FineTuneResult r = fine_tune(source, plan, train, config);
  for (const std::string& w : r.warnings) ctx.out() << "warning: " << w << '\n';
  save_checkpoint(r.net, ctx.out_path("model.ckpt"));
  r.log.write_csv(ctx.out_path("trainlog.csv"), timed());
  const auto totals = r.log.totals();
  ctx.out() << "fine-tuned " << ctx.str("variant") << " for " << totals.size()
            << " iterations, loss " << (totals.empty() ? 0.0 : totals.front()) << " -> "
            << (totals.empty() ? 0.0 : totals.back()) << "; " << r.fresh.size()
            << " fresh parameters\n";
}

void cmd_eval_classify(Context& ctx) {
  const Manifest split = select_split(ctx, ctx.str("split")).foreground_only();
  const Network net = load_checkpoint(ctx.required("model"));
  const ClassificationReport report =
      evaluate_classification(net, split, ctx.integer("eval_size"));
  write_outcomes(report.outcomes, ctx.out_path("accuracy.csv"));
  ctx.out() << "accuracy=" << fixed4(report.accuracy) << '\n';
}

void cmd_eval_detect_image(Context& ctx) {
  const Manifest split = select_split(ctx, ctx.str("split"));
  std::vector<ImageScores> scores;
  if (!ctx.str("scores").empty()) {
    scores = read_scores(ctx.str("scores"), split);
  } else {
    const std::string& model = ctx.required("model");
    if (is_detector_checkpoint(model)) {
      const DetectionNet net = DetectionNet::load(model);
      for (const ImageRecord& r : split.records) {
        scores.push_back({r.id, image_posteriors(net, load_pixels(r)), r.label});
      }
    } else {
      scores = classifier_scores(load_checkpoint(model), split, ctx.integer("eval_size"));
    }
  }
  write_report(ctx, image_level_ap(scores, split.classes), "mAP");
}

void cmd_eval_detect_loc(Context& ctx) {
  const Manifest split = select_split(ctx, ctx.str("split"));
  std::vector<Detection> dets;
  if (!ctx.str("detections").empty()) {
    dets = read_detections(ctx.str("detections"));
  } else {
    const DetectionNet net = DetectionNet::load(ctx.required("model"));
    const ProposalMode mode = parse_proposal_mode(ctx.str("proposals"));
    DetectOptions options;
    options.score_threshold = ctx.real("score_threshold");
    options.nms_iou = ctx.real("nms_iou");
    for (const ImageRecord& r : split.records) {
      const Tensor pixels = load_pixels(r);
      auto found = detect(net, r.id, pixels, proposals_for(pixels, mode), options);
      dets.insert(dets.end(), found.begin(), found.end());
    }
    write_detections(dets, ctx.out_path("detections.jsonl"));
  }
  write_report(ctx, evaluate_localized(dets, split, ctx.real("iou")), "mAP");
}

void cmd_proposals(Context& ctx) {
  const ProposalMode mode = parse_proposal_mode(ctx.str("mode"));
  std::vector<std::pair<std::string, Tensor>> images;
  if (!ctx.str("image").empty()) {
    const fs::path p = ctx.str("image");
    images.emplace_back(p.stem().string(), decode_image(p));
  } else {
    for (const ImageRecord& r : select_split(ctx, ctx.str("split")).records) {
      images.emplace_back(r.id, load_pixels(r));
    }
  }
  const fs::path path = ctx.out_path("proposals.jsonl");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  size_t total = 0;
  for (const auto& [id, pixels] : images) {
    const auto proposals = proposals_for(pixels, mode);
    for (const RegionProposal& p : proposals) {
      const nlohmann::json j = {{"image", id},
                                {"rect", {p.rect.x, p.rect.y, p.rect.w, p.rect.h}},
                                {"source", std::string(to_string(p.source))},
                                {"level", p.hierarchy_level}};
      out << j.dump() << '\n';
    }
    total += proposals.size();
  }
  ctx.out() << total << " proposals over " << images.size() << " images ("
            << to_string(mode) << ")\n";
}

void cmd_analyze_bbox(Context& ctx) {
  const Manifest split = select_split(ctx, ctx.str("split")).foreground_only();
  std::vector<ClassificationOutcome> outcomes;
  if (!ctx.str("predictions").empty()) {
    outcomes = read_outcomes(ctx.str("predictions"));
  } else {
    const Network net = load_checkpoint(ctx.required("model"));
    outcomes = evaluate_classification(net, split, ctx.integer("eval_size")).outcomes;
  }
  const SizeAnalysis a = bbox_size_analysis(outcomes, split);
  write_size_csv(a, ctx.out_path("bbox_buckets.csv"));
  for (const SizeBucket& b : a.buckets) {
    ctx.out() << "bucket " << b.index << " (" << fixed4(b.lower) << ", " << fixed4(b.upper)
              << "]: " << b.correct << '/' << b.count << " accuracy=" << fixed4(b.accuracy())
              << '\n';
  }
  if (a.excluded) ctx.out() << a.excluded << " outcomes without boxes excluded\n";
}

void cmd_export_pr(Context& ctx) {
  const Manifest split = select_split(ctx, ctx.str("split"));
  APReport report;
  if (!ctx.str("detections").empty()) {
    report = evaluate_localized(read_detections(ctx.str("detections")), split, ctx.real("iou"));
  } else if (!ctx.str("scores").empty()) {
    report = image_level_ap(read_scores(ctx.str("scores"), split), split.classes);
  } else {
    throw UsageError("export-pr needs --detections or --scores");
  }
  size_t written = 0;
  for (size_t c = 0; c < report.classes.size(); ++c) {
    if (!report.per_class[c].ap) continue;
    write_pr_csv(report.classes[c], report.per_class[c].curve,
                 ctx.out_path("pr_" + file_safe(report.classes[c]) + ".csv"));
    ++written;
  }
  ctx.out() << "wrote " << written << " precision-recall curves\n";
}

// ---------------------------------------------------------------- driver

struct Command {
  std::string name;
  std::string description;
  std::vector<OptionDef> options;
  std::function<void(Context&)> run;
};

std::vector<OptionDef> concat(std::initializer_list<std::vector<OptionDef>> parts) {
  std::vector<OptionDef> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<Command> commands() {
  const std::vector<OptionDef> model = {{"model", "", "checkpoint to evaluate"}};
  const std::vector<OptionDef> eval_size = {{"eval_size", "0", "input size; 0 is nominal"}};
  return {
      {"synth-data",
       "render a synthetic logo dataset",
       concat({kCommonOptions,
               {{"classes", "8", "logo classes"},
                {"class_offset", "0", "first glyph index"},
                {"train_per_class", "40", "trainval images per class"},
                {"test_per_class", "20", "test images per class"},
                {"train_background", "0", "trainval images without a logo"},
                {"test_background", "0", "test images without a logo"},
                {"image_size", "128", "image side in pixels"},
                {"scale_min", "0.05", "smallest logo side / image side"},
                {"scale_max", "0.8", "largest logo side / image side"},
                {"noise", "0.02", "pixel noise std-dev"},
                {"texture_seed", "0", "background texture family"}}}),
       cmd_synth_data},
      {"pretrain",
       "train a network from scratch on a proxy dataset",
       concat({kCommonOptions,
               {{"data", "", "proxy dataset (trainval split is used)"},
                {"variant", "googlenet", "googlenet, googlenet-gp, full-classify, full-inception"},
                {"profile", "mini", "mini or full"}},
               kTrainOptions}),
       cmd_pretrain},
      {"finetune",
       "fine-tune a pretrained network for classification or detection",
       concat({kCommonOptions,
               {{"data", "", "target dataset (trainval split is used)"},
                {"from", "", "pretrained checkpoint; empty builds a fresh network"},
                {"task", "classify", "classify or detect"},
                {"variant", "googlenet-gp", "googlenet, googlenet-gp, full-classify, full-inception"},
                {"profile", "mini", "profile of a fresh network"},
                {"heads", "", "comma list of heads to re-initialize; empty is all"},
                {"aux_weight", "0.3", "loss weight of added auxiliary heads"},
                {"proposals", "selective-search", "detect: whole-image or selective-search"},
                {"fg_fraction", "0.25", "detect: foreground share of sampled regions"},
                {"feature_layer", "", "detect: trunk layer feeding RoI pooling"},
                {"pool", "2", "detect: RoI pooling grid side"},
                {"hidden", "128", "detect: hidden units of the region head"},
                {"input_size", "0", "detect: input side; 0 is nominal"}},
               kTrainOptions}),
       cmd_finetune},
      {"eval-classify",
       "classification accuracy on foreground images",
       concat({kCommonOptions, kDataOptions, model, eval_size}),
       cmd_eval_classify},
      {"eval-detect-image",
       "detection without localization: per-class AP of image rankings",
       concat({kCommonOptions, kDataOptions, model, eval_size,
               {{"scores", "", "JSON lines {image, scores} used instead of a model"}}}),
       cmd_eval_detect_image},
      {"eval-detect-loc",
       "detection with localization: IoU-matched per-class AP",
       concat({kCommonOptions, kDataOptions, model,
               {{"detections", "", "detections JSON lines used instead of a model"},
                {"proposals", "selective-search", "whole-image or selective-search"},
                {"score_threshold", "0.05", "minimum class score"},
                {"nms_iou", "0.3", "NMS overlap threshold"},
                {"iou", "0.5", "IoU needed for a true positive"}}}),
       cmd_eval_detect_loc},
      {"proposals",
       "region proposals for one image or a split",
       concat({kCommonOptions, kDataOptions,
               {{"image", "", "single PPM image instead of --data"},
                {"mode", "selective-search", "whole-image or selective-search"}}}),
       cmd_proposals},
      {"analyze-bbox",
       "accuracy by ground-truth box size quartile",
       concat({kCommonOptions, kDataOptions, model, eval_size,
               {{"predictions", "", "accuracy.csv from eval-classify instead of a model"}}}),
       cmd_analyze_bbox},
      {"export-pr",
       "precision-recall curves from detections or image scores",
       concat({kCommonOptions, kDataOptions,
               {{"detections", "", "detections JSON lines"},
                {"scores", "", "image scores JSON lines"},
                {"iou", "0.5", "IoU needed for a true positive"}}}),
       cmd_export_pr},
  };
}

KeyValues read_config(const fs::path& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  in >> std::ws;
  if (in.peek() != '{') return read_key_values(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path.string() + "': " + e.what());
  }
  if (j.contains("command") && j["command"] != command) {
    throw ConfigError("config '" + path.string() + "' records command '" +
                      j["command"].get<std::string>() + "', not '" + command + "'");
  }
  KeyValues kv;
  const nlohmann::json options = j.value("options", nlohmann::json::object());
  for (const auto& [k, v] : options.items()) {
    kv[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return kv;
}

// Output goes to a sibling staging directory that is moved into place only
// after the command succeeds.
class StagedOutput {
 public:
  explicit StagedOutput(fs::path target) : target_(std::move(target)) {
    const fs::path abs = fs::absolute(target_).lexically_normal();
    const fs::path parent = abs.has_filename() ? abs.parent_path() : abs.parent_path().parent_path();
    const std::string name = abs.has_filename() ? abs.filename().string()
                                                : abs.parent_path().filename().string();
    fs::create_directories(parent);
    staging_ = parent / ("." + name + ".staging-" + std::to_string(::getpid()));
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~StagedOutput() {
    std::error_code ec;
    if (!committed_) fs::remove_all(staging_, ec);
  }
  const fs::path& path() const { return staging_; }

  void commit() {
    if (!fs::exists(target_)) {
      fs::rename(staging_, target_);
    } else {
      merge(staging_, target_);
      fs::remove_all(staging_);
    }
    committed_ = true;
  }

 private:
  static void merge(const fs::path& from, const fs::path& to) {
    fs::create_directories(to);
    for (const auto& entry : fs::directory_iterator(from)) {
      const fs::path dest = to / entry.path().filename();
      if (entry.is_directory() && fs::is_directory(dest)) {
        merge(entry.path(), dest);
      } else {
        if (fs::exists(dest)) fs::remove_all(dest);
        fs::rename(entry.path(), dest);
      }
    }
  }

  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

void write_run_json(const std::string& command, const KeyValues& values, const fs::path& path) {
  nlohmann::json options = nlohmann::json::object();
  for (const auto& [k, v] : values) options[k] = v;
  const nlohmann::json j = {{"command", command}, {"options", options}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const std::vector<Command> cmds = commands();
  CLI::App app{"logonet: logo classification and detection with inception networks", "logonet"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::pair<std::string, CLI::Option*>>> bound;
  std::map<std::string, std::string> config_paths;
  for (const Command& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.description);
    auto& slots = bound[c.name];
    for (const OptionDef& d : c.options) slots[d.key].first = d.fallback;
    for (const OptionDef& d : c.options) {
      slots[d.key].second = sub->add_option(flag_name(d.key), slots[d.key].first, d.help)
                                ->capture_default_str();
    }
    sub->add_option("--config", config_paths[c.name],
                    "key = value file or run.json; flags take precedence");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsageError;
  }

  const Command* cmd = nullptr;
  for (const Command& c : cmds) {
    if (app.got_subcommand(c.name)) cmd = &c;
  }
  try {
    KeyValues values;
    for (const OptionDef& d : cmd->options) values[d.key] = d.fallback;
    if (!config_paths[cmd->name].empty()) {
      for (const auto& [k, v] : read_config(config_paths[cmd->name], cmd->name)) {
        const std::string key = normalize_key(k);
        if (!values.count(key)) {
          throw ConfigError("config key '" + k + "' is not an option of " + cmd->name);
        }
        values[key] = v;
      }
    }
    for (const auto& [key, slot] : bound[cmd->name]) {
      if (slot.second->count() > 0) values[key] = slot.first;
    }
    if (values["out"].empty()) throw UsageError("--out is required");

    Context probe(values, {}, out);
    const int64_t threads = probe.integer("threads");
    if (threads < 1) throw ConfigError("--threads must be >= 1");
    set_num_threads(static_cast<int>(threads));

    StagedOutput staged(values["out"]);
    Context ctx(values, staged.path(), out);
    cmd->run(ctx);
    write_run_json(cmd->name, values, staged.path() / "run.json");
    staged.commit();
    return kSuccess;
  } catch (const UsageError& e) {
    err << "error: " << one_line(e.what()) << "\nRun with --help for more information.\n";
    return kUsageError;
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kModuleError;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kModuleError;
  }
}

}  // namespace logonet::cli
