// Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//
//   logonet_acceptance            run every criterion
//   logonet_acceptance 1 4 8      run a subset
//
// Criterion 13 reads the dataset root from LOGONET_FLICKRLOGOS_ROOT and is
// skipped when the variable is unset.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "logonet/data/flickrlogos.hpp"
#include "logonet/detection/evaluation.hpp"
#include "logonet/detection/proposals.hpp"
#include "logonet/error.hpp"
#include "logonet/parallel.hpp"
#include "logonet/training.hpp"
#include "logonet_cli/cli.hpp"
#include "support/fixtures.hpp"
#include "support/gradient_suite.hpp"
#include "support/oracles.hpp"

namespace logonet::acceptance {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

enum class Status { kPass, kFail, kSkip };

struct Outcome {
  Status status = Status::kPass;
  std::string detail;
};

// Collects failed checks; the first few are reported.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_.push_back(what);
  }
  void note(const std::string& text) { info_.push_back(text); }

  Outcome outcome() const {
    std::string detail;
    for (const std::string& s : info_) detail += (detail.empty() ? "" : "; ") + s;
    for (const std::string& s : notes_) detail += (detail.empty() ? "" : "; ") + ("failed: " + s);
    if (failures_ > 3) detail += "; +" + std::to_string(failures_ - 3) + " more";
    return {failures_ ? Status::kFail : Status::kPass, detail};
  }

 private:
  int failures_ = 0;
  std::vector<std::string> notes_;
  std::vector<std::string> info_;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string sci(double v) {
  std::ostringstream s;
  s << std::scientific << std::setprecision(2) << v;
  return s.str();
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::map<std::string, std::string> hashes(const Network& net) {
  return fixture::parameter_hashes(net);
}

// ---- 1 ---------------------------------------------------------------------------

Outcome gradient_suite_criterion() {
  Checks c;
  const auto t0 = Clock::now();
  const auto results = gradient_suite::run(20);
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  for (const auto& r : results) {
    c.expect(r.instances >= 20, r.op + " ran " + std::to_string(r.instances) + " instances");
    c.expect(r.max_error < 1e-4, r.op + " max rel error " + sci(r.max_error));
    worst = std::max(worst, r.max_error);
  }
  const std::set<std::string> required = {"conv2d",   "maxpool2d",    "avgpool2d",
                                          "global_avg_pool", "roi_pool", "linear",
                                          "relu",     "dropout_mask", "softmax_cross_entropy",
                                          "detection_loss"};
  std::set<std::string> seen;
  for (const auto& r : results) seen.insert(r.op);
  for (const std::string& op : required) c.expect(seen.count(op) > 0, op + " not covered");
  c.expect(elapsed < 120.0, "runtime " + fmt(elapsed, 1) + " s >= 120 s");
  c.note(std::to_string(results.size()) + " ops x 20 seeds, worst rel error " + sci(worst) +
         ", " + fmt(elapsed, 1) + " s");
  return c.outcome();
}

// ---- 2 ---------------------------------------------------------------------------

Outcome gp_shape_criterion() {
  Checks c;
  const Network gp = Network::build(variant_spec(Variant::kGoogLeNetGP, Profile::kMini, 32), 1);
  Rng rng(2);
  for (int64_t s : {64, 96, 128}) {
    const auto heads = gp.forward(oracle::random_tensor({2, 3, s, s}, 3), Mode::kTrain, &rng);
    for (const HeadOutput& h : heads) {
      c.expect(h.logits.shape() == Shape{2, 32, 1, 1},
               h.head + " at " + std::to_string(s) + " gave " + to_string(h.logits.shape()));
    }
  }
  const Network fixed = Network::build(variant_spec(Variant::kGoogLeNet, Profile::kMini, 32), 1);
  bool rejected = false;
  try {
    fixed.forward(oracle::random_tensor({1, 3, 96, 96}, 4), Mode::kTest);
  } catch (const DimensionError&) {
    rejected = true;
  }
  c.expect(rejected, "non-GP net accepted a 96x96 input");
  c.note("logits (2, 32) at 64, 96 and 128; non-GP rejects 96");
  return c.outcome();
}

// ---- 3 ---------------------------------------------------------------------------

Outcome full_classify_criterion() {
  Checks c;
  Network net = Network::build(variant_spec(Variant::kFullClassify, Profile::kMini, 8), 5);
  const NetworkSpec& spec = net.spec();
  std::set<std::string> anchors;
  for (const HeadSpec& h : spec.heads) anchors.insert(h.anchor);
  c.expect(static_cast<int>(spec.heads.size()) == spec.inception_count() &&
               static_cast<int>(anchors.size()) == spec.inception_count(),
           std::to_string(spec.heads.size()) + " heads for " +
               std::to_string(spec.inception_count()) + " inception layers");
  const Tensor batch = oracle::random_tensor({8, 3, 64, 64}, 6);
  const Prediction before = net.predict(batch);
  int zeroed = 0;
  for (Parameter& p : net.parameters()) {
    const std::string layer = owning_layer(p.name);
    for (const HeadSpec& h : spec.heads) {
      if (!h.final && layer.rfind(h.name + "_", 0) == 0) {
        p.value.mutable_value().fill(0.0);
        ++zeroed;
        break;
      }
    }
  }
  const Prediction after = net.predict(batch);
  c.expect(zeroed > 0, "no auxiliary parameters found");
  c.expect(before.classes == after.classes && before.probs == after.probs,
           "predict() changed after zeroing auxiliary heads");
  c.note(std::to_string(spec.heads.size()) + " heads, " + std::to_string(zeroed) +
         " auxiliary tensors zeroed, predictions bit-identical");
  return c.outcome();
}

// ---- 4 ---------------------------------------------------------------------------

Outcome warp_criterion() {
  Checks c;
  const Network pre = Network::build(variant_spec(Variant::kGoogLeNet, Profile::kMini, 8), 7);
  const Tensor donor = pre.find_parameter("conv1.weight")->value.value();
  const int64_t k = donor.shape().h;
  const char* groups[] = {"inception0/1x1", "inception0/3x3", "inception0/5x5"};

  InceptionSpec same = default_first_inception(Profile::kMini);
  same.kernels = {static_cast<int>(k), static_cast<int>(k), static_cast<int>(k)};
  const WarpResult identity = warp_first_layer_to_inception(pre, same, 8);
  int exact = 0;
  for (const WarpAssignment& a : identity.assignments) {
    const Tensor& w = identity.net.find_parameter(std::string(groups[a.branch]) + ".weight")->value.value();
    bool equal = true;
    for (int64_t j = 0; j < w.shape().c; ++j)
      for (int64_t y = 0; y < k; ++y)
        for (int64_t x = 0; x < k; ++x)
          equal &= w.at(a.filter, j, y, x) == donor.at(a.donor, j % donor.shape().c, y, x);
    c.expect(equal, std::string(groups[a.branch]) + " filter " + std::to_string(a.filter) +
                        " differs from its donor");
    exact += equal ? 1 : 0;
  }

  double worst = 0.0;
  const InceptionSpec targets[] = {default_first_inception(Profile::kMini),
                                   {6, 4, 7, 4, 5, 3, {1, 3, 7}, 1},
                                   {3, 2, 2, 2, 2, 2, {3, 7, 9}, 2}};
  for (const InceptionSpec& target : targets) {
    const WarpResult r = warp_first_layer_to_inception(pre, target, 9);
    for (const WarpAssignment& a : r.assignments) {
      const Tensor& w = r.net.find_parameter(std::string(groups[a.branch]) + ".weight")->value.value();
      const int64_t tk = w.shape().h;
      const Tensor want = oracle::bilinear_resize(donor.sample(a.donor), tk, tk);
      for (int64_t j = 0; j < w.shape().c; ++j)
        for (int64_t y = 0; y < tk; ++y)
          for (int64_t x = 0; x < tk; ++x)
            worst = std::max(worst, std::abs(w.at(a.filter, j, y, x) -
                                             want.at(0, j % donor.shape().c, y, x)));
    }
  }
  c.expect(worst <= 1e-12, "bilinear oracle deviation " + sci(worst));
  c.note(std::to_string(exact) + " identity filters exact; oracle max deviation " + sci(worst));
  return c.outcome();
}

// ---- 5 ---------------------------------------------------------------------------

Outcome head_surgery_criterion() {
  Checks c;
  const Network net = Network::build(variant_spec(Variant::kGoogLeNetGP, Profile::kMini, 1000), 10);
  const auto before = hashes(net);
  const HeadSpec final_head = net.spec().final_head();
  const Network out = reinit_head(net.clone(), final_head.name, 32, 11);
  const auto after = hashes(out);
  const std::vector<std::string> named = final_head.linear_names();
  const std::string last = named.back();
  int changed = 0, kept = 0;
  for (const auto& [name, hash] : before) {
    const bool in_head = owning_layer(name) == last;
    const bool same = after.count(name) && after.at(name) == hash;
    if (in_head) {
      c.expect(!same, name + " was not re-initialized");
      changed += same ? 0 : 1;
    } else {
      c.expect(same, name + " changed outside the head");
      kept += same ? 1 : 0;
    }
  }
  const int64_t before_dim = net.find_parameter(last + ".weight")->shape().n;
  const int64_t after_dim = out.find_parameter(last + ".weight")->shape().n;
  c.expect(before_dim == 1000 && after_dim == 32,
           "output dim " + std::to_string(before_dim) + " -> " + std::to_string(after_dim));
  c.note(last + " " + std::to_string(before_dim) + " -> " + std::to_string(after_dim) + ", " +
         std::to_string(changed) + " tensors changed, " + std::to_string(kept) + " unchanged");
  return c.outcome();
}

// ---- 6 ---------------------------------------------------------------------------

Outcome chance_criterion(const fs::path& work) {
  Checks c;
  SyntheticConfig sc;
  sc.num_classes = 32;
  sc.train_per_class = 1;
  sc.test_per_class = 100;
  sc.image_size = 64;
  const SyntheticDataset data = generate_synthetic(sc, 12, work / "chance");
  const Network net = Network::build(variant_spec(Variant::kGoogLeNetGP, Profile::kMini, 32), 13);
  const ClassificationReport r = evaluate_classification(net, data.test);
  const double n = static_cast<double>(r.outcomes.size());
  const double p = 1.0 / 32;
  const double sigma = std::sqrt(p * (1 - p) / n);
  c.expect(r.outcomes.size() == 3200, std::to_string(r.outcomes.size()) + " images");
  c.expect(std::abs(r.accuracy - p) <= 3 * sigma,
           "accuracy " + fmt(r.accuracy) + " outside 0.0312 +- " + fmt(3 * sigma));
  // Other initializations, for context only.
  std::string others;
  for (uint64_t seed = 14; seed < 18; ++seed) {
    const Network other =
        Network::build(variant_spec(Variant::kGoogLeNetGP, Profile::kMini, 32), seed);
    others += (others.empty() ? "" : " ") + fmt(evaluate_classification(other, data.test).accuracy);
  }
  c.note("accuracy " + fmt(r.accuracy) + " on " + std::to_string(r.outcomes.size()) +
         " images, chance 0.0312 +- " + fmt(3 * sigma) + " (3 sigma); init seeds 14-17 give " +
         others);
  return c.outcome();
}

// ---- 7 and 11 ----------------------------------------------------------------------

struct DeskRun {
  ClassificationReport report;
  Manifest test;
  double loss_ratio = 0.0;
  double seconds = 0.0;
  double pretrain_accuracy = 0.0;
};

// Proxy pretraining on glyphs 8..15, then GoogLeNet-GP fine-tuning on
// glyphs 0..7 (320 train / 160 test, logo scales 0.05 to 0.8).
const DeskRun& desk_run(const fs::path& work) {
  static std::optional<DeskRun> run;
  if (run) return *run;
  const auto t0 = Clock::now();
  SyntheticConfig target;  // 8 classes, 40 + 20 per class, 128 px, scales 0.05..0.8
  const SyntheticDataset data = generate_synthetic(target, 7, work / "desk_target");
  SyntheticConfig proxy_cfg;
  proxy_cfg.class_offset = 8;
  const SyntheticDataset proxy = generate_synthetic(proxy_cfg, 8, work / "desk_proxy");

  TrainConfig pre_cfg;
  pre_cfg.iterations = 300;
  pre_cfg.lr = 0.01;
  pre_cfg.seed = 1;
  const PretrainResult pre = pretrain_proxy(googlenet_spec(Profile::kMini, 8), proxy.trainval, pre_cfg);

  TrainConfig ft;
  ft.batch_size = 32;
  ft.iterations = 2000;
  ft.lr = 0.01;
  ft.dropout_p = 0.9;
  ft.seed = 2;
  ft.input_sizes = {{64, 64}, {96, 96}, {128, 128}};
  SurgeryPlan plan;
  plan.variant = Variant::kGoogLeNetGP;
  plan.num_classes = 8;
  const FineTuneResult tuned = fine_tune(pre.net, plan, data.trainval, ft);

  const std::vector<double> totals = tuned.log.totals();
  double first = 0, last = 0;
  const size_t head = std::min<size_t>(10, totals.size());
  const size_t tail = std::min<size_t>(1000, totals.size());
  for (size_t i = 0; i < head; ++i) first += totals[i];
  for (size_t i = totals.size() - tail; i < totals.size(); ++i) last += totals[i];
  DeskRun r;
  r.loss_ratio = (last / static_cast<double>(tail)) / (first / static_cast<double>(head));
  r.report = evaluate_classification(tuned.net, data.test);
  r.test = data.test;
  r.pretrain_accuracy = evaluate_classification(pre.net, proxy.test).accuracy;
  r.seconds = seconds_since(t0);
  run = std::move(r);
  return *run;
}

Outcome desk_learning_criterion(const fs::path& work) {
  Checks c;
  const DeskRun& r = desk_run(work);
  c.expect(r.test.records.size() == 160, std::to_string(r.test.records.size()) + " test images");
  c.expect(r.report.accuracy >= 0.90, "test accuracy " + fmt(r.report.accuracy) + " < 0.90");
  c.expect(r.loss_ratio < 0.20, "loss ratio " + fmt(r.loss_ratio) + " >= 0.20");
  // Budget is 15 min on 4 cores; this run uses num_threads() workers.
  c.expect(r.seconds <= 900.0 * 4 / std::max(1, num_threads()),
           "runtime " + fmt(r.seconds, 0) + " s over the scaled budget");
  c.note("accuracy " + fmt(r.report.accuracy) + ", final-1000 / first-10 loss " +
         fmt(r.loss_ratio) + ", " + fmt(r.seconds, 0) + " s on " +
         std::to_string(num_threads()) + " thread(s), proxy accuracy " +
         fmt(r.pretrain_accuracy));
  return c.outcome();
}

Outcome bbox_trend_criterion(const fs::path& work) {
  Checks c;
  const DeskRun& r = desk_run(work);
  const SizeAnalysis a = bbox_size_analysis(r.report.outcomes, r.test);
  c.expect(a.buckets.size() == 4, std::to_string(a.buckets.size()) + " buckets");
  if (a.buckets.size() == 4) {
    const double small = a.buckets.front().accuracy();
    const double large = a.buckets.back().accuracy();
    c.expect(small <= large, "smallest quartile " + fmt(small) + " > largest " + fmt(large));
    std::string per;
    for (const SizeBucket& b : a.buckets) per += (per.empty() ? "" : " ") + fmt(b.accuracy(), 3);
    c.note("quartile accuracies " + per + " (area fraction cuts " + fmt(a.quartiles[0]) + ", " +
           fmt(a.quartiles[1]) + ", " + fmt(a.quartiles[2]) + ")");
  }
  return c.outcome();
}

// ---- 8 ---------------------------------------------------------------------------

Outcome ap_oracle_criterion() {
  Checks c;
  Rng rng(14);
  int instances = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const int images = 1 + static_cast<int>(rng.below(4));
    std::vector<std::pair<std::string, BBox>> gt_pairs;
    std::vector<GroundTruthBox> gt;
    const int n_gt = 1 + static_cast<int>(rng.below(10));
    auto random_box = [&] {
      return BBox{std::floor(rng.uniform(0, 20)), std::floor(rng.uniform(0, 20)),
                  std::floor(rng.uniform(2, 10)), std::floor(rng.uniform(2, 10)), 0};
    };
    for (int g = 0; g < n_gt; ++g) {
      const std::string img = "img" + std::to_string(rng.below(static_cast<uint64_t>(images)));
      const BBox b = random_box();
      gt_pairs.push_back({img, b});
      gt.push_back({img, b});
    }
    std::vector<Detection> dets;
    const int n_det = static_cast<int>(rng.below(21));
    for (int d = 0; d < n_det; ++d) {
      BBox b = random_box();
      std::string img = "img" + std::to_string(rng.below(static_cast<uint64_t>(images)));
      if (rng.bernoulli(0.6)) {
        const GroundTruthBox& g = gt[rng.below(gt.size())];
        b = g.rect;
        b.x += std::floor(rng.uniform(-2, 3));
        b.y += std::floor(rng.uniform(-2, 3));
        img = g.image;
      }
      dets.push_back({img, b, std::round(rng.uniform(0, 1) * 5) / 5});
    }
    const ClassAP got = average_precision(dets, gt, 0.5);
    const double want = oracle::brute_force_ap(dets, gt_pairs, 0.5);
    c.expect(got.ap.has_value() && *got.ap == want,
             "localized instance " + std::to_string(inst) + ": " +
                 (got.ap ? std::to_string(*got.ap) : "N/A") + " vs " + std::to_string(want));
    ++instances;
  }
  for (int inst = 0; inst < 200; ++inst) {
    std::vector<ImageScores> images;
    const int n = 1 + static_cast<int>(rng.below(8));
    for (int i = 0; i < n; ++i) {
      images.push_back({"im" + std::to_string(i),
                        {std::round(rng.uniform(0, 1) * 4) / 4, std::round(rng.uniform(0, 1) * 4) / 4},
                        static_cast<int>(rng.below(3)) - 1});
    }
    const APReport r = image_level_ap(images, {"a", "b"});
    for (int cls = 0; cls < 2; ++cls) {
      // Ties broken by image id, matching the documented ranking.
      std::vector<std::pair<double, bool>> ranked;
      int64_t positives = 0;
      for (const ImageScores& im : images) {
        ranked.push_back({im.scores[static_cast<size_t>(cls)], im.label == cls});
        positives += im.label == cls ? 1 : 0;
      }
      const auto& ap = r.per_class[static_cast<size_t>(cls)].ap;
      if (positives == 0) {
        c.expect(!ap.has_value(), "image-level instance " + std::to_string(inst) + " not N/A");
        continue;
      }
      const double want = oracle::ap_from_pr(oracle::brute_force_pr(ranked, positives));
      c.expect(ap.has_value() && *ap == want,
               "image-level instance " + std::to_string(inst) + " class " + std::to_string(cls));
    }
    ++instances;
  }
  const ClassAP hand = ranked_average_precision({{0.9, true}, {0.8, false}, {0.7, true}}, 2);
  c.expect(hand.ap && std::abs(*hand.ap - 0.8333333333333333) <= 1e-12,
           "hand case " + (hand.ap ? std::to_string(*hand.ap) : std::string("N/A")));
  c.note(std::to_string(instances) + " random instances exact; hand case " +
         (hand.ap ? fmt(*hand.ap, 12) : "N/A"));
  return c.outcome();
}

// ---- 9 ---------------------------------------------------------------------------

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o, e;
  const int code = cli::run(args, o, e);
  if (out) *out = o.str() + e.str();
  return code;
}

Outcome whole_image_criterion(const fs::path& work) {
  Checks c;
  // Three classes, but the test split holds only classes 0 and 1 plus
  // background images.
  SyntheticConfig sc = fixture::small_synthetic(3, 1, 3);
  sc.test_background = 2;
  const fs::path dir = work / "whole_image";
  SyntheticDataset data = generate_synthetic(sc, 15, dir);
  Manifest test = data.test;
  std::erase_if(test.records, [](const ImageRecord& r) { return r.label == 2; });
  write_manifest(test, dir / "test.jsonl");
  {
    std::ofstream scores(dir / "oracle_scores.jsonl");
    for (const ImageRecord& r : test.records) {
      std::vector<double> s(4, 0.0);
      s[static_cast<size_t>(r.foreground() ? r.label : 3)] = 1.0;
      scores << nlohmann::json{{"image", r.id}, {"scores", s}}.dump() << "\n";
    }
  }
  std::string printed;
  const int code = cli({"eval-detect-image", "--data", dir.string(), "--scores",
                        (dir / "oracle_scores.jsonl").string(), "--out", (work / "whole_image_out").string()},
                       &printed);
  c.expect(code == 0, "exit " + std::to_string(code) + ": " + printed);
  const std::string ap = slurp(work / "whole_image_out" / "ap.csv");
  const std::string absent = data.test.classes[2];
  c.expect(ap.find(absent + ",N/A") != std::string::npos, "absent class not N/A:\n" + ap);
  c.expect(ap.find("mAP,1") != std::string::npos, "mAP not 1:\n" + ap);
  c.expect(printed.find("mAP=1.0000") != std::string::npos, "summary: " + printed);
  c.note("oracle scores give mAP 1.0000 over 2 classes; " + absent + " reported N/A");
  return c.outcome();
}

// ---- 10 --------------------------------------------------------------------------

Outcome selective_search_criterion() {
  Checks c;
  const auto uniform = selective_search(Tensor({1, 3, 40, 40}, 0.3));
  c.expect(uniform.size() == 1 && uniform[0].rect == BBox{0, 0, 40, 40},
           "uniform image gave " + std::to_string(uniform.size()) + " proposals");
  int images = 0;
  size_t total = 0;
  for (uint64_t seed = 0; seed < 8; ++seed) {
    const int64_t size = 48 + 16 * static_cast<int64_t>(seed % 3);
    const RenderedImage img = render_synthetic(static_cast<int>(seed * 7 % 64), 0.3 + 0.05 * seed,
                                               static_cast<int>(size), seed, 0.02);
    const SelectiveSearchResult r = selective_search_detailed(img.pixels);
    const std::string tag = "image " + std::to_string(seed);
    c.expect(r.merges == r.initial_segments - 1, tag + " merges");
    c.expect(!r.proposals.empty() &&
                 r.proposals.back().rect == BBox{0, 0, static_cast<double>(size), static_cast<double>(size)},
             tag + " final proposal is not the full image");
    c.expect(static_cast<int>(r.proposals.size()) <= 2 * r.initial_segments - 1, tag + " count");
    std::set<std::tuple<double, double, double, double>> unique;
    for (const RegionProposal& p : r.proposals) {
      c.expect(p.rect.x >= 0 && p.rect.y >= 0 && p.rect.w > 0 && p.rect.h > 0 &&
                   p.rect.x + p.rect.w <= size && p.rect.y + p.rect.h <= size,
               tag + " out-of-bounds proposal");
      c.expect(unique.insert({p.rect.x, p.rect.y, p.rect.w, p.rect.h}).second,
               tag + " duplicate proposal");
    }
    ++images;
    total += r.proposals.size();
  }
  c.note("uniform image -> 1 proposal; " + std::to_string(images) + " images, " +
         std::to_string(total) + " proposals, all in bounds and unique");
  return c.outcome();
}

// ---- 12 --------------------------------------------------------------------------

Outcome reproducibility_criterion(const fs::path& work) {
  Checks c;
  const fs::path root = work / "repro";
  const std::string data = (root / "data").string();
  auto at = [&](const std::string& step) { return (root / step).string(); };
  const std::vector<std::pair<std::string, std::vector<std::string>>> steps = {
      {"data", {"synth-data", "--classes", "3", "--train-per-class", "4", "--test-per-class",
                "2", "--test-background", "1", "--image-size", "64", "--seed", "21"}},
      {"pre", {"pretrain", "--data", data, "--iterations", "3", "--batch-size", "4", "--seed", "22"}},
      {"ft", {"finetune", "--data", data, "--from", at("pre") + "/model.ckpt", "--iterations",
              "3", "--batch-size", "4", "--input-sizes", "64,96", "--dropout-p", "0.9", "--seed",
              "23"}},
      {"fi", {"finetune", "--data", data, "--from", at("pre") + "/model.ckpt", "--variant",
              "full-inception", "--iterations", "3", "--batch-size", "4", "--seed", "25"}},
      {"eval", {"eval-classify", "--data", data, "--model", at("ft") + "/model.ckpt"}},
      {"bbox", {"analyze-bbox", "--data", data, "--predictions", at("eval") + "/accuracy.csv"}},
      {"det", {"finetune", "--task", "detect", "--data", data, "--from", at("pre") + "/model.ckpt",
               "--iterations", "3", "--batch-size", "8", "--seed", "24"}},
      {"img", {"eval-detect-image", "--data", data, "--model", at("det") + "/detector.ckpt"}},
      {"loc", {"eval-detect-loc", "--data", data, "--model", at("det") + "/detector.ckpt"}},
      {"props", {"proposals", "--data", data, "--mode", "selective-search"}},
      {"pr", {"export-pr", "--data", data, "--detections", at("loc") + "/detections.jsonl"}},
  };
  int files = 0;
  for (const auto& [name, args] : steps) {
    std::vector<std::string> first = args;
    for (const char* extra : {"--threads", "1", "--out"}) first.push_back(extra);
    first.push_back(at(name));
    std::string printed;
    if (cli(first, &printed) != 0) {
      c.expect(false, name + " failed: " + printed);
      continue;
    }
    const std::string command =
        nlohmann::json::parse(slurp(root / name / "run.json")).at("command").get<std::string>();
    const fs::path again = root / (name + "_again");
    if (cli({command, "--config", (root / name / "run.json").string(), "--out", again.string()},
            &printed) != 0) {
      c.expect(false, name + " rerun failed: " + printed);
      continue;
    }
    // run.json records --out, so only its other options must match.
    auto options = [](const fs::path& run_json) {
      nlohmann::json j = nlohmann::json::parse(slurp(run_json));
      j["options"].erase("out");
      return j.dump();
    };
    c.expect(options(root / name / "run.json") == options(again / "run.json"),
             name + "/run.json options differ");
    for (const auto& e : fs::recursive_directory_iterator(root / name)) {
      if (!e.is_regular_file() || e.path().filename() == "run.json") continue;
      const fs::path rel = fs::relative(e.path(), root / name);
      c.expect(fs::exists(again / rel) && slurp(e.path()) == slurp(again / rel),
               name + "/" + rel.string() + " differs");
      ++files;
    }
  }
  c.note(std::to_string(steps.size()) + " commands rerun from run.json, " +
         std::to_string(files) + " files byte-identical (checkpoints included)");
  return c.outcome();
}

// ---- 13 --------------------------------------------------------------------------

Outcome real_dataset_criterion() {
  const char* root = std::getenv("LOGONET_FLICKRLOGOS_ROOT");
  if (!root || !*root) return {Status::kSkip, "LOGONET_FLICKRLOGOS_ROOT not set"};
  Checks c;
  const FlickrLogos data = load_flickrlogos(root);
  const SplitCounts tv = data.trainval.counts();
  const SplitCounts te = data.test.counts();
  c.expect(tv.foreground == 1280 && te.foreground == 960,
           "foreground " + std::to_string(tv.foreground) + "/" + std::to_string(te.foreground));
  c.expect(tv.background == 3000 && te.background == 3000,
           "background " + std::to_string(tv.background) + "/" + std::to_string(te.background));
  c.note("trainval " + std::to_string(tv.foreground) + " fg + " + std::to_string(tv.background) +
         " bg, test " + std::to_string(te.foreground) + " fg + " + std::to_string(te.background) + " bg");
  return c.outcome();
}

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome(const fs::path&)> run;
};

int main_impl(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  const fs::path work = fixture::scratch("acceptance");
  const std::vector<Criterion> criteria = {
      {1, "gradient suite", [](const fs::path&) { return gradient_suite_criterion(); }},
      {2, "GP shape invariance", [](const fs::path&) { return gp_shape_criterion(); }},
      {3, "FullClassify structure", [](const fs::path&) { return full_classify_criterion(); }},
      {4, "warp identity", [](const fs::path&) { return warp_criterion(); }},
      {5, "head surgery", [](const fs::path&) { return head_surgery_criterion(); }},
      {6, "chance baseline", chance_criterion},
      {7, "desk-scale learning", desk_learning_criterion},
      {8, "AP oracle equivalence", [](const fs::path&) { return ap_oracle_criterion(); }},
      {9, "whole-image detection path", whole_image_criterion},
      {10, "selective search invariants", [](const fs::path&) { return selective_search_criterion(); }},
      {11, "bbox-size trend", bbox_trend_criterion},
      {12, "reproducibility", reproducibility_criterion},
      {13, "real dataset structure", [](const fs::path&) { return real_dataset_criterion(); }},
  };
  int failed = 0;
  for (const Criterion& cr : criteria) {
    if (!selected.empty() && !selected.count(cr.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = cr.run(work);
    } catch (const std::exception& e) {
      o = {Status::kFail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Status::kPass ? "PASS" : o.status == Status::kFail ? "FAIL" : "SKIP";
    failed += o.status == Status::kFail ? 1 : 0;
    std::cout << "criterion " << std::setw(2) << cr.id << " " << tag << "  " << cr.name << " ("
              << fmt(seconds_since(t0), 1) << " s): " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}

}  // namespace
}  // namespace logonet::acceptance

int main(int argc, char** argv) { return logonet::acceptance::main_impl(argc, argv); }
