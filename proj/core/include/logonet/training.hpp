#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "logonet/data/manifest.hpp"
#include "logonet/network.hpp"

namespace logonet {

struct InputSize {
  int64_t h = 0;
  int64_t w = 0;
  friend bool operator==(const InputSize&, const InputSize&) = default;
  friend auto operator<=>(const InputSize&, const InputSize&) = default;
};
std::string to_string(const InputSize& size);
// "64" (square) or "64x48" (height x width).
InputSize parse_input_size(std::string_view text);

struct TrainConfig {
  int64_t batch_size = 32;
  int64_t iterations = 1000;
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  // Overrides the dropout probability of every head when set.
  std::optional<double> dropout_p;
  // Sizes sampled per batch. Empty means the network's nominal size.
  std::vector<InputSize> input_sizes;
  // Size used by evaluation; 0 means the nominal size.
  int64_t eval_size = 0;
  uint64_t seed = 0;

  void validate() const;
  SgdOptions sgd() const { return {lr, momentum, weight_decay}; }
};

using KeyValues = std::map<std::string, std::string>;

// Plain "key = value" lines; '#' starts a comment.
KeyValues read_key_values(const std::filesystem::path& path);
// Applies recognized keys; unknown keys are a ConfigError.
void apply_key_values(TrainConfig& config, const KeyValues& values);
KeyValues to_key_values(const TrainConfig& config);

// Default multi-size set for size-agnostic networks: nominal, 1.5x, 2x.
std::vector<InputSize> default_input_sizes(const NetworkSpec& spec);

// Sum of weights[i] * losses[i]. Throws ParameterError on negative weights
// or length mismatch.
double total_loss(std::span<const double> losses, std::span<const double> weights);

// Uniform draw from config.input_sizes (or the nominal size when empty).
// Several sizes, or a non-nominal size, on a fixed-size network is a
// ConfigError.
InputSize sample_input_size(const TrainConfig& config, const NetworkSpec& spec, Rng& rng);

// Per-channel mean over every pixel of every record.
std::array<double, 3> dataset_mean(const Manifest& manifest);
Tensor mean_buffer(const std::array<double, 3>& mean);
// The "input.mean" buffer of a network, or zeros when absent.
std::array<double, 3> network_mean(const Network& net);

// Decodes records once and serves preprocessed batches at any size,
// caching every resized image.
class ImageBatcher {
 public:
  ImageBatcher(const Manifest& manifest, std::array<double, 3> mean);
  size_t size() const { return labels_.size(); }
  const std::vector<int>& labels() const { return labels_; }
  Tensor batch(std::span<const size_t> indices, InputSize size);

 private:
  const Tensor& resized(size_t index, InputSize size);

  std::vector<std::filesystem::path> paths_;
  std::vector<int> labels_;
  std::array<double, 3> mean_;
  std::map<InputSize, std::vector<Tensor>> cache_;
};

struct TrainLogEntry {
  int64_t iteration = 0;
  std::string head;
  double loss = 0.0;
  double total_loss = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;

  // Total loss per iteration, in order.
  std::vector<double> totals() const;
  // CSV with header iteration,head,loss,total_loss,seconds. With
  // include_time false the seconds column is written as 0 so that logs are
  // byte-reproducible.
  void write_csv(const std::filesystem::path& path, bool include_time) const;
  static TrainLog read_csv(const std::filesystem::path& path);
};

// SGD on labels of `train` (foreground records). Iterations continue the
// network's counter. Loss becoming non-finite is a TrainingError.
TrainLog train_classifier(Network& net, const Manifest& train, const TrainConfig& config);

struct PretrainResult {
  Network net;
  TrainLog log;
};
// Trains a freshly built `spec` on a proxy classification set.
PretrainResult pretrain_proxy(const NetworkSpec& spec, const Manifest& proxy,
                              const TrainConfig& config);

struct SurgeryPlan {
  Variant variant = Variant::kGoogLeNetGP;
  int64_t num_classes = 32;
  // Heads whose classifiers are re-initialized; empty means every head.
  std::vector<std::string> heads;
  double aux_weight = 0.3;
  // Full-Inception first layer; defaults to the profile's default.
  std::optional<InceptionSpec> first_inception;
};

struct SurgeryResult {
  Network net;
  std::vector<std::string> fresh;  // parameters not taken from the source
  std::vector<std::string> warnings;
};
// Applies the variant transform and head re-initialization to a pretrained
// network. Dropout override and seed come from `config`.
SurgeryResult apply_surgery(const Network& pretrained, const SurgeryPlan& plan,
                            const TrainConfig& config);

struct FineTuneResult {
  Network net;
  TrainLog log;
  std::vector<std::string> fresh;
  std::vector<std::string> warnings;
};
FineTuneResult fine_tune(const Network& pretrained, const SurgeryPlan& plan,
                         const Manifest& train, const TrainConfig& config);

struct ClassificationOutcome {
  std::string id;
  int label = 0;
  int predicted = 0;
  double confidence = 0.0;  // probability of the predicted class
  bool correct() const { return label == predicted; }
};

struct ClassificationReport {
  double accuracy = 0.0;
  std::vector<ClassificationOutcome> outcomes;
};

// Foreground-only evaluation through predict(). Background records are a
// DataError.
ClassificationReport evaluate_classification(const Network& net, const Manifest& split,
                                             int64_t eval_size = 0);

}  // namespace logonet
