#include "logonet/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "logonet/data/image.hpp"
#include "logonet/error.hpp"

namespace logonet {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(const std::string& key, const std::string& text) {
  size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError("'" + key + "' expects a number, got '" + text + "'");
  }
  return v;
}

int64_t parse_int(const std::string& key, const std::string& text) {
  size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError("'" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

constexpr uint64_t kDropoutStream = 2;
constexpr uint64_t kShuffleStream = 3;
constexpr uint64_t kSizeStream = 4;
constexpr uint64_t kInitStream = 1;

}  // namespace

std::string to_string(const InputSize& size) {
  if (size.h == size.w) return std::to_string(size.h);
  return std::to_string(size.h) + "x" + std::to_string(size.w);
}

InputSize parse_input_size(std::string_view text) {
  const std::string t = trim(text);
  const auto x = t.find('x');
  InputSize s;
  if (x == std::string::npos) {
    s.h = s.w = parse_int("input size", t);
  } else {
    s.h = parse_int("input size", t.substr(0, x));
    s.w = parse_int("input size", t.substr(x + 1));
  }
  if (s.h < 8 || s.w < 8) throw ConfigError("input size '" + t + "' is below 8x8");
  return s;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (dropout_p && !(*dropout_p >= 0.0 && *dropout_p < 1.0)) {
    throw ConfigError("dropout_p must be in [0, 1)");
  }
  if (eval_size < 0) throw ConfigError("eval_size must be >= 0");
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  KeyValues out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    out[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

void apply_key_values(TrainConfig& c, const KeyValues& values) {
  for (const auto& [key, value] : values) {
    if (key == "batch_size") {
      c.batch_size = parse_int(key, value);
    } else if (key == "iterations") {
      c.iterations = parse_int(key, value);
    } else if (key == "lr") {
      c.lr = parse_double(key, value);
    } else if (key == "momentum") {
      c.momentum = parse_double(key, value);
    } else if (key == "weight_decay") {
      c.weight_decay = parse_double(key, value);
    } else if (key == "dropout_p") {
      if (value.empty() || value == "none") {
        c.dropout_p.reset();
      } else {
        c.dropout_p = parse_double(key, value);
      }
    } else if (key == "input_sizes") {
      c.input_sizes.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) c.input_sizes.push_back(parse_input_size(item));
      }
    } else if (key == "eval_size") {
      c.eval_size = parse_int(key, value);
    } else if (key == "seed") {
      c.seed = static_cast<uint64_t>(parse_int(key, value));
    } else {
      throw ConfigError("unknown training option '" + key + "'");
    }
  }
  c.validate();
}

KeyValues to_key_values(const TrainConfig& c) {
  KeyValues kv;
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["iterations"] = std::to_string(c.iterations);
  kv["lr"] = format_double(c.lr);
  kv["momentum"] = format_double(c.momentum);
  kv["weight_decay"] = format_double(c.weight_decay);
  kv["dropout_p"] = c.dropout_p ? format_double(*c.dropout_p) : "none";
  std::string sizes;
  for (const InputSize& s : c.input_sizes) sizes += (sizes.empty() ? "" : ",") + to_string(s);
  kv["input_sizes"] = sizes;
  kv["eval_size"] = std::to_string(c.eval_size);
  kv["seed"] = std::to_string(c.seed);
  return kv;
}

std::vector<InputSize> default_input_sizes(const NetworkSpec& spec) {
  const InputSize nominal{spec.nominal_h, spec.nominal_w};
  if (!spec.size_agnostic()) return {nominal};
  return {nominal, {nominal.h * 3 / 2, nominal.w * 3 / 2}, {nominal.h * 2, nominal.w * 2}};
}

double total_loss(std::span<const double> losses, std::span<const double> weights) {
  if (losses.size() != weights.size()) {
    throw ParameterError("total_loss: " + std::to_string(losses.size()) + " losses but " +
                         std::to_string(weights.size()) + " weights");
  }
  double total = 0.0;
  for (size_t i = 0; i < losses.size(); ++i) {
    if (weights[i] < 0.0) {
      throw ParameterError("total_loss: weight " + std::to_string(i) + " is negative");
    }
    total += weights[i] * losses[i];
  }
  return total;
}

InputSize sample_input_size(const TrainConfig& config, const NetworkSpec& spec, Rng& rng) {
  const InputSize nominal{spec.nominal_h, spec.nominal_w};
  if (config.input_sizes.empty()) return nominal;
  if (!spec.size_agnostic()) {
    if (config.input_sizes.size() > 1) {
      throw ConfigError("multi-size training needs a size-agnostic network (googlenet-gp); " +
                        std::to_string(config.input_sizes.size()) + " sizes given");
    }
    if (config.input_sizes.front() != nominal) {
      throw ConfigError("fixed-size network expects input size " + to_string(nominal) +
                        ", config asks for " + to_string(config.input_sizes.front()));
    }
  }
  if (config.input_sizes.size() == 1) return config.input_sizes.front();
  return config.input_sizes[static_cast<size_t>(rng.below(config.input_sizes.size()))];
}

std::array<double, 3> dataset_mean(const Manifest& manifest) {
  std::array<double, 3> sum{};
  double pixels = 0.0;
  for (const ImageRecord& r : manifest.records) {
    const Tensor img = load_pixels(r);
    const auto m = channel_means(img);
    const double count = static_cast<double>(img.shape().plane());
    for (size_t c = 0; c < 3; ++c) sum[c] += m[c] * count;
    pixels += count;
  }
  if (pixels > 0) {
    for (double& s : sum) s /= pixels;
  }
  return sum;
}

Tensor mean_buffer(const std::array<double, 3>& mean) {
  return Tensor({1, 3, 1, 1}, std::vector<double>(mean.begin(), mean.end()));
}

std::array<double, 3> network_mean(const Network& net) {
  auto it = net.buffers().find("input.mean");
  if (it == net.buffers().end()) return {0.0, 0.0, 0.0};
  return {it->second[0], it->second[1], it->second[2]};
}

ImageBatcher::ImageBatcher(const Manifest& manifest, std::array<double, 3> mean) : mean_(mean) {
  for (const ImageRecord& r : manifest.records) {
    paths_.push_back(r.path);
    labels_.push_back(r.label);
  }
}

const Tensor& ImageBatcher::resized(size_t index, InputSize size) {
  auto& slot = cache_[size];
  if (slot.empty()) slot.resize(paths_.size());
  Tensor& t = slot[index];
  if (t.empty()) t = preprocess(decode_image(paths_[index]), size.h, size.w, mean_);
  return t;
}

Tensor ImageBatcher::batch(std::span<const size_t> indices, InputSize size) {
  Tensor out({static_cast<int64_t>(indices.size()), 3, size.h, size.w});
  const int64_t stride = 3 * size.h * size.w;
  for (size_t i = 0; i < indices.size(); ++i) {
    const Tensor& img = resized(indices[i], size);
    std::copy(img.ptr(), img.ptr() + stride, out.ptr() + static_cast<int64_t>(i) * stride);
  }
  return out;
}

std::vector<double> TrainLog::totals() const {
  std::vector<double> out;
  int64_t last = -1;
  for (const TrainLogEntry& e : entries) {
    if (e.iteration != last) out.push_back(e.total_loss);
    last = e.iteration;
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path, bool include_time) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "iteration,head,loss,total_loss,seconds\n";
  for (const TrainLogEntry& e : entries) {
    out << e.iteration << ',' << e.head << ',' << format_double(e.loss) << ','
        << format_double(e.total_loss) << ',' << (include_time ? format_double(e.seconds) : "0")
        << '\n';
  }
}

TrainLog TrainLog::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  TrainLog log;
  std::string line;
  std::getline(in, line);
  if (trim(line) != "iteration,head,loss,total_loss,seconds") {
    throw FormatError("'" + path.string() + "' is not a training log");
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string f[5];
    for (auto& field : f) std::getline(ss, field, ',');
    log.entries.push_back({parse_int("iteration", f[0]), f[1], parse_double("loss", f[2]),
                           parse_double("total_loss", f[3]), parse_double("seconds", f[4])});
  }
  return log;
}

TrainLog train_classifier(Network& net, const Manifest& train, const TrainConfig& config) {
  config.validate();
  if (train.records.empty()) throw DataError("training split is empty");
  const int64_t classes = net.spec().final_head().num_classes;
  for (size_t i = 0; i < train.records.size(); ++i) {
    const int label = train.records[i].label;
    if (label < 0 || label >= classes) {
      throw DataError("training record " + std::to_string(i) + " ('" + train.records[i].id +
                      "') has label " + std::to_string(label) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
  }

  ImageBatcher batcher(train, network_mean(net));
  Rng dropout_rng(Rng::derive(config.seed, kDropoutStream));
  Rng shuffle_rng(Rng::derive(config.seed, kShuffleStream));
  Rng size_rng(Rng::derive(config.seed, kSizeStream));

  const size_t n = batcher.size();
  const size_t batch_size = std::min<size_t>(static_cast<size_t>(config.batch_size), n);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  size_t cursor = n;  // forces a shuffle before the first batch

  auto params = net.trainable();
  const SgdOptions sgd = config.sgd();
  TrainLog log;
  const auto start = std::chrono::steady_clock::now();

  for (int64_t step = 0; step < config.iterations; ++step) {
    if (cursor + batch_size > n) {
      shuffle_rng.shuffle(std::span<size_t>(order));
      cursor = 0;
    }
    const std::span<const size_t> idx(order.data() + cursor, batch_size);
    cursor += batch_size;
    std::vector<int> labels;
    for (size_t i : idx) labels.push_back(batcher.labels()[i]);

    const InputSize size = sample_input_size(config, net.spec(), size_rng);
    const Tensor x = batcher.batch(idx, size);

    net.zero_grad();
    const auto outputs = net.forward(x, Mode::kTrain, &dropout_rng);
    std::vector<Var> losses;
    std::vector<double> weights;
    for (const HeadOutput& o : outputs) {
      losses.push_back(ag::softmax_cross_entropy(o.logits, labels).loss);
      weights.push_back(o.loss_weight);
    }
    const Var total = ag::weighted_sum(losses, weights);
    const int64_t iteration = static_cast<int64_t>(net.iteration()) + 1;
    if (!std::isfinite(total.value()[0])) {
      throw TrainingError("loss became non-finite at iteration " + std::to_string(iteration));
    }
    backward(total);
    sgd_step(params, sgd);
    net.set_iteration(static_cast<uint64_t>(iteration));

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (size_t h = 0; h < outputs.size(); ++h) {
      log.entries.push_back(
          {iteration, outputs[h].head, losses[h].value()[0], total.value()[0], seconds});
    }
  }
  return log;
}

PretrainResult pretrain_proxy(const NetworkSpec& spec, const Manifest& proxy,
                              const TrainConfig& config) {
  NetworkSpec s = spec;
  if (s.final_head().num_classes != proxy.num_classes()) {
    throw ConfigError("proxy dataset has " + std::to_string(proxy.num_classes()) +
                      " classes but the network's final head has " +
                      std::to_string(s.final_head().num_classes));
  }
  if (config.dropout_p) set_dropout(s, *config.dropout_p);
  s.reinit.clear();
  Network net = Network::build(s, Rng::derive(config.seed, kInitStream));
  const Manifest train = proxy.foreground_only();
  net.buffers()["input.mean"] = mean_buffer(dataset_mean(train));
  TrainLog log = train_classifier(net, train, config);
  return {std::move(net), std::move(log)};
}

SurgeryResult apply_surgery(const Network& pretrained, const SurgeryPlan& plan,
                            const TrainConfig& config) {
  SurgeryResult result{pretrained.clone(), {}, {}};
  std::vector<std::string> warped;
  if (plan.variant == Variant::kFullInception) {
    const InceptionSpec target =
        plan.first_inception.value_or(default_first_inception(pretrained.spec().profile));
    WarpResult w = warp_first_layer_to_inception(pretrained, target,
                                                 Rng::derive(config.seed, kInitStream + 16));
    result.net = std::move(w.net);
    for (const Parameter& p : result.net.parameters()) {
      if (owning_layer(p.name) == "inception0") warped.push_back(p.name);
    }
  }

  NetworkSpec spec = result.net.spec();
  spec.reinit.clear();
  switch (plan.variant) {
    case Variant::kGoogLeNetGP:
      spec = insert_global_pool(std::move(spec), &result.warnings);
      break;
    case Variant::kFullClassify:
      spec = attach_full_classify(std::move(spec), plan.aux_weight);
      break;
    default:
      break;
  }
  std::vector<std::string> heads = plan.heads;
  if (heads.empty()) {
    for (const HeadSpec& h : spec.heads) heads.push_back(h.name);
  }
  for (const std::string& h : heads) set_head_classes(spec, h, plan.num_classes);
  if (config.dropout_p) set_dropout(spec, *config.dropout_p);
  validate(spec);

  Network net = Network::build(spec, Rng::derive(config.seed, kInitStream));
  TransferReport report = transfer_parameters(result.net, net);
  net.set_iteration(0);
  result.fresh = std::move(report.fresh);
  // Warped branch convs count as copied; reduce/projection convs are fresh.
  for (const std::string& name : warped) {
    const std::string group = parameter_group(name);
    const bool is_branch = group == "inception0/1x1" || group == "inception0/3x3" ||
                           group == "inception0/5x5";
    if (!is_branch) result.fresh.push_back(name);
  }
  result.net = std::move(net);
  return result;
}

FineTuneResult fine_tune(const Network& pretrained, const SurgeryPlan& plan,
                         const Manifest& train, const TrainConfig& config) {
  SurgeryResult s = apply_surgery(pretrained, plan, config);
  const Manifest fg = train.foreground_only();
  s.net.buffers()["input.mean"] = mean_buffer(dataset_mean(fg));
  TrainLog log = train_classifier(s.net, fg, config);
  return {std::move(s.net), std::move(log), std::move(s.fresh), std::move(s.warnings)};
}

ClassificationReport evaluate_classification(const Network& net, const Manifest& split,
                                             int64_t eval_size) {
  for (size_t i = 0; i < split.records.size(); ++i) {
    if (!split.records[i].foreground()) {
      throw DataError("classification split '" + split.split + "' contains background image '" +
                      split.records[i].id + "' (record " + std::to_string(i) + ")");
    }
  }
  const NetworkSpec& spec = net.spec();
  const InputSize size = eval_size > 0 ? InputSize{eval_size, eval_size}
                                       : InputSize{spec.nominal_h, spec.nominal_w};
  const auto mean = network_mean(net);
  ClassificationReport report;
  constexpr size_t kChunk = 32;
  int64_t correct = 0;
  for (size_t begin = 0; begin < split.records.size(); begin += kChunk) {
    const size_t end = std::min(split.records.size(), begin + kChunk);
    Tensor batch({static_cast<int64_t>(end - begin), 3, size.h, size.w});
    const int64_t stride = 3 * size.h * size.w;
    for (size_t i = begin; i < end; ++i) {
      const Tensor img = preprocess(load_pixels(split.records[i]), size.h, size.w, mean);
      std::copy(img.ptr(), img.ptr() + stride,
                batch.ptr() + static_cast<int64_t>(i - begin) * stride);
    }
    const Prediction p = net.predict(batch);
    const int64_t k = p.probs.shape().sample_size();
    for (size_t i = begin; i < end; ++i) {
      const int64_t row = static_cast<int64_t>(i - begin);
      ClassificationOutcome o;
      o.id = split.records[i].id;
      o.label = split.records[i].label;
      o.predicted = p.classes[static_cast<size_t>(row)];
      o.confidence = p.probs[row * k + o.predicted];
      correct += o.correct() ? 1 : 0;
      report.outcomes.push_back(o);
    }
  }
  report.accuracy = split.records.empty()
                        ? 0.0
                        : static_cast<double>(correct) / static_cast<double>(split.records.size());
  return report;
}

}  // namespace logonet
