#include "logonet/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "logonet/error.hpp"
#include "logonet/kernels.hpp"

namespace logonet {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr const char* kBranchNames[] = {"1x1", "3x3_reduce", "3x3",
                                        "5x5_reduce", "5x5", "pool_proj"};

uint64_t name_hash(std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// One convolution or linear layer to be created: weight (out, in, k, k).
struct ParamGroup {
  std::string name;
  int64_t out = 0;
  int64_t in = 0;
  int kernel = 1;
  bool classifier = false;
};

std::vector<ParamGroup> parameter_groups(const NetworkSpec& spec) {
  const ShapeReport shapes = infer_shapes(spec, spec.nominal_h, spec.nominal_w);
  std::vector<ParamGroup> groups;
  int64_t channels = spec.input_channels;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& layer = spec.layers[i];
    const Shape input = i == 0 ? Shape{1, spec.input_channels, spec.nominal_h, spec.nominal_w}
                               : shapes.layer_outputs[i - 1];
    channels = input.c;
    std::visit(Overloaded{
                   [&](const ConvLayer& c) {
                     groups.push_back({layer.name, c.out, channels, c.kernel});
                   },
                   [&](const InceptionSpec& s) {
                     const std::string p = layer.name + "/";
                     groups.push_back({p + kBranchNames[0], s.out_1x1, channels, s.kernels[0]});
                     groups.push_back({p + kBranchNames[1], s.reduce_3x3, channels, 1});
                     groups.push_back({p + kBranchNames[2], s.out_3x3, s.reduce_3x3, s.kernels[1]});
                     groups.push_back({p + kBranchNames[3], s.reduce_5x5, channels, 1});
                     groups.push_back({p + kBranchNames[4], s.out_5x5, s.reduce_5x5, s.kernels[2]});
                     groups.push_back({p + kBranchNames[5], s.pool_proj, channels, 1});
                   },
                   [&](const LinearLayer& l) {
                     groups.push_back({layer.name, l.out, input.sample_size(), 1});
                   },
                   [](const auto&) {},
               },
               layer.op);
  }
  for (size_t h = 0; h < spec.heads.size(); ++h) {
    const HeadSpec& head = spec.heads[h];
    const int anchor = spec.find_layer(head.anchor);
    int64_t features = 0;
    if (head.conv_proj > 0) {
      const Shape a = shapes.layer_outputs[static_cast<size_t>(anchor)];
      groups.push_back({head.conv_name(), head.conv_proj, a.c, 1});
    }
    features = shapes.head_inputs[h].c;
    const auto names = head.linear_names();
    for (size_t j = 0; j < names.size(); ++j) {
      const bool last = j + 1 == names.size();
      const int64_t out = last ? head.num_classes : head.hidden[j];
      groups.push_back({names[j], out, features, 1, last});
      features = out;
    }
  }
  return groups;
}

Tensor init_weight(const ParamGroup& g, const InitOptions& init, uint64_t seed) {
  Rng rng(Rng::derive(seed, name_hash(g.name)));
  Tensor w({g.out, g.in, g.kernel, g.kernel});
  const double fan_in = static_cast<double>(g.in * g.kernel * g.kernel);
  const double std_dev = (g.classifier || !init.fan_in_scaled_trunk)
                             ? init.head_std
                             : std::sqrt(2.0 / fan_in);
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std_dev);
  return w;
}

}  // namespace

std::string parameter_group(std::string_view parameter_name) {
  const size_t dot = parameter_name.rfind('.');
  return std::string(parameter_name.substr(0, dot));
}

std::string owning_layer(std::string_view parameter_name) {
  const std::string group = parameter_group(parameter_name);
  const size_t slash = group.find('/');
  return slash == std::string::npos ? group : group.substr(0, slash);
}

Network Network::build(NetworkSpec spec, uint64_t seed, const InitOptions& init) {
  try {
    validate(spec);
  } catch (const BuildError&) {
    throw;
  } catch (const Error& e) {
    throw BuildError(e.what());
  }
  Network net;
  net.spec_ = std::move(spec);
  net.init_ = init;
  for (const ParamGroup& g : parameter_groups(net.spec_)) {
    net.add_parameter(g.name + ".weight", init_weight(g, init, seed));
    net.add_parameter(g.name + ".bias", Tensor({g.out, 1, 1, 1}));
  }
  return net;
}

void Network::add_parameter(std::string name, Tensor value) {
  if (index_.count(name)) throw BuildError("duplicate parameter '" + name + "'");
  index_[name] = params_.size();
  params_.emplace_back(std::move(name), std::move(value));
}

void Network::reindex() {
  index_.clear();
  for (size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
}

Network Network::clone() const {
  Network copy;
  copy.spec_ = spec_;
  copy.init_ = init_;
  for (const Parameter& p : params_) {
    copy.params_.emplace_back(p.name, p.value.value());
    copy.params_.back().momentum = p.momentum;
  }
  copy.reindex();
  copy.buffers_ = buffers_;
  copy.iteration_ = iteration_;
  return copy;
}

const Parameter* Network::find_parameter(std::string_view name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& Network::parameter(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw LookupError("unknown parameter '" + std::string(name) + "'");
  }
  return params_[it->second];
}

std::vector<Parameter*> Network::trainable() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

void Network::zero_grad() {
  for (Parameter& p : params_) p.value.zero_grad();
}

void Network::reinitialize_layer(std::string_view layer, uint64_t seed) {
  bool found = false;
  for (const ParamGroup& g : parameter_groups(spec_)) {
    if (g.name != layer && owning_layer(g.name + ".weight") != layer) continue;
    found = true;
    Parameter& w = parameter(g.name + ".weight");
    w.value = Var::leaf(init_weight(g, init_, seed));
    w.momentum = Tensor(w.shape());
    Parameter& b = parameter(g.name + ".bias");
    b.value = Var::leaf(Tensor({g.out, 1, 1, 1}));
    b.momentum = Tensor(b.shape());
  }
  if (!found) throw LookupError("no parameters for layer '" + std::string(layer) + "'");
}

void Network::check_input(const Shape& shape) const {
  if (shape.c != spec_.input_channels) {
    throw DimensionError("network expects " + std::to_string(spec_.input_channels) +
                         " input channels, got " + to_string(shape));
  }
  if (!spec_.size_agnostic() &&
      (shape.h != spec_.nominal_h || shape.w != spec_.nominal_w)) {
    throw DimensionError(
        "fixed-size network expects " + std::to_string(spec_.nominal_h) + "x" +
        std::to_string(spec_.nominal_w) + " input, got " + std::to_string(shape.h) +
        "x" + std::to_string(shape.w) +
        "; the googlenet-gp variant accepts any input size");
  }
}

namespace {

class Executor {
 public:
  Executor(const Network& net, Mode mode, Rng* rng) : net_(net), mode_(mode), rng_(rng) {}

  Var param(const std::string& name) const {
    const Parameter* p = net_.find_parameter(name);
    if (!p) throw LookupError("missing parameter '" + name + "'");
    return p->value;
  }

  Var conv(const Var& x, const std::string& group, int stride, int pad) const {
    return ag::conv2d(x, param(group + ".weight"), param(group + ".bias"), stride, pad);
  }

  Var layer(const LayerSpec& layer, const Var& x) const {
    return std::visit(
        Overloaded{
            [&](const ConvLayer& c) { return conv(x, layer.name, c.stride, c.pad); },
            [&](const MaxPoolLayer& p) { return ag::maxpool2d(x, p.kernel, p.stride, p.pad); },
            [&](const AvgPoolLayer& p) { return ag::avgpool2d(x, p.kernel, p.stride, p.pad); },
            [&](const InceptionSpec& s) { return inception(layer.name, s, x); },
            [&](const GlobalPoolLayer&) { return ag::global_avg_pool(x); },
            [&](const FlattenLayer&) {
              const Shape& s = x.shape();
              return ag::reshape(x, {s.n, s.sample_size(), 1, 1});
            },
            [&](const LinearLayer&) {
              return ag::linear(x, param(layer.name + ".weight"), param(layer.name + ".bias"));
            },
            [&](const DropoutLayer& d) { return dropout(x, d.p); },
            [&](const ReluLayer&) { return ag::relu(x); },
        },
        layer.op);
  }

  Var inception(const std::string& name, const InceptionSpec& s, const Var& x) const {
    const std::string p = name + "/";
    const auto& k = s.kernels;
    Var a = ag::relu(conv(x, p + "1x1", s.stride, k[0] / 2));
    Var b = ag::relu(conv(x, p + "3x3_reduce", 1, 0));
    b = ag::relu(conv(b, p + "3x3", s.stride, k[1] / 2));
    Var c = ag::relu(conv(x, p + "5x5_reduce", 1, 0));
    c = ag::relu(conv(c, p + "5x5", s.stride, k[2] / 2));
    Var d = ag::maxpool2d(x, 3, s.stride, 1);
    d = ag::relu(conv(d, p + "pool_proj", 1, 0));
    const Var branches[] = {a, b, c, d};
    return ag::concat_channels(branches);
  }

  Var dropout(const Var& x, double p) const {
    if (mode_ == Mode::kTest || p == 0.0) return x;
    if (!rng_) throw ParameterError("train-mode forward requires a dropout Rng");
    return ag::dropout(x, p, true, *rng_);
  }

  Var head(const HeadSpec& h, Var x) const {
    switch (h.pool) {
      case HeadPool::kNone: break;
      case HeadPool::kAvg: x = ag::avgpool2d(x, h.pool_kernel, h.pool_stride, 0); break;
      case HeadPool::kGlobal: x = ag::global_avg_pool(x); break;
    }
    if (h.conv_proj > 0) x = ag::relu(conv(x, h.conv_name(), 1, 0));
    const auto names = h.linear_names();
    for (size_t j = 0; j + 1 < names.size(); ++j) {
      x = ag::relu(ag::linear(x, param(names[j] + ".weight"), param(names[j] + ".bias")));
    }
    x = dropout(x, h.dropout);
    return ag::linear(x, param(names.back() + ".weight"), param(names.back() + ".bias"));
  }

 private:
  const Network& net_;
  Mode mode_;
  Rng* rng_;
};

}  // namespace

std::vector<HeadOutput> Network::forward(const Tensor& batch, Mode mode, Rng* rng) const {
  check_input(batch.shape());
  Executor exec(*this, mode, rng);

  std::vector<const HeadSpec*> heads;
  for (const HeadSpec& h : spec_.heads) {
    if (mode == Mode::kTrain || h.final) heads.push_back(&h);
  }
  int last_needed = -1;
  std::map<std::string, Var, std::less<>> anchors;
  for (const HeadSpec* h : heads) {
    last_needed = std::max(last_needed, spec_.find_layer(h->anchor));
    anchors[h->anchor] = Var();
  }

  Var x = Var::constant(batch);
  for (int i = 0; i <= last_needed; ++i) {
    const LayerSpec& layer = spec_.layers[static_cast<size_t>(i)];
    try {
      x = exec.layer(layer, x);
    } catch (const DimensionError& e) {
      throw DimensionError("layer '" + layer.name + "': " + e.what());
    }
    auto it = anchors.find(layer.name);
    if (it != anchors.end()) it->second = x;
  }

  std::vector<HeadOutput> outputs;
  for (const HeadSpec* h : heads) {
    outputs.push_back({h->name, exec.head(*h, anchors.at(h->anchor)), h->loss_weight, h->final});
  }
  return outputs;
}

Var Network::features(const Tensor& batch, std::string_view layer) const {
  if (batch.shape().c != spec_.input_channels) {
    throw DimensionError("network expects " + std::to_string(spec_.input_channels) +
                         " input channels, got " + to_string(batch.shape()));
  }
  const int last = spec_.find_layer(layer);
  if (last < 0) throw LookupError("unknown layer '" + std::string(layer) + "'");
  Executor exec(*this, Mode::kTest, nullptr);
  Var x = Var::constant(batch);
  for (int i = 0; i <= last; ++i) x = exec.layer(spec_.layers[static_cast<size_t>(i)], x);
  return x;
}

Prediction Network::predict(const Tensor& batch) const {
  NoGradGuard no_grad;
  const auto outputs = forward(batch, Mode::kTest);
  const Tensor& logits = outputs.front().logits.value();
  Prediction p;
  p.probs = kernels::softmax(logits);
  const int64_t k = logits.shape().sample_size();
  for (int64_t n = 0; n < logits.shape().n; ++n) {
    const double* row = logits.ptr() + n * k;
    p.classes.push_back(static_cast<int>(std::max_element(row, row + k) - row));
  }
  return p;
}

Network reinit_head(Network net, std::string_view head, int64_t num_classes, uint64_t seed) {
  const HeadSpec* h = net.spec().find_head(head);
  if (!h) throw LookupError("unknown head '" + std::string(head) + "'");
  const std::string classifier = h->classifier_name();
  NetworkSpec spec = net.spec();
  set_head_classes(spec, head, num_classes);

  Network rebuilt = Network::build(spec, seed, net.init_options());
  // Everything except the classifier keeps its current values.
  for (Parameter& p : rebuilt.parameters()) {
    if (parameter_group(p.name) == classifier) continue;
    const Parameter* old = net.find_parameter(p.name);
    p.value = Var::leaf(old->value.value());
    p.momentum = old->momentum;
  }
  rebuilt.buffers() = net.buffers();
  rebuilt.set_iteration(net.iteration());
  return rebuilt;
}

TransferReport transfer_parameters(const Network& source, Network& target) {
  TransferReport report;
  const auto& reinit = target.spec().reinit;
  for (Parameter& p : target.parameters()) {
    const std::string layer = owning_layer(p.name);
    const std::string group = parameter_group(p.name);
    if (reinit.count(layer) || reinit.count(group)) {
      report.fresh.push_back(p.name);
      continue;
    }
    const Parameter* src = source.find_parameter(p.name);
    if (!src) {
      report.fresh.push_back(p.name);
      continue;
    }
    if (src->shape() != p.shape()) {
      throw BuildError("parameter '" + p.name + "' has shape " + to_string(src->shape()) +
                       " in the source network but " + to_string(p.shape()) +
                       " in the target, and its layer is not marked for re-initialization");
    }
    p.value = Var::leaf(src->value.value());
    report.copied.push_back(p.name);
  }
  for (const auto& [name, value] : source.buffers()) target.buffers()[name] = value;
  return report;
}

WarpResult warp_first_layer_to_inception(const Network& pretrained,
                                         const InceptionSpec& target, uint64_t seed) {
  try {
    target.validate();
  } catch (const Error& e) {
    throw ParameterError(std::string("warp target: ") + e.what());
  }
  const NetworkSpec& old_spec = pretrained.spec();
  if (old_spec.layers.empty() || !std::holds_alternative<ConvLayer>(old_spec.layers[0].op)) {
    throw BuildError("warp: first layer of the pretrained network is not a convolution");
  }
  const std::string donor_layer = old_spec.layers[0].name;
  const Tensor& donors = pretrained.find_parameter(donor_layer + ".weight")->value.value();
  const Tensor& donor_bias = pretrained.find_parameter(donor_layer + ".bias")->value.value();
  const Shape ds = donors.shape();

  NetworkSpec spec = replace_first_layer_with_inception(old_spec, target);
  const InceptionSpec& placed = std::get<InceptionSpec>(spec.layers[0].op);
  Network net = Network::build(spec, Rng::derive(seed, 1), pretrained.init_options());
  transfer_parameters(pretrained, net);
  net.set_iteration(pretrained.iteration());

  const int64_t counts[3] = {placed.out_1x1, placed.out_3x3, placed.out_5x5};
  const int64_t in_channels[3] = {ds.c, placed.reduce_3x3, placed.reduce_5x5};
  const char* groups[3] = {"inception0/1x1", "inception0/3x3", "inception0/5x5"};
  const int64_t demand = counts[0] + counts[1] + counts[2];

  Rng rng(seed);
  std::vector<int64_t> pool(static_cast<size_t>(ds.n));
  for (int64_t i = 0; i < ds.n; ++i) pool[static_cast<size_t>(i)] = i;
  std::vector<int64_t> chosen;
  if (demand <= ds.n) {
    rng.shuffle(std::span<int64_t>(pool));
    chosen.assign(pool.begin(), pool.begin() + demand);
  } else {
    for (int64_t i = 0; i < demand; ++i) {
      chosen.push_back(static_cast<int64_t>(rng.below(static_cast<uint64_t>(ds.n))));
    }
  }

  WarpResult result{std::move(net), {}};
  size_t next = 0;
  for (int branch = 0; branch < 3; ++branch) {
    const int k = placed.kernels[static_cast<size_t>(branch)];
    Parameter& w = result.net.parameter(std::string(groups[branch]) + ".weight");
    Parameter& b = result.net.parameter(std::string(groups[branch]) + ".bias");
    Tensor weight({counts[branch], in_channels[branch], k, k});
    Tensor bias({counts[branch], 1, 1, 1});
    for (int64_t f = 0; f < counts[branch]; ++f) {
      const int64_t donor = chosen[next++];
      result.assignments.push_back({branch, f, donor});
      const Tensor kernel = donors.sample(donor);  // (1, c, fh, fw)
      const Tensor resized = kernels::bilinear_resize(kernel, k, k);
      for (int64_t j = 0; j < in_channels[branch]; ++j) {
        const int64_t src_c = j % ds.c;
        std::copy(resized.ptr() + src_c * k * k, resized.ptr() + (src_c + 1) * k * k,
                  weight.ptr() + (f * in_channels[branch] + j) * k * k);
      }
      bias[f] = donor_bias[donor];
    }
    w.value = Var::leaf(std::move(weight));
    w.momentum = Tensor(w.shape());
    b.value = Var::leaf(std::move(bias));
    b.momentum = Tensor(b.shape());
  }
  return result;
}

}  // namespace logonet
