#include "logonet/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "logonet/error.hpp"

namespace logonet {
namespace detail {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives d(root)/d(value) and pushes contributions into parents.
  std::function<void(const Tensor&)> backward;
};

void accumulate(Node& node, const Tensor& g) {
  if (!node.requires_grad) return;
  if (node.grad.empty() && node.value.size() > 0) {
    node.grad = g;
    return;
  }
  if (g.size() != node.grad.size()) {
    throw DimensionError("gradient shape " + to_string(g.shape()) +
                         " does not match value " + to_string(node.value.shape()));
  }
  for (int64_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

}  // namespace detail

struct VarAccess {
  static const std::shared_ptr<detail::Node>& node(const Var& v) {
    if (!v.node_) throw ParameterError("use of an undefined Var");
    return v.node_;
  }
  static Var make(std::shared_ptr<detail::Node> node) {
    return Var(std::move(node));
  }
};

namespace {

using detail::Node;

thread_local bool t_grad_enabled = true;

// Builds the result node. `rule` is attached only if some input needs a
// gradient.
Var make_result(Tensor value, std::vector<Var> inputs,
                std::function<void(const Tensor&)> rule) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (!t_grad_enabled) return VarAccess::make(std::move(node));
  for (const Var& in : inputs) {
    if (VarAccess::node(in)->requires_grad) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Var& in : inputs) node->parents.push_back(VarAccess::node(in));
    node->backward = std::move(rule);
  }
  return VarAccess::make(std::move(node));
}

detail::Node& raw(const Var& v) { return *VarAccess::node(v); }

}  // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var(std::move(node));
}

const Tensor& Var::value() const { return raw(*this).value; }
bool Var::requires_grad() const { return raw(*this).requires_grad; }

Tensor Var::grad() const {
  const Node& n = raw(*this);
  return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

bool Var::has_grad() const { return !raw(*this).grad.empty(); }
void Var::zero_grad() { raw(*this).grad = Tensor(); }

Tensor& Var::mutable_value() {
  Node& n = raw(*this);
  if (n.backward) throw ParameterError("mutable_value on a non-leaf Var");
  return n.value;
}

void backward(const Var& root, double seed) {
  const auto& root_node = VarAccess::node(root);
  if (root_node->value.size() != 1) {
    throw DimensionError("backward: root must be scalar, got " +
                         to_string(root_node->value.shape()));
  }
  if (!root_node->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{root_node.get(), 0}};
  visited.insert(root_node.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.push_back({parent, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are released after use; leaves keep theirs.
  detail::accumulate(*root_node, Tensor(root_node->value.shape(), seed));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (!node->backward || node->grad.empty()) continue;
    const Tensor g = std::move(node->grad);
    node->grad = Tensor();
    node->backward(g);
  }
}

namespace ag {

Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride,
           int pad) {
  Tensor out = kernels::conv2d(input.value(), weight.value(), bias.value(),
                               stride, pad);
  auto in_n = VarAccess::node(input);
  auto w_n = VarAccess::node(weight);
  auto b_n = VarAccess::node(bias);
  return make_result(std::move(out), {input, weight, bias},
                     [in_n, w_n, b_n, stride, pad](const Tensor& g) {
                       auto grads = kernels::conv2d_backward(
                           g, in_n->value, w_n->value, stride, pad,
                           in_n->requires_grad);
                       if (in_n->requires_grad) detail::accumulate(*in_n, grads.input);
                       detail::accumulate(*w_n, grads.weight);
                       detail::accumulate(*b_n, grads.bias);
                     });
}

Var maxpool2d(const Var& input, int kernel, int stride, int pad) {
  auto pooled = kernels::maxpool2d(input.value(), kernel, stride, pad);
  auto in_n = VarAccess::node(input);
  auto argmax = std::make_shared<std::vector<int64_t>>(std::move(pooled.argmax));
  return make_result(std::move(pooled.output), {input},
                     [in_n, argmax](const Tensor& g) {
                       detail::accumulate(*in_n, kernels::maxpool2d_backward(
                                                     g, in_n->value.shape(), *argmax));
                     });
}

Var avgpool2d(const Var& input, int kernel, int stride, int pad) {
  auto in_n = VarAccess::node(input);
  return make_result(kernels::avgpool2d(input.value(), kernel, stride, pad),
                     {input}, [in_n, kernel, stride, pad](const Tensor& g) {
                       detail::accumulate(*in_n, kernels::avgpool2d_backward(
                                                     g, in_n->value.shape(),
                                                     kernel, stride, pad));
                     });
}

Var global_avg_pool(const Var& input) {
  auto in_n = VarAccess::node(input);
  return make_result(kernels::global_avg_pool(input.value()), {input},
                     [in_n](const Tensor& g) {
                       detail::accumulate(*in_n, kernels::global_avg_pool_backward(
                                                     g, in_n->value.shape()));
                     });
}

Var relu(const Var& input) {
  auto in_n = VarAccess::node(input);
  return make_result(kernels::relu(input.value()), {input},
                     [in_n](const Tensor& g) {
                       detail::accumulate(*in_n,
                                          kernels::relu_backward(g, in_n->value));
                     });
}

Var linear(const Var& input, const Var& weight, const Var& bias) {
  auto in_n = VarAccess::node(input);
  auto w_n = VarAccess::node(weight);
  auto b_n = VarAccess::node(bias);
  return make_result(
      kernels::linear(input.value(), weight.value(), bias.value()),
      {input, weight, bias}, [in_n, w_n, b_n](const Tensor& g) {
        auto grads = kernels::linear_backward(g, in_n->value, w_n->value);
        detail::accumulate(*in_n, grads.input);
        detail::accumulate(*w_n, grads.weight);
        detail::accumulate(*b_n, grads.bias);
      });
}

Var concat_channels(std::span<const Var> inputs) {
  std::vector<Tensor> values;
  std::vector<int64_t> counts;
  std::vector<std::shared_ptr<Node>> nodes;
  for (const Var& v : inputs) {
    values.push_back(v.value());
    counts.push_back(v.shape().c);
    nodes.push_back(VarAccess::node(v));
  }
  Tensor out = kernels::concat_channels(values);
  return make_result(std::move(out), {inputs.begin(), inputs.end()},
                     [nodes, counts](const Tensor& g) {
                       auto parts = kernels::split_channels(g, counts);
                       for (size_t i = 0; i < nodes.size(); ++i) {
                         detail::accumulate(*nodes[i], parts[i]);
                       }
                     });
}

Var apply_mask(const Var& input, const Tensor& mask) {
  auto in_n = VarAccess::node(input);
  return make_result(kernels::multiply(input.value(), mask), {input},
                     [in_n, mask](const Tensor& g) {
                       detail::accumulate(*in_n, kernels::multiply(g, mask));
                     });
}

Var dropout(const Var& input, double p, bool train, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ParameterError("dropout probability must be in [0, 1), got " +
                         std::to_string(p));
  }
  if (!train || p == 0.0) return input;
  return apply_mask(input, kernels::dropout_mask(input.shape(), p, rng));
}

CrossEntropy softmax_cross_entropy(const Var& logits, std::vector<int> labels) {
  auto result = kernels::softmax_cross_entropy(logits.value(), labels);
  auto in_n = VarAccess::node(logits);
  auto probs = std::make_shared<Tensor>(result.probs);
  auto label_copy = std::make_shared<std::vector<int>>(std::move(labels));
  Var loss = make_result(Tensor({1, 1, 1, 1}, result.loss), {logits},
                         [in_n, probs, label_copy](const Tensor& g) {
                           Tensor d = kernels::softmax_cross_entropy_backward(
                               *probs, *label_copy, g[0]);
                           detail::accumulate(*in_n, d.reshaped(in_n->value.shape()));
                         });
  return {loss, std::move(result.probs)};
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
  if (terms.size() != weights.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(terms.size()) +
                         " terms but " + std::to_string(weights.size()) +
                         " weights");
  }
  double total = 0.0;
  std::vector<std::shared_ptr<Node>> nodes;
  for (size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1) {
      throw DimensionError("weighted_sum: term " + std::to_string(i) +
                           " is not scalar");
    }
    total += weights[i] * terms[i].value()[0];
    nodes.push_back(VarAccess::node(terms[i]));
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_result(Tensor({1, 1, 1, 1}, total), {terms.begin(), terms.end()},
                     [nodes, w](const Tensor& g) {
                       for (size_t i = 0; i < nodes.size(); ++i) {
                         detail::accumulate(*nodes[i],
                                            Tensor({1, 1, 1, 1}, w[i] * g[0]));
                       }
                     });
}

Var dot(const Var& input, const Tensor& weights) {
  if (input.value().size() != weights.size()) {
    throw DimensionError("dot: " + to_string(input.shape()) + " vs " +
                         to_string(weights.shape()));
  }
  double total = 0.0;
  for (int64_t i = 0; i < weights.size(); ++i) {
    total += input.value()[i] * weights[i];
  }
  auto in_n = VarAccess::node(input);
  return make_result(Tensor({1, 1, 1, 1}, total), {input},
                     [in_n, weights](const Tensor& g) {
                       Tensor d(in_n->value.shape());
                       for (int64_t i = 0; i < d.size(); ++i) d[i] = weights[i] * g[0];
                       detail::accumulate(*in_n, d);
                     });
}

Var sum(const Var& input) {
  return dot(input, Tensor(input.shape(), 1.0));
}

Var reshape(const Var& input, Shape shape) {
  auto in_n = VarAccess::node(input);
  return make_result(input.value().reshaped(shape), {input},
                     [in_n](const Tensor& g) {
                       detail::accumulate(*in_n, g.reshaped(in_n->value.shape()));
                     });
}

Var roi_pool(const Var& features, std::vector<kernels::CellRect> rects,
             std::vector<int64_t> batch_index, int grid_h, int grid_w) {
  auto pooled =
      kernels::roi_pool(features.value(), rects, batch_index, grid_h, grid_w);
  auto in_n = VarAccess::node(features);
  auto argmax = std::make_shared<std::vector<int64_t>>(std::move(pooled.argmax));
  return make_result(std::move(pooled.output), {features},
                     [in_n, argmax](const Tensor& g) {
                       detail::accumulate(*in_n, kernels::roi_pool_backward(
                                                     g, in_n->value.shape(), *argmax));
                     });
}

Var smooth_l1_regression(const Var& pred, const Tensor& targets,
                         std::vector<int> classes, double normalizer) {
  const int64_t rois = pred.shape().n;
  const int64_t cols = pred.shape().sample_size();
  if (targets.size() != rois * 4 || static_cast<int64_t>(classes.size()) != rois) {
    throw DimensionError("smooth_l1_regression: pred " + to_string(pred.shape()) +
                         ", targets " + to_string(targets.shape()) + ", " +
                         std::to_string(classes.size()) + " classes");
  }
  if (!(normalizer > 0.0)) {
    throw ParameterError("smooth_l1_regression: normalizer must be positive");
  }
  Tensor dpred(pred.shape());
  double total = 0.0;
  for (int64_t r = 0; r < rois; ++r) {
    const int cls = classes[static_cast<size_t>(r)];
    if (cls < 0) continue;
    if ((cls + 1) * 4 > cols) {
      throw DimensionError("smooth_l1_regression: class " + std::to_string(cls) +
                           " has no regression block in " + to_string(pred.shape()));
    }
    for (int64_t j = 0; j < 4; ++j) {
      const int64_t idx = r * cols + cls * 4 + j;
      const double diff = pred.value()[idx] - targets[r * 4 + j];
      const double mag = std::abs(diff);
      total += mag < 1.0 ? 0.5 * diff * diff : mag - 0.5;
      dpred[idx] = (mag < 1.0 ? diff : (diff > 0 ? 1.0 : -1.0)) / normalizer;
    }
  }
  auto in_n = VarAccess::node(pred);
  return make_result(Tensor({1, 1, 1, 1}, total / normalizer), {pred},
                     [in_n, dpred](const Tensor& g) {
                       Tensor d(dpred.shape());
                       for (int64_t i = 0; i < d.size(); ++i) d[i] = dpred[i] * g[0];
                       detail::accumulate(*in_n, d);
                     });
}

}  // namespace ag
}  // namespace logonet
