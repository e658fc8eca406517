#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "logonet/kernels.hpp"
#include "logonet/rng.hpp"
#include "logonet/tensor.hpp"

namespace logonet {

namespace detail {
struct Node;
}

// A tensor value recorded on the reverse-mode tape. Copies share the node.
// Operations whose inputs do not require gradients produce constant nodes
// with no backward edges, so inference builds no graph.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor value);
  static Var leaf(Tensor value, bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

  // Accumulated gradient; a zero tensor of the value's shape if nothing has
  // been accumulated yet.
  Tensor grad() const;
  bool has_grad() const;
  void zero_grad();

  // Leaves only: in-place update by the optimizer or head surgery.
  Tensor& mutable_value();

 private:
  friend struct VarAccess;
  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// While alive on a thread, operations on that thread record no backward
// edges (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Accumulates d(root)/d(leaf) into every reachable leaf that requires a
// gradient. root must hold exactly one value.
void backward(const Var& root, double seed = 1.0);

namespace ag {

Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride,
           int pad);
Var maxpool2d(const Var& input, int kernel, int stride, int pad);
Var avgpool2d(const Var& input, int kernel, int stride, int pad);
Var global_avg_pool(const Var& input);
Var relu(const Var& input);
Var linear(const Var& input, const Var& weight, const Var& bias);
Var concat_channels(std::span<const Var> inputs);

// train == false is the identity. In train mode the mask is drawn from rng.
Var dropout(const Var& input, double p, bool train, Rng& rng);
// Multiplies by a fixed mask; the deterministic core of dropout.
Var apply_mask(const Var& input, const Tensor& mask);

struct CrossEntropy {
  Var loss;  // scalar (1, 1, 1, 1)
  Tensor probs;
};
CrossEntropy softmax_cross_entropy(const Var& logits, std::vector<int> labels);

// sum_i weights[i] * terms[i] over scalar terms.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);
// sum(input * weights) as a scalar; a random projection turns any op into a
// scalar function for gradient checks.
Var dot(const Var& input, const Tensor& weights);
Var sum(const Var& input);
Var reshape(const Var& input, Shape shape);

Var roi_pool(const Var& features, std::vector<kernels::CellRect> rects,
             std::vector<int64_t> batch_index, int grid_h, int grid_w);

// Smooth-L1 (beta = 1) between the class-specific 4-column block of pred
// and targets, over rows with classes[r] >= 0, divided by normalizer.
// pred: (rois, 4 * num_classes); targets: (rois, 4).
Var smooth_l1_regression(const Var& pred, const Tensor& targets,
                         std::vector<int> classes, double normalizer);

}  // namespace ag
}  // namespace logonet
