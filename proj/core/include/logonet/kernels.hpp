#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "logonet/rng.hpp"
#include "logonet/tensor.hpp"

// Forward and backward rules for every tensor operation, on plain tensors.
// The autograd layer (autograd.hpp) wires these into a tape; tests call them
// directly.
namespace logonet::kernels {

// ---- convolution ---------------------------------------------------------

// weight: (k, c, fh, fw); bias: (k, 1, 1, 1).
Shape conv2d_output_shape(const Shape& input, const Shape& weight, int stride,
                          int pad);

// Im2col + blocked multiply; used by the network.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

// Seven nested loops. Reference form for tests and benchmarks.
Tensor conv2d_direct(const Tensor& input, const Tensor& weight,
                     const Tensor& bias, int stride, int pad);

struct Conv2dGrads {
  Tensor input;  // empty when not requested
  Tensor weight;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& grad_output, const Tensor& input,
                            const Tensor& weight, int stride, int pad,
                            bool need_input_grad = true);

// ---- pooling -------------------------------------------------------------

struct PoolResult {
  Tensor output;
  // Flat input index feeding each output cell (max pooling only).
  std::vector<int64_t> argmax;
};

Shape pool_output_shape(const Shape& input, int kernel, int stride, int pad);

// Ties go to the first window cell in row-major order.
PoolResult maxpool2d(const Tensor& input, int kernel, int stride, int pad);
Tensor maxpool2d_backward(const Tensor& grad_output, const Shape& input_shape,
                          std::span<const int64_t> argmax);

// Divides by the number of in-bounds cells of each window.
Tensor avgpool2d(const Tensor& input, int kernel, int stride, int pad);
Tensor avgpool2d_backward(const Tensor& grad_output, const Shape& input_shape,
                          int kernel, int stride, int pad);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Tensor& grad_output,
                                const Shape& input_shape);

// ---- elementwise / dense ---------------------------------------------------

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& grad_output, const Tensor& input);

// Input is flattened to (n, c*h*w); weight: (out, in, 1, 1); bias: (out,1,1,1).
// Output: (n, out, 1, 1).
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};
LinearGrads linear_backward(const Tensor& grad_output, const Tensor& input,
                            const Tensor& weight);

Tensor concat_channels(std::span<const Tensor> inputs);
std::vector<Tensor> split_channels(const Tensor& grad_output,
                                   std::span<const int64_t> channel_counts);

// Inverted-dropout mask: each entry is 0 with probability p, else 1/(1-p).
Tensor dropout_mask(const Shape& shape, double p, Rng& rng);
Tensor multiply(const Tensor& a, const Tensor& b);

struct SoftmaxCrossEntropy {
  double loss = 0.0;  // mean negative log-likelihood
  Tensor probs;       // (n, k, 1, 1)
};

// logits: (n, k, ...) treated as (n, k*h*w).
SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits,
                                          std::span<const int> labels);
// d(loss)/d(logits) scaled by grad_loss.
Tensor softmax_cross_entropy_backward(const Tensor& probs,
                                      std::span<const int> labels,
                                      double grad_loss);

Tensor softmax(const Tensor& logits);

// ---- resampling ----------------------------------------------------------

// Align-corners bilinear interpolation of every (n, c) plane.
Tensor bilinear_resize(const Tensor& input, int64_t new_h, int64_t new_w);

// Integer rectangle in feature-map cells, end-exclusive.
struct CellRect {
  int64_t x0 = 0;
  int64_t y0 = 0;
  int64_t x1 = 0;
  int64_t y1 = 0;
  int64_t width() const { return x1 - x0; }
  int64_t height() const { return y1 - y0; }
};

struct RoiPoolResult {
  Tensor output;  // (rois, c, grid_h, grid_w)
  std::vector<int64_t> argmax;
};

// Adaptive max pooling of each rect of sample batch_index[r] into a
// grid_h x grid_w grid. Bin i covers [floor(i*H/grid), ceil((i+1)*H/grid)).
RoiPoolResult roi_pool(const Tensor& features, std::span<const CellRect> rects,
                       std::span<const int64_t> batch_index, int grid_h,
                       int grid_w);
Tensor roi_pool_backward(const Tensor& grad_output, const Shape& feature_shape,
                         std::span<const int64_t> argmax);

}  // namespace logonet::kernels
