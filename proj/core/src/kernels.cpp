#include "logonet/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "logonet/error.hpp"
#include "logonet/parallel.hpp"

namespace logonet::kernels {
namespace {

// Samples per partial weight-gradient buffer. Fixed so that the reduction
// order does not depend on the worker count.
constexpr int64_t kGradGroup = 4;

std::string shapes(const Shape& a, const Shape& b) {
  return to_string(a) + " vs " + to_string(b);
}

void require_bias(const Tensor& bias, int64_t k, const char* op) {
  if (bias.size() != k) {
    throw DimensionError(std::string(op) + ": bias has " +
                         std::to_string(bias.size()) + " values, expected " +
                         std::to_string(k));
  }
}

// cols[(ci*fh + fi)*fw + fj][oy*ow + ox]
void im2col(const double* in, int64_t c, int64_t h, int64_t w, int64_t fh,
            int64_t fw, int stride, int pad, int64_t oh, int64_t ow,
            double* cols) {
  const int64_t plane = oh * ow;
  for (int64_t ci = 0; ci < c; ++ci) {
    const double* src = in + ci * h * w;
    for (int64_t fi = 0; fi < fh; ++fi) {
      for (int64_t fj = 0; fj < fw; ++fj) {
        double* dst = cols + ((ci * fh + fi) * fw + fj) * plane;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride - pad + fi;
          double* row = dst + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + ow, 0.0);
            continue;
          }
          const double* srow = src + iy * w;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride - pad + fj;
            row[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Transposed layout: cols_t[oy*ow + ox][(ci*fh + fi)*fw + fj]
void im2col_transposed(const double* in, int64_t c, int64_t h, int64_t w,
                       int64_t fh, int64_t fw, int stride, int pad, int64_t oh,
                       int64_t ow, double* cols_t) {
  const int64_t kk = c * fh * fw;
  for (int64_t oy = 0; oy < oh; ++oy) {
    for (int64_t ox = 0; ox < ow; ++ox) {
      double* dst = cols_t + (oy * ow + ox) * kk;
      for (int64_t ci = 0; ci < c; ++ci) {
        const double* src = in + ci * h * w;
        for (int64_t fi = 0; fi < fh; ++fi) {
          const int64_t iy = oy * stride - pad + fi;
          for (int64_t fj = 0; fj < fw; ++fj) {
            const int64_t ix = ox * stride - pad + fj;
            *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                         ? src[iy * w + ix]
                         : 0.0;
          }
        }
      }
    }
  }
}

void col2im_transposed(const double* cols_t, int64_t c, int64_t h, int64_t w,
                       int64_t fh, int64_t fw, int stride, int pad, int64_t oh,
                       int64_t ow, double* out) {
  const int64_t kk = c * fh * fw;
  std::fill(out, out + c * h * w, 0.0);
  for (int64_t oy = 0; oy < oh; ++oy) {
    for (int64_t ox = 0; ox < ow; ++ox) {
      const double* src = cols_t + (oy * ow + ox) * kk;
      for (int64_t ci = 0; ci < c; ++ci) {
        double* dst = out + ci * h * w;
        for (int64_t fi = 0; fi < fh; ++fi) {
          const int64_t iy = oy * stride - pad + fi;
          for (int64_t fj = 0; fj < fw; ++fj, ++src) {
            const int64_t ix = ox * stride - pad + fj;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) {
              dst[iy * w + ix] += *src;
            }
          }
        }
      }
    }
  }
}

}  // namespace

Shape conv2d_output_shape(const Shape& input, const Shape& weight, int stride,
                          int pad) {
  if (input.c != weight.c) {
    throw DimensionError("conv2d: input channels do not match weight: " +
                         shapes(input, weight));
  }
  if (stride < 1 || pad < 0) {
    throw DimensionError("conv2d: stride must be >= 1 and pad >= 0 (stride=" +
                         std::to_string(stride) +
                         ", pad=" + std::to_string(pad) + ")");
  }
  const int64_t span_h = input.h + 2 * pad - weight.h;
  const int64_t span_w = input.w + 2 * pad - weight.w;
  if (weight.h < 1 || weight.w < 1 || span_h < 0 || span_w < 0) {
    throw DimensionError("conv2d: kernel does not fit input: " +
                         shapes(input, weight));
  }
  return {input.n, weight.n, span_h / stride + 1, span_w / stride + 1};
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  const Shape os = conv2d_output_shape(is, ws, stride, pad);
  require_bias(bias, ws.n, "conv2d");
  Tensor out(os);
  const int64_t kk = ws.c * ws.h * ws.w;
  const int64_t plane = os.h * os.w;
  const bool pointwise = ws.h == 1 && ws.w == 1 && stride == 1 && pad == 0;

  parallel_for(is.n, [&](int64_t n) {
    std::vector<double> buffer;
    const double* cols = input.ptr() + n * is.sample_size();
    if (!pointwise) {
      buffer.resize(static_cast<size_t>(kk * plane));
      im2col(input.ptr() + n * is.sample_size(), is.c, is.h, is.w, ws.h, ws.w,
             stride, pad, os.h, os.w, buffer.data());
      cols = buffer.data();
    }
    double* dst = out.ptr() + n * os.sample_size();
    for (int64_t k = 0; k < ws.n; ++k) {
      double* row = dst + k * plane;
      std::fill(row, row + plane, bias[k]);
      const double* wk = weight.ptr() + k * kk;
      for (int64_t j = 0; j < kk; ++j) {
        const double wkj = wk[j];
        const double* src = cols + j * plane;
        for (int64_t p = 0; p < plane; ++p) row[p] += wkj * src[p];
      }
    }
  });
  return out;
}

Tensor conv2d_direct(const Tensor& input, const Tensor& weight,
                     const Tensor& bias, int stride, int pad) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  const Shape os = conv2d_output_shape(is, ws, stride, pad);
  require_bias(bias, ws.n, "conv2d");
  Tensor out(os);
  for (int64_t n = 0; n < os.n; ++n) {
    for (int64_t k = 0; k < os.c; ++k) {
      for (int64_t oy = 0; oy < os.h; ++oy) {
        for (int64_t ox = 0; ox < os.w; ++ox) {
          double acc = bias[k];
          for (int64_t c = 0; c < ws.c; ++c) {
            for (int64_t fi = 0; fi < ws.h; ++fi) {
              const int64_t iy = oy * stride - pad + fi;
              if (iy < 0 || iy >= is.h) continue;
              for (int64_t fj = 0; fj < ws.w; ++fj) {
                const int64_t ix = ox * stride - pad + fj;
                if (ix < 0 || ix >= is.w) continue;
                acc += weight.at(k, c, fi, fj) * input.at(n, c, iy, ix);
              }
            }
          }
          out.at(n, k, oy, ox) = acc;
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& grad_output, const Tensor& input,
                            const Tensor& weight, int stride, int pad,
                            bool need_input_grad) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  const Shape os = conv2d_output_shape(is, ws, stride, pad);
  if (grad_output.shape() != os) {
    throw DimensionError("conv2d backward: gradient shape mismatch: " +
                         shapes(grad_output.shape(), os));
  }
  const int64_t kk = ws.c * ws.h * ws.w;
  const int64_t plane = os.h * os.w;

  Conv2dGrads grads;
  grads.weight = Tensor(ws);
  grads.bias = Tensor({ws.n, 1, 1, 1});
  if (need_input_grad) grads.input = Tensor(is);

  for (int64_t n = 0; n < os.n; ++n) {
    for (int64_t k = 0; k < ws.n; ++k) {
      const double* g = grad_output.ptr() + (n * os.c + k) * plane;
      double acc = 0.0;
      for (int64_t p = 0; p < plane; ++p) acc += g[p];
      grads.bias[k] += acc;
    }
  }

  const int64_t groups = (is.n + kGradGroup - 1) / kGradGroup;
  std::vector<Tensor> partial(static_cast<size_t>(groups));
  parallel_for(groups, [&](int64_t group) {
    Tensor dw(ws);
    std::vector<double> cols_t(static_cast<size_t>(plane * kk));
    std::vector<double> dcols_t(need_input_grad ? cols_t.size() : 0);
    const int64_t end = std::min(is.n, (group + 1) * kGradGroup);
    for (int64_t n = group * kGradGroup; n < end; ++n) {
      const double* gout = grad_output.ptr() + n * os.sample_size();
      im2col_transposed(input.ptr() + n * is.sample_size(), is.c, is.h, is.w,
                        ws.h, ws.w, stride, pad, os.h, os.w, cols_t.data());
      for (int64_t k = 0; k < ws.n; ++k) {
        double* dwk = dw.ptr() + k * kk;
        const double* gk = gout + k * plane;
        for (int64_t p = 0; p < plane; ++p) {
          const double gkp = gk[p];
          if (gkp == 0.0) continue;
          const double* col = cols_t.data() + p * kk;
          for (int64_t j = 0; j < kk; ++j) dwk[j] += gkp * col[j];
        }
      }
      if (!need_input_grad) continue;
      std::fill(dcols_t.begin(), dcols_t.end(), 0.0);
      for (int64_t p = 0; p < plane; ++p) {
        double* dcol = dcols_t.data() + p * kk;
        for (int64_t k = 0; k < ws.n; ++k) {
          const double gkp = gout[k * plane + p];
          if (gkp == 0.0) continue;
          const double* wk = weight.ptr() + k * kk;
          for (int64_t j = 0; j < kk; ++j) dcol[j] += gkp * wk[j];
        }
      }
      col2im_transposed(dcols_t.data(), is.c, is.h, is.w, ws.h, ws.w, stride,
                        pad, os.h, os.w,
                        grads.input.ptr() + n * is.sample_size());
    }
    partial[static_cast<size_t>(group)] = std::move(dw);
  });
  for (const Tensor& dw : partial) {
    for (int64_t i = 0; i < dw.size(); ++i) grads.weight[i] += dw[i];
  }
  return grads;
}

// ---- pooling ---------------------------------------------------------------

Shape pool_output_shape(const Shape& input, int kernel, int stride, int pad) {
  if (kernel < 1 || stride < 1 || pad < 0 || pad >= kernel) {
    throw DimensionError("pool: invalid window (kernel=" +
                         std::to_string(kernel) +
                         ", stride=" + std::to_string(stride) +
                         ", pad=" + std::to_string(pad) + ")");
  }
  const int64_t span_h = input.h + 2 * pad - kernel;
  const int64_t span_w = input.w + 2 * pad - kernel;
  if (span_h < 0 || span_w < 0) {
    throw DimensionError("pool: window " + std::to_string(kernel) +
                         " larger than padded input " + to_string(input));
  }
  return {input.n, input.c, span_h / stride + 1, span_w / stride + 1};
}

PoolResult maxpool2d(const Tensor& input, int kernel, int stride, int pad) {
  const Shape& is = input.shape();
  const Shape os = pool_output_shape(is, kernel, stride, pad);
  PoolResult result{Tensor(os), std::vector<int64_t>(static_cast<size_t>(os.size()))};
  int64_t o = 0;
  for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
    const int64_t base = nc * is.plane();
    for (int64_t oy = 0; oy < os.h; ++oy) {
      for (int64_t ox = 0; ox < os.w; ++ox, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        int64_t best_index = -1;
        for (int64_t fi = 0; fi < kernel; ++fi) {
          const int64_t iy = oy * stride - pad + fi;
          if (iy < 0 || iy >= is.h) continue;
          for (int64_t fj = 0; fj < kernel; ++fj) {
            const int64_t ix = ox * stride - pad + fj;
            if (ix < 0 || ix >= is.w) continue;
            const int64_t idx = base + iy * is.w + ix;
            if (best_index < 0 || input[idx] > best) {
              best = input[idx];
              best_index = idx;
            }
          }
        }
        result.output[o] = best;
        result.argmax[static_cast<size_t>(o)] = best_index;
      }
    }
  }
  return result;
}

Tensor maxpool2d_backward(const Tensor& grad_output, const Shape& input_shape,
                          std::span<const int64_t> argmax) {
  if (static_cast<int64_t>(argmax.size()) != grad_output.size()) {
    throw DimensionError("maxpool backward: argmax size mismatch");
  }
  Tensor grad(input_shape);
  for (int64_t o = 0; o < grad_output.size(); ++o) {
    grad[argmax[static_cast<size_t>(o)]] += grad_output[o];
  }
  return grad;
}

namespace {

template <typename Visit>
void for_each_window(const Shape& is, const Shape& os, int kernel, int stride,
                     int pad, Visit&& visit) {
  int64_t o = 0;
  for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
    const int64_t base = nc * is.plane();
    for (int64_t oy = 0; oy < os.h; ++oy) {
      for (int64_t ox = 0; ox < os.w; ++ox, ++o) {
        const int64_t y0 = std::max<int64_t>(0, oy * stride - pad);
        const int64_t x0 = std::max<int64_t>(0, ox * stride - pad);
        const int64_t y1 = std::min<int64_t>(is.h, oy * stride - pad + kernel);
        const int64_t x1 = std::min<int64_t>(is.w, ox * stride - pad + kernel);
        visit(o, base, y0, x0, y1, x1);
      }
    }
  }
}

}  // namespace

Tensor avgpool2d(const Tensor& input, int kernel, int stride, int pad) {
  const Shape& is = input.shape();
  const Shape os = pool_output_shape(is, kernel, stride, pad);
  Tensor out(os);
  for_each_window(is, os, kernel, stride, pad,
                  [&](int64_t o, int64_t base, int64_t y0, int64_t x0,
                      int64_t y1, int64_t x1) {
                    double acc = 0.0;
                    for (int64_t y = y0; y < y1; ++y) {
                      for (int64_t x = x0; x < x1; ++x) {
                        acc += input[base + y * is.w + x];
                      }
                    }
                    out[o] = acc / static_cast<double>((y1 - y0) * (x1 - x0));
                  });
  return out;
}

Tensor avgpool2d_backward(const Tensor& grad_output, const Shape& input_shape,
                          int kernel, int stride, int pad) {
  const Shape os = pool_output_shape(input_shape, kernel, stride, pad);
  if (grad_output.shape() != os) {
    throw DimensionError("avgpool backward: gradient shape mismatch: " +
                         shapes(grad_output.shape(), os));
  }
  Tensor grad(input_shape);
  for_each_window(input_shape, os, kernel, stride, pad,
                  [&](int64_t o, int64_t base, int64_t y0, int64_t x0,
                      int64_t y1, int64_t x1) {
                    const double g = grad_output[o] /
                                     static_cast<double>((y1 - y0) * (x1 - x0));
                    for (int64_t y = y0; y < y1; ++y) {
                      for (int64_t x = x0; x < x1; ++x) {
                        grad[base + y * input_shape.w + x] += g;
                      }
                    }
                  });
  return grad;
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape& is = input.shape();
  if (is.h < 1 || is.w < 1) {
    throw DimensionError("global_avg_pool: empty spatial extent in " +
                         to_string(is));
  }
  Tensor out({is.n, is.c, 1, 1});
  const int64_t plane = is.plane();
  for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
    const double* src = input.ptr() + nc * plane;
    double acc = 0.0;
    for (int64_t i = 0; i < plane; ++i) acc += src[i];
    out[nc] = acc / static_cast<double>(plane);
  }
  return out;
}

Tensor global_avg_pool_backward(const Tensor& grad_output,
                                const Shape& input_shape) {
  Tensor grad(input_shape);
  const int64_t plane = input_shape.plane();
  for (int64_t nc = 0; nc < input_shape.n * input_shape.c; ++nc) {
    const double g = grad_output[nc] / static_cast<double>(plane);
    std::fill(grad.ptr() + nc * plane, grad.ptr() + (nc + 1) * plane, g);
  }
  return grad;
}

// ---- elementwise / dense ---------------------------------------------------

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0 ? input[i] : 0.0;
  }
  return out;
}

Tensor relu_backward(const Tensor& grad_output, const Tensor& input) {
  Tensor grad(input.shape());
  for (int64_t i = 0; i < input.size(); ++i) {
    grad[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
  }
  return grad;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const int64_t n = input.shape().n;
  const int64_t in = input.shape().sample_size();
  const int64_t out_features = weight.shape().n;
  if (weight.shape().sample_size() != in) {
    throw DimensionError("linear: input has " + std::to_string(in) +
                         " features but weight expects " +
                         std::to_string(weight.shape().sample_size()) + ": " +
                         shapes(input.shape(), weight.shape()));
  }
  require_bias(bias, out_features, "linear");
  Tensor out({n, out_features, 1, 1});
  for (int64_t s = 0; s < n; ++s) {
    const double* x = input.ptr() + s * in;
    for (int64_t o = 0; o < out_features; ++o) {
      const double* wo = weight.ptr() + o * in;
      double acc = bias[o];
      for (int64_t i = 0; i < in; ++i) acc += wo[i] * x[i];
      out[s * out_features + o] = acc;
    }
  }
  return out;
}

LinearGrads linear_backward(const Tensor& grad_output, const Tensor& input,
                            const Tensor& weight) {
  const int64_t n = input.shape().n;
  const int64_t in = input.shape().sample_size();
  const int64_t out_features = weight.shape().n;
  if (grad_output.size() != n * out_features) {
    throw DimensionError("linear backward: gradient shape mismatch: " +
                         shapes(grad_output.shape(), {n, out_features, 1, 1}));
  }
  LinearGrads grads{Tensor(input.shape()), Tensor(weight.shape()),
                    Tensor({out_features, 1, 1, 1})};
  for (int64_t s = 0; s < n; ++s) {
    const double* x = input.ptr() + s * in;
    double* dx = grads.input.ptr() + s * in;
    for (int64_t o = 0; o < out_features; ++o) {
      const double g = grad_output[s * out_features + o];
      grads.bias[o] += g;
      if (g == 0.0) continue;
      const double* wo = weight.ptr() + o * in;
      double* dwo = grads.weight.ptr() + o * in;
      for (int64_t i = 0; i < in; ++i) {
        dwo[i] += g * x[i];
        dx[i] += g * wo[i];
      }
    }
  }
  return grads;
}

Tensor concat_channels(std::span<const Tensor> inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape& first = inputs[0].shape();
  int64_t channels = 0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Shape& s = inputs[i].shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw DimensionError("concat_channels: input " + std::to_string(i) +
                           " has shape " + to_string(s) +
                           ", incompatible with input 0 " + to_string(first));
    }
    channels += s.c;
  }
  Tensor out({first.n, channels, first.h, first.w});
  const int64_t plane = first.plane();
  double* dst = out.ptr();
  for (int64_t n = 0; n < first.n; ++n) {
    for (const Tensor& t : inputs) {
      const int64_t count = t.shape().c * plane;
      const double* src = t.ptr() + n * count;
      dst = std::copy(src, src + count, dst);
    }
  }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& grad_output,
                                   std::span<const int64_t> channel_counts) {
  std::vector<Tensor> parts;
  int64_t begin = 0;
  for (int64_t c : channel_counts) {
    parts.push_back(grad_output.channel_slice(begin, begin + c));
    begin += c;
  }
  if (begin != grad_output.shape().c) {
    throw DimensionError("split_channels: counts do not cover " +
                         to_string(grad_output.shape()));
  }
  return parts;
}

Tensor dropout_mask(const Shape& shape, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ParameterError("dropout probability must be in [0, 1), got " +
                         std::to_string(p));
  }
  Tensor mask(shape, 1.0);
  if (p == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - p);
  for (int64_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0 : keep_scale;
  }
  return mask;
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("multiply: " + shapes(a.shape(), b.shape()));
  }
  Tensor out(a.shape());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor softmax(const Tensor& logits) {
  const int64_t n = logits.shape().n;
  const int64_t k = logits.shape().sample_size();
  Tensor probs(logits.shape());
  for (int64_t s = 0; s < n; ++s) {
    const double* z = logits.ptr() + s * k;
    double* p = probs.ptr() + s * k;
    const double peak = *std::max_element(z, z + k);
    double total = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      p[j] = std::exp(z[j] - peak);
      total += p[j];
    }
    for (int64_t j = 0; j < k; ++j) p[j] /= total;
  }
  return probs;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits,
                                          std::span<const int> labels) {
  const int64_t n = logits.shape().n;
  const int64_t k = logits.shape().sample_size();
  if (static_cast<int64_t>(labels.size()) != n) {
    throw DimensionError("softmax_cross_entropy: " +
                         std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(n));
  }
  for (int64_t s = 0; s < n; ++s) {
    if (labels[static_cast<size_t>(s)] < 0 || labels[static_cast<size_t>(s)] >= k) {
      throw DataError("label " + std::to_string(labels[static_cast<size_t>(s)]) +
                      " out of range [0, " + std::to_string(k) +
                      ") at record " + std::to_string(s));
    }
  }
  SoftmaxCrossEntropy result;
  result.probs = Tensor({n, k, 1, 1});
  double total = 0.0;
  for (int64_t s = 0; s < n; ++s) {
    const double* z = logits.ptr() + s * k;
    double* p = result.probs.ptr() + s * k;
    const double peak = *std::max_element(z, z + k);
    double sum = 0.0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(z[j] - peak);
    const double log_sum = std::log(sum);
    for (int64_t j = 0; j < k; ++j) p[j] = std::exp(z[j] - peak - log_sum);
    total += log_sum - (z[labels[static_cast<size_t>(s)]] - peak);
  }
  result.loss = n > 0 ? total / static_cast<double>(n) : 0.0;
  return result;
}

Tensor softmax_cross_entropy_backward(const Tensor& probs,
                                      std::span<const int> labels,
                                      double grad_loss) {
  const int64_t n = probs.shape().n;
  const int64_t k = probs.shape().sample_size();
  Tensor grad(probs.shape());
  const double scale = grad_loss / static_cast<double>(n);
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t j = 0; j < k; ++j) {
      const double onehot = labels[static_cast<size_t>(s)] == j ? 1.0 : 0.0;
      grad[s * k + j] = (probs[s * k + j] - onehot) * scale;
    }
  }
  return grad;
}

// ---- resampling --------------------------------------------------------------

Tensor bilinear_resize(const Tensor& input, int64_t new_h, int64_t new_w) {
  const Shape& is = input.shape();
  if (new_h < 1 || new_w < 1) {
    throw DimensionError("bilinear_resize: target " + std::to_string(new_h) +
                         "x" + std::to_string(new_w) + " must be at least 1x1");
  }
  if (is.h < 1 || is.w < 1) {
    throw DimensionError("bilinear_resize: empty input " + to_string(is));
  }
  if (new_h == is.h && new_w == is.w) return input;

  // Source coordinate of each target row/column, split into a base index and
  // fractional weight.
  auto axis = [](int64_t in, int64_t out) {
    std::vector<std::pair<int64_t, double>> taps(static_cast<size_t>(out));
    const double scale =
        out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
    for (int64_t i = 0; i < out; ++i) {
      const double src = static_cast<double>(i) * scale;
      int64_t base = static_cast<int64_t>(std::floor(src));
      base = std::clamp<int64_t>(base, 0, in - 1);
      double frac = src - static_cast<double>(base);
      if (base == in - 1) frac = 0.0;
      taps[static_cast<size_t>(i)] = {base, frac};
    }
    return taps;
  };
  const auto rows = axis(is.h, new_h);
  const auto cols = axis(is.w, new_w);

  Tensor out({is.n, is.c, new_h, new_w});
  for (int64_t nc = 0; nc < is.n * is.c; ++nc) {
    const double* src = input.ptr() + nc * is.plane();
    double* dst = out.ptr() + nc * new_h * new_w;
    for (int64_t y = 0; y < new_h; ++y) {
      const auto [y0, fy] = rows[static_cast<size_t>(y)];
      const int64_t y1 = std::min(y0 + 1, is.h - 1);
      for (int64_t x = 0; x < new_w; ++x) {
        const auto [x0, fx] = cols[static_cast<size_t>(x)];
        const int64_t x1 = std::min(x0 + 1, is.w - 1);
        const double top = src[y0 * is.w + x0] * (1.0 - fx) + src[y0 * is.w + x1] * fx;
        const double bottom = src[y1 * is.w + x0] * (1.0 - fx) + src[y1 * is.w + x1] * fx;
        dst[y * new_w + x] = top * (1.0 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

RoiPoolResult roi_pool(const Tensor& features, std::span<const CellRect> rects,
                       std::span<const int64_t> batch_index, int grid_h,
                       int grid_w) {
  const Shape& fs = features.shape();
  if (grid_h < 1 || grid_w < 1) {
    throw DimensionError("roi_pool: grid must be at least 1x1");
  }
  if (rects.size() != batch_index.size()) {
    throw DimensionError("roi_pool: " + std::to_string(rects.size()) +
                         " rects but " + std::to_string(batch_index.size()) +
                         " batch indices");
  }
  const int64_t rois = static_cast<int64_t>(rects.size());
  RoiPoolResult result{Tensor({rois, fs.c, grid_h, grid_w}),
                       std::vector<int64_t>(static_cast<size_t>(rois * fs.c * grid_h * grid_w))};
  int64_t o = 0;
  for (int64_t r = 0; r < rois; ++r) {
    const CellRect& rect = rects[static_cast<size_t>(r)];
    const int64_t b = batch_index[static_cast<size_t>(r)];
    if (b < 0 || b >= fs.n) {
      throw DimensionError("roi_pool: batch index " + std::to_string(b) +
                           " out of range for " + to_string(fs));
    }
    if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > fs.w || rect.y1 > fs.h ||
        rect.width() < 1 || rect.height() < 1) {
      throw DegenerateRegionError(
          "roi_pool: rect [" + std::to_string(rect.x0) + "," +
          std::to_string(rect.y0) + "," + std::to_string(rect.x1) + "," +
          std::to_string(rect.y1) + ") is empty or outside the " +
          std::to_string(fs.h) + "x" + std::to_string(fs.w) + " map");
    }
    const int64_t rh = rect.height();
    const int64_t rw = rect.width();
    for (int64_t c = 0; c < fs.c; ++c) {
      const int64_t base = (b * fs.c + c) * fs.plane();
      for (int64_t gy = 0; gy < grid_h; ++gy) {
        const int64_t ys = rect.y0 + (gy * rh) / grid_h;
        const int64_t ye = rect.y0 + ((gy + 1) * rh + grid_h - 1) / grid_h;
        for (int64_t gx = 0; gx < grid_w; ++gx, ++o) {
          const int64_t xs = rect.x0 + (gx * rw) / grid_w;
          const int64_t xe = rect.x0 + ((gx + 1) * rw + grid_w - 1) / grid_w;
          int64_t best_index = base + ys * fs.w + xs;
          double best = features[best_index];
          for (int64_t y = ys; y < ye; ++y) {
            for (int64_t x = xs; x < xe; ++x) {
              const int64_t idx = base + y * fs.w + x;
              if (features[idx] > best) {
                best = features[idx];
                best_index = idx;
              }
            }
          }
          result.output[o] = best;
          result.argmax[static_cast<size_t>(o)] = best_index;
        }
      }
    }
  }
  return result;
}

Tensor roi_pool_backward(const Tensor& grad_output, const Shape& feature_shape,
                         std::span<const int64_t> argmax) {
  return maxpool2d_backward(grad_output, feature_shape, argmax);
}

}  // namespace logonet::kernels
