#pragma once

#include <span>
#include <string>

#include "logonet/autograd.hpp"

namespace logonet {

// A named trainable tensor. `value` is a gradient-tracking leaf on the tape.
struct Parameter {
  std::string name;
  Var value;
  Tensor momentum;  // same shape as value, zero-initialized

  Parameter(std::string name, Tensor initial);
  const Shape& shape() const { return value.shape(); }
};

struct SgdOptions {
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

// v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v.
// grads[i] pairs with params[i].
void sgd_step(std::span<Parameter*> params, std::span<const Tensor> grads,
              const SgdOptions& options);

// Same update using each parameter's accumulated tape gradient.
void sgd_step(std::span<Parameter*> params, const SgdOptions& options);

}  // namespace logonet
