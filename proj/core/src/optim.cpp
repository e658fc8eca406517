#include "logonet/optim.hpp"

#include <vector>

#include "logonet/error.hpp"

namespace logonet {

Parameter::Parameter(std::string name, Tensor initial)
    : name(std::move(name)), momentum(initial.shape()) {
  value = Var::leaf(std::move(initial), true);
}

void sgd_step(std::span<Parameter*> params, std::span<const Tensor> grads,
              const SgdOptions& options) {
  // lr == 0 is accepted as a frozen step; only negative rates are rejected.
  if (!(options.lr >= 0.0)) {
    throw ParameterError("learning rate must be non-negative, got " +
                         std::to_string(options.lr));
  }
  if (!(options.momentum >= 0.0 && options.momentum < 1.0)) {
    throw ParameterError("momentum must be in [0, 1), got " +
                         std::to_string(options.momentum));
  }
  if (params.size() != grads.size()) {
    throw DimensionError("sgd_step: " + std::to_string(params.size()) +
                         " parameters but " + std::to_string(grads.size()) +
                         " gradients");
  }
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const Tensor& g = grads[i];
    if (g.shape() != p.shape()) {
      throw DimensionError("sgd_step: gradient for '" + p.name + "' has shape " +
                           to_string(g.shape()) + ", parameter is " +
                           to_string(p.shape()));
    }
    Tensor& w = p.value.mutable_value();
    for (int64_t j = 0; j < w.size(); ++j) {
      p.momentum[j] = options.momentum * p.momentum[j] + g[j] +
                      options.weight_decay * w[j];
      w[j] -= options.lr * p.momentum[j];
    }
  }
}

void sgd_step(std::span<Parameter*> params, const SgdOptions& options) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) grads.push_back(p->value.grad());
  sgd_step(params, grads, options);
}

}  // namespace logonet
