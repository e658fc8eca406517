#pragma once

#include <functional>

#include "logonet/autograd.hpp"

namespace logonet {

// Compares the tape gradient of a scalar function against central
// differences with step `step`:
//   max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
// Throws NumericError if any evaluation is non-finite.
double finite_difference_check(const std::function<Var(const Var&)>& op,
                               const Tensor& input, double step);

// Variant for gradients with respect to a tensor captured by the closure
// (weights, biases). `probe` is mutated in place during the check and
// restored afterwards; `eval` must read it on every call.
double finite_difference_check(Tensor& probe, const Tensor& analytic,
                               const std::function<double()>& eval,
                               double step);

}  // namespace logonet
