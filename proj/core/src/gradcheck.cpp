#include "logonet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "logonet/error.hpp"

namespace logonet {
namespace {

double checked(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("non-finite ") + what +
                       " during finite-difference check");
  }
  return v;
}

}  // namespace

double finite_difference_check(const std::function<Var(const Var&)>& op,
                               const Tensor& input, double step) {
  Var x = Var::leaf(input, true);
  Var y = op(x);
  if (y.value().size() != 1) {
    throw DimensionError("finite_difference_check: op must be scalar-valued");
  }
  checked(y.value()[0], "output");
  backward(y);
  const Tensor analytic = x.grad();

  Tensor probe = input;
  return finite_difference_check(
      probe, analytic,
      [&] { return op(Var::constant(probe)).value()[0]; }, step);
}

double finite_difference_check(Tensor& probe, const Tensor& analytic,
                               const std::function<double()>& eval,
                               double step) {
  if (!(step > 0.0)) {
    throw ParameterError("finite-difference step must be positive");
  }
  if (analytic.size() != probe.size()) {
    throw DimensionError("finite_difference_check: analytic gradient " +
                         to_string(analytic.shape()) + " vs probe " +
                         to_string(probe.shape()));
  }
  double worst = 0.0;
  for (int64_t i = 0; i < probe.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + step;
    const double plus = checked(eval(), "output");
    probe[i] = original - step;
    const double minus = checked(eval(), "output");
    probe[i] = original;
    const double numeric = (plus - minus) / (2.0 * step);
    const double a = checked(analytic[i], "gradient");
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

}  // namespace logonet
