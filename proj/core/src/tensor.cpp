#include "logonet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "logonet/error.hpp"

namespace logonet {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << "(" << shape.n << ", " << shape.c << ", " << shape.h << ", " << shape.w
     << ")";
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw DimensionError("negative extent in shape " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  check_shape(shape);
  data_.assign(static_cast<size_t>(shape.size()), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)) {
  check_shape(shape);
  if (static_cast<int64_t>(data_.size()) != shape.size()) {
    throw DimensionError("value count " + std::to_string(data_.size()) +
                         " does not match shape " + to_string(shape));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.size() != shape_.size()) {
    throw DimensionError("cannot reshape " + to_string(shape_) + " to " +
                         to_string(shape));
  }
  return Tensor(shape, data_);
}

Tensor Tensor::channel_slice(int64_t begin, int64_t end) const {
  if (begin < 0 || end > shape_.c || begin > end) {
    throw DimensionError("channel slice [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of range for " +
                         to_string(shape_));
  }
  Tensor out({shape_.n, end - begin, shape_.h, shape_.w});
  const int64_t plane = shape_.plane();
  for (int64_t n = 0; n < shape_.n; ++n) {
    const double* src = ptr() + (n * shape_.c + begin) * plane;
    std::copy(src, src + (end - begin) * plane,
              out.ptr() + n * (end - begin) * plane);
  }
  return out;
}

Tensor Tensor::sample(int64_t index) const {
  if (index < 0 || index >= shape_.n) {
    throw DimensionError("sample index " + std::to_string(index) +
                         " out of range for " + to_string(shape_));
  }
  const int64_t stride = shape_.sample_size();
  Tensor out({1, shape_.c, shape_.h, shape_.w});
  std::copy(ptr() + index * stride, ptr() + (index + 1) * stride, out.ptr());
  return out;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const {
  double total = 0.0;
  for (double v : data_) total += v;
  return total;
}

}  // namespace logonet
