#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace logonet {

// (batch, channels, height, width). Vectors and matrices are stored as
// (n, features, 1, 1).
struct Shape {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  int64_t size() const { return n * c * h * w; }
  int64_t plane() const { return h * w; }
  int64_t sample_size() const { return c * h * w; }

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

// Dense row-major (n, c, h, w) array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }
  static Tensor constant(Shape shape, double value) { return Tensor(shape, value); }

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(index(n, c, h, w))];
  }
  double at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(index(n, c, h, w))];
  }
  int64_t index(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  // Same data, different shape; sizes must agree.
  Tensor reshaped(Shape shape) const;

  // Channels [begin, end) of every sample.
  Tensor channel_slice(int64_t begin, int64_t end) const;
  // Sample `index` as a (1, c, h, w) tensor.
  Tensor sample(int64_t index) const;

  void fill(double value);
  bool all_finite() const;
  double sum() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace logonet
