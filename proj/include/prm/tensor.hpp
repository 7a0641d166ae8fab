#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace prm {

/// Raised whenever two shapes that must agree do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const { return channels * height * width; }
  std::size_t plane() const { return height * width; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << s.channels << "x" << s.height << "x" << s.width;
  return os.str();
}

/// Dense channels x height x width array of doubles, channel-major then row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : Tensor(Shape{c, h, w}, fill) {}
  Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t c, std::size_t i, std::size_t j) const {
    return (c * shape_.height + i) * shape_.width + j;
  }
  double& operator()(std::size_t c, std::size_t i, std::size_t j) { return data_[index(c, i, j)]; }
  double operator()(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[index(c, i, j)];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> plane(std::size_t c) { return {data_.data() + c * shape_.plane(), shape_.plane()}; }
  std::span<const double> plane(std::size_t c) const {
    return {data_.data() + c * shape_.plane(), shape_.plane()};
  }

  /// Copy of one channel as a 1 x H x W tensor.
  Tensor channel(std::size_t c) const {
    auto p = plane(c);
    return Tensor(Shape{1, shape_.height, shape_.width}, std::vector<double>(p.begin(), p.end()));
  }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

inline void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + ": expected shape " + to_string(expected) + ", got " +
                     to_string(t.shape()));
  }
}

}  // namespace prm
