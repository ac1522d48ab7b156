#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcamo/error.hpp"

namespace gcamo {

using Shape = std::vector<std::size_t>;

/// Spatial extents of a volume (x, y, z).
struct Extent3 {
  std::size_t x = 1;
  std::size_t y = 1;
  std::size_t z = 1;

  std::size_t voxels() const { return x * y * z; }
  friend bool operator==(const Extent3&, const Extent3&) = default;
};

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape);

/// Dense row-major array. The last axis is contiguous, so a [C,X,Y,Z] volume
/// stores z fastest.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_product(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (shape_product(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  bool empty() const { return data_.empty(); }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Spatial extents of a rank-3 [X,Y,Z] or rank-4 [C,X,Y,Z] tensor.
  Extent3 spatial() const {
    if (rank() == 4) return {shape_[1], shape_[2], shape_[3]};
    if (rank() == 3) return {shape_[0], shape_[1], shape_[2]};
    throw ShapeError("expected a rank-3 or rank-4 volume, got " +
                     shape_to_string(shape_));
  }

  std::size_t index(std::size_t c, std::size_t x, std::size_t y,
                    std::size_t z) const {
    return ((c * shape_[1] + x) * shape_[2] + y) * shape_[3] + z;
  }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (x * shape_[1] + y) * shape_[2] + z;
  }

  T& at(std::size_t c, std::size_t x, std::size_t y, std::size_t z) {
    return data_[index(c, x, y, z)];
  }
  const T& at(std::size_t c, std::size_t x, std::size_t y,
              std::size_t z) const {
    return data_[index(c, x, y, z)];
  }
  T& at(std::size_t x, std::size_t y, std::size_t z) {
    return data_[index(x, y, z)];
  }
  const T& at(std::size_t x, std::size_t y, std::size_t z) const {
    return data_[index(x, y, z)];
  }

  T sum() const { return std::accumulate(data_.begin(), data_.end(), T{0}); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(),
                   [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) {
        throw ShapeError("tensor extents must be >= 1, got " +
                         shape_to_string(shape_));
      }
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace gcamo
