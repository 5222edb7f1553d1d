#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvse {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t volume(const Shape& shape);

/// Thrown when tensor extents do not conform to an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles. Plain value type; gradient tracking
/// lives on the Tape, not here.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor filled(Shape shape, double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t row, std::size_t col);
  double at(std::size_t row, std::size_t col) const;

  /// Value of a single-element tensor.
  double item() const;

  /// Same data, new extents. Volume must match.
  Tensor reshaped(Shape shape) const;
  /// Row `index` of the leading axis as a tensor of rank-1 lower.
  Tensor row(std::size_t index) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double l2_norm(std::span<const double> values);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mvse
