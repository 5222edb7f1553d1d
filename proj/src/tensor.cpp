#include "mvse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mvse {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t volume(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(volume(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (volume(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + to_string(shape_) + " needs " +
                     std::to_string(volume(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const auto n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     to_string(shape_));
  }
  return shape_[axis];
}

double& Tensor::at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }

double Tensor::at(std::size_t row, std::size_t col) const {
  return data_[row * shape_[1] + col];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("tensor: item() on shape " + to_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (volume(shape) != data_.size()) {
    throw ShapeError("tensor: cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::row(std::size_t index) const {
  if (shape_.empty() || index >= shape_[0]) {
    throw ShapeError("tensor: row " + std::to_string(index) + " out of range for " +
                     to_string(shape_));
  }
  Shape rest(shape_.begin() + 1, shape_.end());
  const auto stride = volume(rest);
  const auto first = data_.begin() + static_cast<std::ptrdiff_t>(index * stride);
  return Tensor(std::move(rest), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(stride)));
}

double l2_norm(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace mvse
