#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sparsepriv/errors.hpp"

namespace sparsepriv {

/// Dense n-dimensional array of doubles in row-major order. Deliberately
/// minimal: the layers implement their own loops, this only owns storage and
/// shape bookkeeping.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(count(shape_), fill) {}

  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t;
    if (count(shape) != values.size())
      throw ShapeError("Tensor::from: value count " + std::to_string(values.size()) +
                       " does not match shape (" + shape_str(shape) + ")");
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  double at(std::initializer_list<std::size_t> idx) const { return data_[offset(idx)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Tensor reshaped(std::vector<std::size_t> shape) const {
    if (count(shape) != data_.size())
      throw ShapeError("reshape from (" + shape_str(shape_) + ") to (" +
                       shape_str(shape) + ") changes element count");
    Tensor t = *this;
    t.shape_ = std::move(shape);
    return t;
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) os << "x";
      os << s[i];
    }
    return os.str();
  }

 private:
  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    std::size_t off = 0, i = 0;
    for (std::size_t v : idx) {
      off = off * shape_[i] + v;
      ++i;
    }
    return off;
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace sparsepriv
