#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cse {

/// Dense row-major tensor of doubles. The only numeric currency of the
/// kernels, models and reports.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}

  Tensor(std::initializer_list<int> shape, double fill = 0.0)
      : Tensor(std::vector<int>(shape), fill) {}

  static Tensor from(std::vector<int> shape, std::vector<double> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    if (checked_numel(t.shape_) != values.size()) {
      throw std::invalid_argument("tensor data size " + std::to_string(values.size()) +
                                  " does not match shape " + shape_string(t.shape_));
    }
    t.data_ = std::move(values);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  const std::vector<int>& shape() const { return shape_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](size_t flat) { return data_[flat]; }
  double operator[](size_t flat) const { return data_[flat]; }

  double& operator()(int i) { return data_[static_cast<size_t>(i)]; }
  double operator()(int i) const { return data_[static_cast<size_t>(i)]; }

  double& operator()(int i, int j) { return data_[flat2(i, j)]; }
  double operator()(int i, int j) const { return data_[flat2(i, j)]; }

  double& operator()(int i, int j, int k) { return data_[flat3(i, j, k)]; }
  double operator()(int i, int j, int k) const { return data_[flat3(i, j, k)]; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same data, new shape; element count must agree.
  Tensor reshaped(std::vector<int> shape) const {
    if (checked_numel(shape) != data_.size()) {
      throw std::invalid_argument("reshape " + shape_string(shape_) + " -> " +
                                  shape_string(shape) + " changes element count");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  std::string shape_str() const { return shape_string(shape_); }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

  static std::string shape_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
  }

 private:
  static size_t checked_numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int e : shape) {
      if (e < 1) throw std::invalid_argument("tensor extent must be >= 1, got shape " + shape_string(shape));
      n *= static_cast<size_t>(e);
    }
    return n;
  }

  size_t flat2(int i, int j) const {
    return static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j);
  }
  size_t flat3(int i, int j, int k) const {
    return (static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j)) *
               static_cast<size_t>(shape_[2]) +
           static_cast<size_t>(k);
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

inline void ensure_finite(const Tensor& t, const std::string& where) {
  if (!t.all_finite()) {
    throw std::runtime_error("non-finite values produced by " + where);
  }
}

inline void ensure_same_shape(const Tensor& a, const Tensor& b, const std::string& where) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(where + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

}  // namespace cse
