#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "difflab/errors.hpp"

namespace difflab {

using Vec = std::vector<double>;

// Dense row-major tensor of 64-bit floats. Rank is at most 2 (scalars are
// shape {1}); that is all the diffusion lab ever needs.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

  Tensor(std::vector<int> shape, Vec data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(checked_size(shape_) == data_.size(), "Tensor: shape/data length mismatch");
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(Vec v) {
    const int n = static_cast<int>(v.size());
    return Tensor({1, n}, std::move(v));
  }
  static Tensor vector(Vec v) {
    const int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
  }
  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_.size(); }
  bool is_scalar() const { return data_.size() == 1; }

  int rows() const { return rank() == 2 ? shape_[0] : 1; }
  int cols() const { return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 0); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  Vec& vec() { return data_; }
  const Vec& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }

  double item() const {
    require(is_scalar(), "Tensor::item: not a scalar");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_finite(const std::string& who) const {
    if (!all_finite()) throw ContractViolation(who + ": non-finite entries");
  }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + ")";
  }

 private:
  static std::size_t checked_size(const std::vector<int>& shape) {
    require(!shape.empty(), "Tensor: empty shape");
    std::size_t n = 1;
    for (int d : shape) {
      require(d >= 1, "Tensor: nonpositive dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::vector<int> shape_;
  Vec data_;
};

}  // namespace difflab
