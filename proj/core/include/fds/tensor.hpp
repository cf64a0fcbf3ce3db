#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fds {

/// Dense NCHW array of doubles. Scalars are 1x1x1x1 tensors.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  static Tensor scalar(double v) { return Tensor(1, 1, 1, 1, v); }
  static Tensor like(const Tensor& other, double fill = 0.0) {
    return Tensor(other.n(), other.c(), other.h(), other.w(), fill);
  }

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Elements per sample (C*H*W).
  std::size_t sample_size() const {
    return static_cast<std::size_t>(shape_[1]) * shape_[2] * shape_[3];
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(shape_[2]) * shape_[3]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> sample(int i) { return {data_.data() + i * sample_size(), sample_size()}; }
  std::span<const double> sample(int i) const {
    return {data_.data() + i * sample_size(), sample_size()};
  }

  double& at(int ni, int ci, int hi, int wi) { return data_[index(ni, ci, hi, wi)]; }
  double at(int ni, int ci, int hi, int wi) const { return data_[index(ni, ci, hi, wi)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Value of a 1-element tensor.
  double item() const;

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  /// Copy of sample i as a batch of one.
  Tensor slice(int i) const;
  bool all_finite() const;
  std::string shape_string() const;
  bool operator==(const Tensor& other) const = default;

 private:
  std::size_t index(int ni, int ci, int hi, int wi) const {
    return ((static_cast<std::size_t>(ni) * shape_[1] + ci) * shape_[2] + hi) * shape_[3] + wi;
  }

  std::array<int, 4> shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

/// Stacks equally-shaped batches along N.
Tensor stack(std::span<const Tensor> parts);

}  // namespace fds
