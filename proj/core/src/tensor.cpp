#include "fds/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fds/error.hpp"

namespace fds {

Tensor::Tensor(int n, int c, int h, int w, double fill) : shape_{n, c, h, w} {
  if (n < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("negative tensor dimension");
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw ShapeError("shape mismatch in +=: " + shape_string() + " vs " + other.shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor Tensor::slice(int i) const {
  if (i < 0 || i >= n()) throw ShapeError("slice index out of range");
  Tensor out(1, c(), h(), w());
  auto src = sample(i);
  std::copy(src.begin(), src.end(), out.data());
  return out;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  return "[" + std::to_string(shape_[0]) + "," + std::to_string(shape_[1]) + "," +
         std::to_string(shape_[2]) + "," + std::to_string(shape_[3]) + "]";
}

Tensor stack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  const auto& first = parts.front();
  int total = 0;
  for (const auto& p : parts) {
    if (p.c() != first.c() || p.h() != first.h() || p.w() != first.w()) {
      throw ShapeError("stack: mismatched sample shapes");
    }
    total += p.n();
  }
  Tensor out(total, first.c(), first.h(), first.w());
  double* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.data(), p.data() + p.size(), dst);
  return out;
}

}  // namespace fds
