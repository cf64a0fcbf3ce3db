#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fds/tensor.hpp"

namespace fds {

/// RGB image, row-major HWC, channel values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
  std::optional<std::string> source_path;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int ch) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
  float at(int y, int x, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  bool same_size(int h, int w) const { return height == h && width == w; }
  bool operator==(const Image& other) const {
    return height == other.height && width == other.width && pixels == other.pixels;
  }
};

/// Binary defect mask, 1 = defective pixel.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  Mask() = default;
  Mask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t positive_count() const;
  bool is_binary() const;
  bool operator==(const Mask& other) const = default;
};

/// Bilinear resampling with half-pixel centres (align_corners = false).
Image resize_bilinear(const Image& img, int height, int width);
/// Nearest-neighbour resampling; output is re-binarised.
Mask resize_nearest(const Mask& mask, int height, int width);

/// Validates the [0,1] range and the minimum 32x32 extent.
void validate_image(const Image& img);

/// Packs images into an [N, 3, H, W] tensor.
Tensor images_to_tensor(const std::vector<const Image*>& images);
/// Packs masks into an [N, 1, H, W] tensor of 0/1 values.
Tensor masks_to_tensor(const std::vector<const Mask*>& masks);
Image tensor_to_image(const Tensor& t, int index);

}  // namespace fds
