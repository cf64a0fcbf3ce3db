#include "fds/image.hpp"

#include <algorithm>
#include <cmath>

#include "fds/error.hpp"

namespace fds {

std::size_t Mask::positive_count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; }));
}

bool Mask::is_binary() const {
  return std::all_of(values.begin(), values.end(), [](std::uint8_t v) { return v <= 1; });
}

Image resize_bilinear(const Image& img, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize target must be positive");
  if (img.height == height && img.width == width) return img;
  Image out(height, width);
  out.source_path = img.source_path;
  const double sy = static_cast<double>(img.height) / height;
  const double sx = static_cast<double>(img.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        const double top = (1 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch);
        const double bottom = (1 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch);
        out.at(y, x, ch) = static_cast<float>(std::clamp((1 - wy) * top + wy * bottom, 0.0, 1.0));
      }
    }
  }
  return out;
}

Mask resize_nearest(const Mask& mask, int height, int width) {
  if (height <= 0 || width <= 0) throw ShapeError("resize target must be positive");
  Mask out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(static_cast<int>(static_cast<long long>(y) * mask.height / height), mask.height - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(static_cast<int>(static_cast<long long>(x) * mask.width / width), mask.width - 1);
      out.at(y, x) = mask.at(sy, sx) != 0 ? 1 : 0;
    }
  }
  return out;
}

void validate_image(const Image& img) {
  if (img.height < 32 || img.width < 32) {
    throw DataError("image smaller than 32x32: " + img.source_path.value_or("<memory>"));
  }
  if (img.pixels.size() != static_cast<std::size_t>(img.height) * img.width * 3) {
    throw DataError("image buffer size does not match its dimensions");
  }
  for (float v : img.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DataError("pixel value outside [0,1]");
  }
}

Tensor images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const int h = images.front()->height;
  const int w = images.front()->width;
  Tensor t(static_cast<int>(images.size()), 3, h, w);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& img = *images[i];
    if (!img.same_size(h, w)) throw ShapeError("images_to_tensor: mixed image sizes in batch");
    for (int ch = 0; ch < 3; ++ch) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) t.at(static_cast<int>(i), ch, y, x) = img.at(y, x, ch);
      }
    }
  }
  return t;
}

Tensor masks_to_tensor(const std::vector<const Mask*>& masks) {
  if (masks.empty()) throw ShapeError("masks_to_tensor: empty batch");
  const int h = masks.front()->height;
  const int w = masks.front()->width;
  Tensor t(static_cast<int>(masks.size()), 1, h, w);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const Mask& m = *masks[i];
    if (m.height != h || m.width != w) throw ShapeError("masks_to_tensor: mixed mask sizes in batch");
    for (std::size_t k = 0; k < m.values.size(); ++k) {
      t[i * m.values.size() + k] = m.values[k] != 0 ? 1.0 : 0.0;
    }
  }
  return t;
}

Image tensor_to_image(const Tensor& t, int index) {
  if (t.c() != 3) throw ShapeError("tensor_to_image: expected 3 channels");
  Image img(t.h(), t.w());
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < t.h(); ++y) {
      for (int x = 0; x < t.w(); ++x) {
        img.at(y, x, ch) = static_cast<float>(std::clamp(t.at(index, ch, y, x), 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace fds
