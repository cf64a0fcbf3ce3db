#include "fds/png_io.hpp"

#include <png.h>

#include <cmath>
#include <cstring>

#include "fds/error.hpp"

namespace fds {
namespace {

std::vector<std::uint8_t> read_png_bytes(const std::filesystem::path& path, std::uint32_t format,
                                         int& height, int& width) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw DataError("unreadable image " + path.string() + ": " + image.message);
  }
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("unreadable image " + path.string() + ": " + image.message);
  }
  height = static_cast<int>(image.height);
  width = static_cast<int>(image.width);
  return buffer;
}

void write_png_bytes(const std::filesystem::path& path, std::uint32_t format, int height, int width,
                     const std::vector<std::uint8_t>& bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw DataError("cannot write " + path.string() + ": " + image.message);
  }
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

Image read_png_image(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto bytes = read_png_bytes(path, PNG_FORMAT_RGB, h, w);
  Image img(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = static_cast<float>(bytes[i]) / 255.0f;
  img.source_path = path.string();
  return img;
}

Mask read_png_mask(const std::filesystem::path& path) {
  int h = 0, w = 0;
  const auto bytes = read_png_bytes(path, PNG_FORMAT_GRAY, h, w);
  Mask mask(h, w);
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.values[i] = bytes[i] != 0 ? 1 : 0;
  return mask;
}

void write_png_image(const std::filesystem::path& path, const Image& img) {
  std::vector<std::uint8_t> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.pixels[i]);
  write_png_bytes(path, PNG_FORMAT_RGB, img.height, img.width, bytes);
}

void write_png_mask(const std::filesystem::path& path, const Mask& mask) {
  std::vector<std::uint8_t> bytes(mask.values.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.values[i] != 0 ? 255 : 0;
  write_png_bytes(path, PNG_FORMAT_GRAY, mask.height, mask.width, bytes);
}

void quantize_to_bytes(Image& img) {
  for (float& v : img.pixels) v = static_cast<float>(to_byte(v)) / 255.0f;
}

}  // namespace fds
