#pragma once

#include <filesystem>

#include "fds/image.hpp"

namespace fds {

/// Reads an 8-bit PNG (gray or colour) as RGB scaled to [0,1].
Image read_png_image(const std::filesystem::path& path);
/// Reads a PNG mask; any nonzero byte marks a defective pixel.
Mask read_png_mask(const std::filesystem::path& path);

/// Writes 8-bit RGB, rounding each channel to the nearest byte.
void write_png_image(const std::filesystem::path& path, const Image& img);
/// Writes 8-bit gray with 0 / 255 values.
void write_png_mask(const std::filesystem::path& path, const Mask& mask);

/// Snaps every channel to the nearest k/255 so a write/read cycle is exact.
void quantize_to_bytes(Image& img);

}  // namespace fds
