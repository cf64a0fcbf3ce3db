#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fds/dataset.hpp"

namespace fds {

enum class TextureKind { Stripes, Checker, NoiseBlobs };
enum class DefectKind { ScratchLine, Blob, Hole };

std::string to_string(TextureKind kind);
std::string to_string(DefectKind kind);
TextureKind parse_texture_kind(const std::string& s);
DefectKind parse_defect_kind(const std::string& s);

/// Parameters of a procedurally generated MVTec-style category.
struct SyntheticSpec {
  TextureKind texture_kind = TextureKind::Stripes;
  DefectKind defect_kind = DefectKind::Blob;
  int n_normal = 40;         // train/good
  int n_defect_train = 5;    // extra anomalous images available for shot selection
  int n_defect_test = 20;    // anomalous images intended for evaluation
  int n_normal_test = 10;    // test/good
  int resolution = 64;
  std::uint64_t seed = 0;
  /// Fraction of train/good images rendered with a rotated, darker texture.
  double mismatch_fraction = 0.0;
  /// Defaults to the texture name.
  std::string category;

  void validate() const;
  std::string category_name() const;
};

struct SyntheticSummary {
  std::string category;
  int normal_train = 0;
  int defect_images = 0;
  int normal_test = 0;
  int masks = 0;
};

/// Builds the category in memory. Pixel values are already byte-quantised,
/// so writing and reloading reproduces them exactly.
CategoryData render_synthetic(const SyntheticSpec& spec);

/// Renders and writes `<out>/<category>/...` in MVTec layout. Anomalous images
/// (n_defect_train + n_defect_test of them) go to test/<defect_kind>/.
SyntheticSummary generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out);

}  // namespace fds
