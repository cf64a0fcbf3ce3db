#include "fds/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fds/error.hpp"
#include "fds/png_io.hpp"
#include "fds/rng.hpp"

namespace fds {
namespace fs = std::filesystem;
namespace {

using Color = std::array<double, 3>;
constexpr double kPi = std::numbers::pi;

enum StreamTag : std::uint64_t { kCategory = 1, kNormalTrain = 2, kDefect = 3, kNormalTest = 4 };

std::uint64_t image_seed(std::uint64_t seed, StreamTag tag, int index) {
  return mix_seed(seed, (static_cast<std::uint64_t>(tag) << 32) | static_cast<std::uint32_t>(index));
}

struct CategoryStyle {
  Color dark;
  Color light;
  double period;
  double angle;
  Color defect_tint;
};

// Appearance shared by every image of the category.
CategoryStyle make_style(const SyntheticSpec& spec) {
  Rng rng(image_seed(spec.seed, kCategory, 0));
  CategoryStyle s{};
  const double base = rng.uniform(0.25, 0.45);
  for (auto& c : s.dark) c = base + rng.uniform(-0.08, 0.08);
  for (int i = 0; i < 3; ++i) s.light[i] = s.dark[i] + rng.uniform(0.2, 0.3);
  s.period = spec.resolution / rng.uniform(6.0, 9.0);
  s.angle = rng.uniform(0.0, kPi);
  // Defects of one category share a look: dark, bright or tinted.
  const int style = static_cast<int>(rng.below(3));
  for (auto& c : s.defect_tint) {
    c = style == 0 ? rng.uniform(0.02, 0.12) : style == 1 ? rng.uniform(0.85, 0.97) : rng.uniform(0.1, 0.9);
  }
  return s;
}

struct ImageStyle {
  double phase_x, phase_y, angle, brightness;
};

ImageStyle sample_image_style(const CategoryStyle& cat, Rng& rng, bool mismatched) {
  ImageStyle st{};
  st.phase_x = rng.uniform(0.0, cat.period);
  st.phase_y = rng.uniform(0.0, cat.period);
  st.angle = cat.angle + rng.uniform(-0.12, 0.12) + (mismatched ? kPi / 2 : 0.0);
  st.brightness = rng.uniform(0.93, 1.07) * (mismatched ? 0.6 : 1.0);
  return st;
}

Image render_texture(const SyntheticSpec& spec, const CategoryStyle& cat, const ImageStyle& st,
                     Rng& rng) {
  const int r = spec.resolution;
  Image img(r, r);
  const double ca = std::cos(st.angle), sa = std::sin(st.angle);

  struct Bump {
    double x, y, sigma, amp;
  };
  std::vector<Bump> bumps;
  if (spec.texture_kind == TextureKind::NoiseBlobs) {
    for (int i = 0; i < 14; ++i) {
      bumps.push_back({rng.uniform(0, r), rng.uniform(0, r), r * rng.uniform(0.06, 0.14),
                       rng.uniform(-1.0, 1.0)});
    }
  }

  for (int y = 0; y < r; ++y) {
    for (int x = 0; x < r; ++x) {
      const double u = x * ca + y * sa + st.phase_x;
      const double v = -x * sa + y * ca + st.phase_y;
      double t = 0.0;
      switch (spec.texture_kind) {
        case TextureKind::Stripes:
          t = 0.5 + 0.5 * std::sin(2.0 * kPi * u / cat.period);
          break;
        case TextureKind::Checker: {
          const auto cell = [&](double q) { return static_cast<long>(std::floor(q / (cat.period * 0.5))); };
          t = ((cell(u) + cell(v)) % 2 == 0) ? 0.15 : 0.85;
          break;
        }
        case TextureKind::NoiseBlobs: {
          double acc = 0.0;
          for (const auto& b : bumps) {
            const double d2 = (x - b.x) * (x - b.x) + (y - b.y) * (y - b.y);
            acc += b.amp * std::exp(-d2 / (2 * b.sigma * b.sigma));
          }
          t = std::clamp(0.5 + 0.45 * acc, 0.0, 1.0);
          break;
        }
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double c = (cat.dark[ch] + t * (cat.light[ch] - cat.dark[ch])) * st.brightness;
        img.at(y, x, ch) = static_cast<float>(std::clamp(c + rng.normal(0.0, 0.02), 0.0, 1.0));
      }
    }
  }
  return img;
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * dx - px, qy = ay + t * dy - py;
  return std::sqrt(qx * qx + qy * qy);
}

// Paints one defect in place and returns its exact mask.
Mask paint_defect(Image& img, DefectKind kind, const Color& base_tint, Rng& rng) {
  const int r = img.height;
  Mask mask(r, r);
  Color tint{};
  for (int ch = 0; ch < 3; ++ch) tint[ch] = std::clamp(base_tint[ch] + rng.uniform(-0.08, 0.08), 0.0, 1.0);

  switch (kind) {
    case DefectKind::ScratchLine: {
      const double thickness = std::max(2.0, r / 28.0);
      const double len = r * rng.uniform(0.3, 0.6);
      const double ang = rng.uniform(0.0, kPi);
      const double cx = rng.uniform(0.25 * r, 0.75 * r), cy = rng.uniform(0.25 * r, 0.75 * r);
      const double ax = cx - 0.5 * len * std::cos(ang), ay = cy - 0.5 * len * std::sin(ang);
      const double bx = cx + 0.5 * len * std::cos(ang), by = cy + 0.5 * len * std::sin(ang);
      for (int y = 0; y < r; ++y) {
        for (int x = 0; x < r; ++x) {
          if (segment_distance(x + 0.5, y + 0.5, ax, ay, bx, by) <= thickness / 2) mask.at(y, x) = 1;
        }
      }
      break;
    }
    case DefectKind::Blob: {
      const double a = r * rng.uniform(0.08, 0.2), b = r * rng.uniform(0.08, 0.2);
      const double rot = rng.uniform(0.0, kPi);
      const double reach = std::max(a, b) + 1;
      const double cx = rng.uniform(reach, r - reach), cy = rng.uniform(reach, r - reach);
      const double c = std::cos(rot), s = std::sin(rot);
      for (int y = 0; y < r; ++y) {
        for (int x = 0; x < r; ++x) {
          const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
          const double u = (dx * c + dy * s) / a, v = (-dx * s + dy * c) / b;
          if (u * u + v * v <= 1.0) mask.at(y, x) = 1;
        }
      }
      break;
    }
    case DefectKind::Hole: {
      const double rad = r * rng.uniform(0.06, 0.12);
      const double cx = rng.uniform(rad + 1, r - rad - 1), cy = rng.uniform(rad + 1, r - rad - 1);
      for (int y = 0; y < r; ++y) {
        for (int x = 0; x < r; ++x) {
          const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
          if (d <= rad) mask.at(y, x) = 1;
        }
      }
      for (auto& t : tint) t *= 0.3;
      break;
    }
  }

  for (int y = 0; y < r; ++y) {
    for (int x = 0; x < r; ++x) {
      if (!mask.at(y, x)) continue;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = 0.25 * img.at(y, x, ch) + 0.75 * tint[ch] + rng.normal(0.0, 0.03);
        img.at(y, x, ch) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return mask;
}

std::string index_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

}  // namespace

std::string to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::Stripes: return "stripes";
    case TextureKind::Checker: return "checker";
    case TextureKind::NoiseBlobs: return "noise-blobs";
  }
  return "?";
}

std::string to_string(DefectKind kind) {
  switch (kind) {
    case DefectKind::ScratchLine: return "scratch-line";
    case DefectKind::Blob: return "blob";
    case DefectKind::Hole: return "hole";
  }
  return "?";
}

TextureKind parse_texture_kind(const std::string& s) {
  if (s == "stripes") return TextureKind::Stripes;
  if (s == "checker") return TextureKind::Checker;
  if (s == "noise-blobs") return TextureKind::NoiseBlobs;
  throw UsageError("unknown texture kind '" + s + "'");
}

DefectKind parse_defect_kind(const std::string& s) {
  if (s == "scratch-line") return DefectKind::ScratchLine;
  if (s == "blob") return DefectKind::Blob;
  if (s == "hole") return DefectKind::Hole;
  throw UsageError("unknown defect kind '" + s + "'");
}

void SyntheticSpec::validate() const {
  if (n_normal <= 0) throw UsageError("synthetic spec: n_normal must be positive");
  if (n_defect_train < 0 || n_defect_test < 0 || n_normal_test < 0) {
    throw UsageError("synthetic spec: counts must be non-negative");
  }
  if (resolution < 64) throw UsageError("synthetic spec: resolution must be at least 64");
  if (mismatch_fraction < 0.0 || mismatch_fraction > 1.0) {
    throw UsageError("synthetic spec: mismatch_fraction must lie in [0,1]");
  }
}

std::string SyntheticSpec::category_name() const {
  return category.empty() ? to_string(texture_kind) : category;
}

CategoryData render_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const CategoryStyle cat = make_style(spec);
  CategoryData data;
  data.name = spec.category_name();

  const int mismatched =
      static_cast<int>(std::lround(spec.mismatch_fraction * static_cast<double>(spec.n_normal)));
  for (int i = 0; i < spec.n_normal; ++i) {
    Rng rng(image_seed(spec.seed, kNormalTrain, i));
    // Mismatched images sit at the end of the sorted listing.
    const ImageStyle st = sample_image_style(cat, rng, i >= spec.n_normal - mismatched);
    Image img = render_texture(spec, cat, st, rng);
    quantize_to_bytes(img);
    data.normal_train.push_back(std::move(img));
  }
  const int n_defects = spec.n_defect_train + spec.n_defect_test;
  for (int i = 0; i < n_defects; ++i) {
    Rng rng(image_seed(spec.seed, kDefect, i));
    const ImageStyle st = sample_image_style(cat, rng, false);
    Image img = render_texture(spec, cat, st, rng);
    Mask mask = paint_defect(img, spec.defect_kind, cat.defect_tint, rng);
    quantize_to_bytes(img);
    data.defect_test.push_back({std::move(img), std::move(mask), to_string(spec.defect_kind), index_name(i)});
  }
  for (int i = 0; i < spec.n_normal_test; ++i) {
    Rng rng(image_seed(spec.seed, kNormalTest, i));
    const ImageStyle st = sample_image_style(cat, rng, false);
    Image img = render_texture(spec, cat, st, rng);
    quantize_to_bytes(img);
    data.normal_test.push_back(std::move(img));
  }
  return data;
}

SyntheticSummary generate_synthetic(const SyntheticSpec& spec, const fs::path& out) {
  const CategoryData data = render_synthetic(spec);
  const fs::path base = out / data.name;
  const std::string defect = to_string(spec.defect_kind);
  fs::create_directories(base / "train" / "good");
  fs::create_directories(base / "test" / "good");
  if (!data.defect_test.empty()) {
    fs::create_directories(base / "test" / defect);
    fs::create_directories(base / "ground_truth" / defect);
  }

  SyntheticSummary summary;
  summary.category = data.name;
  for (std::size_t i = 0; i < data.normal_train.size(); ++i) {
    write_png_image(base / "train" / "good" / (index_name(static_cast<int>(i)) + ".png"), data.normal_train[i]);
    ++summary.normal_train;
  }
  for (const auto& d : data.defect_test) {
    write_png_image(base / "test" / defect / (d.stem + ".png"), d.image);
    write_png_mask(base / "ground_truth" / defect / (d.stem + "_mask.png"), d.mask);
    ++summary.defect_images;
    ++summary.masks;
  }
  for (std::size_t i = 0; i < data.normal_test.size(); ++i) {
    write_png_image(base / "test" / "good" / (index_name(static_cast<int>(i)) + ".png"), data.normal_test[i]);
    ++summary.normal_test;
  }
  return summary;
}

}  // namespace fds
