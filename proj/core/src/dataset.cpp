#include "fds/dataset.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "fds/error.hpp"
#include "fds/png_io.hpp"
#include "fds/rng.hpp"

namespace fds {
namespace fs = std::filesystem;
namespace {

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Image load_image(const fs::path& path, std::optional<int> resolution) {
  Image img = read_png_image(path);
  if (resolution) img = resize_bilinear(img, *resolution, *resolution);
  return img;
}

}  // namespace

CategoryData load_mvtec_category(const fs::path& root, const std::string& category,
                                 std::optional<int> resolution) {
  const fs::path base = root / category;
  if (!fs::is_directory(base)) throw DataError("category directory not found: " + base.string());
  if (resolution && *resolution <= 0) throw UsageError("resolution must be positive");

  CategoryData data;
  data.name = category;
  for (const auto& p : png_files(base / "train" / "good")) {
    data.normal_train.push_back(load_image(p, resolution));
  }
  if (data.normal_train.empty()) {
    throw DataError("no normal images in " + (base / "train" / "good").string());
  }

  const fs::path test_dir = base / "test";
  std::vector<fs::path> type_dirs;
  if (fs::is_directory(test_dir)) {
    for (const auto& entry : fs::directory_iterator(test_dir)) {
      if (entry.is_directory()) type_dirs.push_back(entry.path());
    }
  }
  std::sort(type_dirs.begin(), type_dirs.end());
  for (const auto& dir : type_dirs) {
    const std::string type = dir.filename().string();
    const bool is_good = type == "good";
    for (const auto& p : png_files(dir)) {
      if (is_good) {
        data.normal_test.push_back(load_image(p, resolution));
        continue;
      }
      const std::string stem = p.stem().string();
      const fs::path mask_path = base / "ground_truth" / type / (stem + "_mask.png");
      if (!fs::exists(mask_path)) {
        throw DataError("missing mask for defect image " + p.string() + " (expected " +
                        mask_path.string() + ")");
      }
      Image img = read_png_image(p);
      Mask mask = read_png_mask(mask_path);
      if (mask.height != img.height || mask.width != img.width) {
        throw DataError("mask size differs from image size for " + p.string());
      }
      if (resolution) std::tie(img, mask) = resize_pair(img, mask, *resolution);
      if (mask.positive_count() == 0) throw DataError("empty defect mask for " + p.string());
      data.defect_test.push_back({std::move(img), std::move(mask), type, stem});
    }
  }
  return data;
}

std::vector<std::string> list_categories(const fs::path& root) {
  std::vector<std::string> names;
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::is_directory(entry.path() / "train" / "good")) {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::pair<Image, Mask> resize_pair(const Image& img, const Mask& mask, int res) {
  if (res <= 0) throw UsageError("resize_pair: resolution must be positive");
  if (mask.height != img.height || mask.width != img.width) {
    throw ShapeError("resize_pair: mask and image sizes differ");
  }
  return {resize_bilinear(img, res, res), resize_nearest(mask, res, res)};
}

Episode::Episode(std::vector<DefectSample> defect_pairs, std::vector<int> category_ids,
                 std::vector<Image> normal_pool, std::vector<DefectSample> test_defects,
                 std::vector<Image> test_normals, std::uint64_t seed, int k_shot)
    : defect_pairs_(std::move(defect_pairs)),
      category_ids_(std::move(category_ids)),
      normal_pool_(std::move(normal_pool)),
      test_defects_(std::move(test_defects)),
      test_normals_(std::move(test_normals)),
      seed_(seed),
      k_shot_(k_shot),
      audit_(std::make_shared<AccessAudit>()) {
  if (normal_pool_.empty()) throw DataError("episode needs a nonempty normal pool");
  if (category_ids_.size() != defect_pairs_.size()) {
    throw DataError("episode: one category id per defect pair is required");
  }
  for (const auto& pair : defect_pairs_) {
    if (pair.mask.positive_count() == 0) throw DataError("episode defect mask has no positive pixel");
  }
}

const std::vector<DefectSample>& Episode::test_defects() const {
  audit_->record_test_read();
  return test_defects_;
}

const std::vector<Image>& Episode::test_normals() const {
  audit_->record_test_read();
  return test_normals_;
}

std::vector<std::size_t> select_shots(const std::vector<DefectSample>& defect_pool, int k,
                                      std::uint64_t seed, ShotGrouping grouping) {
  if (k < 1) throw UsageError("K must be at least 1");
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < defect_pool.size(); ++i) {
    const std::string key =
        grouping == ShotGrouping::PerDefectType ? defect_pool[i].defect_type : std::string();
    groups[key].push_back(i);
  }
  if (groups.empty()) groups[""];

  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& [type, members] : groups) {
    if (members.size() < static_cast<std::size_t>(k)) {
      throw DataError("defect pool" + (type.empty() ? std::string() : " for type '" + type + "'") +
                      " has " + std::to_string(members.size()) + " pairs, fewer than K=" +
                      std::to_string(k));
    }
    // Partial Fisher-Yates: the first k slots hold the selection.
    for (int i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(members.size() - i);
      std::swap(members[i], members[j]);
      chosen.push_back(members[i]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

Episode build_episode(const std::vector<DefectSample>& defect_pool,
                      const std::vector<Image>& normal_pool, int k, std::uint64_t seed,
                      EpisodeOptions options) {
  const auto chosen = select_shots(defect_pool, k, seed, options.grouping);
  std::vector<DefectSample> train, test;
  std::size_t next = 0;
  for (std::size_t i = 0; i < defect_pool.size(); ++i) {
    if (next < chosen.size() && chosen[next] == i) {
      train.push_back(defect_pool[i]);
      ++next;
    } else {
      test.push_back(defect_pool[i]);
    }
  }
  std::vector<int> ids(train.size(), options.category_id);
  return Episode(std::move(train), std::move(ids), normal_pool, std::move(test),
                 std::move(options.test_normals), seed, k);
}

}  // namespace fds
