#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fds/image.hpp"

namespace fds {

/// An annotated anomalous image.
struct DefectSample {
  Image image;
  Mask mask;
  std::string defect_type;
  /// File stem within the defect-type directory ("000", "013", ...).
  std::string stem;
};

/// One MVTec-style category loaded into memory.
struct CategoryData {
  std::string name;
  std::vector<Image> normal_train;
  std::vector<DefectSample> defect_test;
  /// Normal test images; their masks are all zero by construction.
  std::vector<Image> normal_test;
};

/// Loads `<root>/<category>` laid out as train/good, test/<type>,
/// ground_truth/<type>/<stem>_mask.png. With `resolution`, every image and
/// mask goes through resize_pair at load time.
CategoryData load_mvtec_category(const std::filesystem::path& root, const std::string& category,
                                 std::optional<int> resolution = std::nullopt);

/// Category directories (those with a train/good folder) under `root`, sorted.
std::vector<std::string> list_categories(const std::filesystem::path& root);

/// Image bilinear, mask nearest-neighbour then re-binarised.
std::pair<Image, Mask> resize_pair(const Image& img, const Mask& mask, int res);

/// How K shots are drawn when a category has several defect types.
enum class ShotGrouping { PerCategory, PerDefectType };

/// Counts reads of the held-out split so tests can prove no gradient step
/// ever touched it.
class AccessAudit {
 public:
  void record_test_read() { test_reads_.fetch_add(1, std::memory_order_relaxed); }
  std::size_t test_reads() const { return test_reads_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::size_t> test_reads_{0};
};

/// A sampled few-shot split: K annotated defect pairs for training, the normal
/// pool, and the remaining defect pairs held out for testing.
class Episode {
 public:
  Episode(std::vector<DefectSample> defect_pairs, std::vector<int> category_ids,
          std::vector<Image> normal_pool, std::vector<DefectSample> test_defects,
          std::vector<Image> test_normals, std::uint64_t seed, int k_shot);

  const std::vector<DefectSample>& defect_pairs() const { return defect_pairs_; }
  const std::vector<int>& category_ids() const { return category_ids_; }
  const std::vector<Image>& normal_pool() const { return normal_pool_; }
  std::uint64_t seed() const { return seed_; }
  int k_shot() const { return k_shot_; }

  /// Held-out split. Each call is recorded in the access audit.
  const std::vector<DefectSample>& test_defects() const;
  const std::vector<Image>& test_normals() const;
  std::size_t test_defect_count() const { return test_defects_.size(); }
  const AccessAudit& audit() const { return *audit_; }

 private:
  std::vector<DefectSample> defect_pairs_;
  std::vector<int> category_ids_;
  std::vector<Image> normal_pool_;
  std::vector<DefectSample> test_defects_;
  std::vector<Image> test_normals_;
  std::uint64_t seed_;
  int k_shot_;
  std::shared_ptr<AccessAudit> audit_;
};

struct EpisodeOptions {
  ShotGrouping grouping = ShotGrouping::PerCategory;
  int category_id = 0;
  std::vector<Image> test_normals;
};

/// Draws K defect pairs (per category, or per defect type) with a seeded
/// generator; all other defect pairs become the test split.
Episode build_episode(const std::vector<DefectSample>& defect_pool,
                      const std::vector<Image>& normal_pool, int k, std::uint64_t seed,
                      EpisodeOptions options = {});

/// Indices of the K-shot selection, exposed for manifests and tests.
std::vector<std::size_t> select_shots(const std::vector<DefectSample>& defect_pool, int k,
                                      std::uint64_t seed, ShotGrouping grouping);

}  // namespace fds
