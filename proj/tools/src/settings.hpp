#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fds/dataset.hpp"
#include "fds/model.hpp"
#include "fds/trainer.hpp"

namespace fds::cli {

using KeyValues = std::map<std::string, std::string>;

/// Parses the flat `key = value` subset of TOML: comments, blank lines,
/// quoted or bare values. Section headers are accepted and ignored.
KeyValues parse_flat_config(const std::string& text, const std::string& origin = "config");
KeyValues read_flat_config(const std::filesystem::path& path);

/// Everything needed to reproduce one training run.
struct RunSettings {
  std::string data;
  std::string category;
  std::string out;
  int k = 1;
  std::string model = "tiny";
  int resolution = 0;  // 0: model default (64 tiny, 512 full)
  ShotGrouping shots_per = ShotGrouping::PerCategory;
  std::string pretrained;
  int checkpoint_every = 0;
  bool batch_set = false;
  TrainConfig train = TrainConfig::for_k_shot(1);

  /// Applies one key (underscore spelling, as in config files).
  void set(const std::string& key, const std::string& value);
  /// Applies keys in order; later maps override earlier ones.
  void apply(const KeyValues& values);
  /// Resolves derived defaults and rejects invalid combinations.
  void finalize();

  ModelConfig model_config() const;
  nlohmann::json to_json() const;
  static RunSettings from_json(const nlohmann::json& j);

  static const std::vector<std::string>& keys();
};

/// FDS_SEED when set and numeric.
std::optional<std::uint64_t> seed_from_env();

std::string to_string(ShotGrouping g);
ShotGrouping parse_shot_grouping(const std::string& s);

}  // namespace fds::cli
