#include "settings.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>

#include "fds/error.hpp"

namespace fds::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw UsageError("invalid value '" + v + "' for " + key);
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("invalid boolean '" + v + "' for " + key);
}

std::string to_string(MaskDownsample m) { return m == MaskDownsample::Nearest ? "nearest" : "area"; }

}  // namespace

KeyValues parse_flat_config(const std::string& text, const std::string& origin) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    // Strip a trailing comment outside quotes.
    char quote = 0;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quote == 0 && (ch == '"' || ch == '\'')) quote = ch;
      else if (ch == quote && (quote == '\'' || line[i - 1] != '\\')) quote = 0;
      if (ch == '#' && quote == 0) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError(where + ": malformed section header");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError(where + ": empty key");
    std::replace(key.begin(), key.end(), '-', '_');
    if (!value.empty() && value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') throw UsageError(where + ": unterminated string");
      std::string unq;
      for (std::size_t i = 1; i + 1 < value.size(); ++i) {
        if (value[i] == '\\' && i + 2 < value.size()) ++i;
        unq += value[i];
      }
      value = unq;
    } else if (!value.empty() && value.front() == '\'') {
      // Literal string: no escapes.
      if (value.size() < 2 || value.back() != '\'') throw UsageError(where + ": unterminated string");
      value = value.substr(1, value.size() - 2);
    }
    out[key] = value;
  }
  return out;
}

KeyValues read_flat_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_flat_config(ss.str(), path.string());
}

std::string to_string(ShotGrouping g) { return g == ShotGrouping::PerCategory ? "category" : "defect-type"; }

ShotGrouping parse_shot_grouping(const std::string& s) {
  if (s == "category") return ShotGrouping::PerCategory;
  if (s == "defect-type" || s == "defect_type") return ShotGrouping::PerDefectType;
  throw UsageError("unknown shot grouping '" + s + "' (expected category or defect-type)");
}

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("FDS_SEED");
  if (!v || !*v) return std::nullopt;
  try {
    return parse_number<std::uint64_t>("FDS_SEED", v);
  } catch (const UsageError&) {
    throw UsageError(std::string("FDS_SEED is not an unsigned integer: ") + v);
  }
}

const std::vector<std::string>& RunSettings::keys() {
  static const std::vector<std::string> k{
      "data",      "category",  "out",          "k",           "seed",       "ablation",
      "lambda_mode", "nbr_metric", "cap_prob",  "iters",       "lr",         "batch",
      "resolution", "bce_reduction", "threshold", "eval_every", "inner_per_outer", "model",
      "shots_per", "pretrained", "checkpoint_every", "mask_downsample", "beta1", "beta2"};
  return k;
}

void RunSettings::set(const std::string& key, const std::string& v) {
  if (key == "data") data = v;
  else if (key == "category") category = v;
  else if (key == "out") out = v;
  else if (key == "k") k = parse_number<int>(key, v);
  else if (key == "seed") train.seed = parse_number<std::uint64_t>(key, v);
  else if (key == "ablation") train.ablation = parse_ablation(v);
  else if (key == "lambda_mode") train.lambda_mode = parse_lambda_mode(v);
  else if (key == "nbr_metric") train.nbr_metric = parse_nbr_metric(v);
  else if (key == "cap_prob") train.cap_probability = parse_number<double>(key, v);
  else if (key == "iters") train.iterations = parse_number<int>(key, v);
  else if (key == "lr") train.lr = parse_number<double>(key, v);
  else if (key == "batch") {
    train.batch_size = parse_number<int>(key, v);
    batch_set = true;
  } else if (key == "resolution") resolution = parse_number<int>(key, v);
  else if (key == "bce_reduction") train.bce_reduction = parse_bce_reduction(v);
  else if (key == "threshold") train.threshold = parse_number<double>(key, v);
  else if (key == "eval_every") train.eval_every = parse_number<int>(key, v);
  else if (key == "inner_per_outer") train.inner_per_outer = parse_number<int>(key, v);
  else if (key == "model") {
    if (v != "tiny" && v != "full") throw UsageError("unknown model '" + v + "' (expected tiny or full)");
    model = v;
  } else if (key == "shots_per") shots_per = parse_shot_grouping(v);
  else if (key == "pretrained") pretrained = v;
  else if (key == "checkpoint_every") checkpoint_every = parse_number<int>(key, v);
  else if (key == "mask_downsample") {
    if (v == "area") train.mask_downsample = MaskDownsample::AreaThreshold;
    else if (v == "nearest") train.mask_downsample = MaskDownsample::Nearest;
    else throw UsageError("unknown mask downsampling '" + v + "' (expected area or nearest)");
  } else if (key == "beta1") train.adam_beta1 = parse_number<double>(key, v);
  else if (key == "beta2") train.adam_beta2 = parse_number<double>(key, v);
  else throw UsageError("unknown setting '" + key + "'");
}

void RunSettings::apply(const KeyValues& values) {
  for (const auto& [key, value] : values) set(key, value);
}

void RunSettings::finalize() {
  if (k != 1 && k != 5) throw UsageError("--k must be 1 or 5");
  train.k_shot = k;
  if (!batch_set) train.batch_size = TrainConfig::for_k_shot(k).batch_size;
  if (resolution == 0) resolution = model == "tiny" ? 64 : 512;
  if (resolution < 64 || resolution % 32 != 0) {
    throw UsageError("--resolution must be a multiple of 32 and at least 64");
  }
  if (train.ablation == Ablation::B && train.nbr_metric != NbrMetric::Cosine) {
    throw UsageError("--nbr-metric has no effect with --ablation B (no NBR term)");
  }
  if (train.ablation != Ablation::BNbrCap && train.lambda_mode != LambdaMode::Computed) {
    throw UsageError("--lambda-mode applies only to --ablation B_NBR_CAP");
  }
  if (checkpoint_every < 0) throw UsageError("--checkpoint-every must be non-negative");
  train.validate();
}

ModelConfig RunSettings::model_config() const {
  ModelConfig m = model == "tiny" ? ModelConfig::tiny() : ModelConfig{};
  m.input_resolution = resolution;
  if (!pretrained.empty()) {
    m.backbone_pretrained = true;
    m.pretrained_path = pretrained;
  }
  return m;
}

nlohmann::json RunSettings::to_json() const {
  return {{"data", data},
          {"category", category},
          {"out", out},
          {"k", k},
          {"seed", train.seed},
          {"ablation", fds::to_string(train.ablation)},
          {"lambda_mode", fds::to_string(train.lambda_mode)},
          {"nbr_metric", fds::to_string(train.nbr_metric)},
          {"cap_prob", train.cap_probability},
          {"iters", train.iterations},
          {"lr", train.lr},
          {"beta1", train.adam_beta1},
          {"beta2", train.adam_beta2},
          {"batch", train.batch_size},
          {"resolution", resolution},
          {"bce_reduction", fds::to_string(train.bce_reduction)},
          {"mask_downsample", to_string(train.mask_downsample)},
          {"threshold", train.threshold},
          {"eval_every", train.eval_every},
          {"inner_per_outer", train.inner_per_outer},
          {"model", model},
          {"shots_per", to_string(shots_per)},
          {"pretrained", pretrained},
          {"checkpoint_every", checkpoint_every}};
}

RunSettings RunSettings::from_json(const nlohmann::json& j) {
  RunSettings s;
  for (const auto& [key, value] : j.items()) {
    if (value.is_string()) s.set(key, value.get<std::string>());
    else if (value.is_number_float()) {
      std::ostringstream ss;
      ss.precision(17);
      ss << value.get<double>();
      s.set(key, ss.str());
    } else s.set(key, value.dump());
  }
  s.finalize();
  return s;
}

}  // namespace fds::cli
