#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>

#include "commands.hpp"
#include "fds/error.hpp"

namespace {

using namespace fds;
using namespace fds::cli;

std::string dashed(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

// Registers one string option per run setting; only flags actually given
// end up in the map, so they override the config file.
void add_run_flags(CLI::App* app, KeyValues& given, std::string& config_path) {
  app->add_option("--config", config_path, "flat key = value config file (flags override it)");
  for (const auto& key : RunSettings::keys()) {
    app->add_option_function<std::string>(
        "--" + dashed(key), [&given, key](const std::string& v) { given[key] = v; }, key);
  }
}

RunSettings merged_settings(const KeyValues& given, const std::string& config_path) {
  RunSettings s;
  if (const auto env = seed_from_env()) s.train.seed = *env;
  if (!config_path.empty()) s.apply(read_flat_config(config_path));
  s.apply(given);
  s.finalize();
  return s;
}

int run(int argc, char** argv) {
  CLI::App app{"Few-shot defect segmentation: synthesis, training, evaluation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  auto* synth = app.add_subcommand("synth", "write a procedural MVTec-style category");
  SyntheticSpec spec;
  std::string synth_out, texture = "stripes", defect = "blob";
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--out", synth_out, "output root")->required();
  synth->add_option("--seed", synth_seed, "generator seed (falls back to FDS_SEED)");
  synth->add_option("--texture", texture, "stripes, checker or noise-blobs");
  synth->add_option("--defect", defect, "scratch-line, blob or hole");
  synth->add_option("--category", spec.category, "category directory name");
  synth->add_option("--n-normal", spec.n_normal, "train/good images");
  synth->add_option("--n-defect-train", spec.n_defect_train, "extra anomalous images for shot selection");
  synth->add_option("--n-defect-test", spec.n_defect_test, "anomalous evaluation images");
  synth->add_option("--n-normal-test", spec.n_normal_test, "test/good images");
  synth->add_option("--resolution", spec.resolution, "square image side");
  synth->add_option("--mismatch", spec.mismatch_fraction, "fraction of off-style normal images");

  KeyValues train_flags;
  std::string train_config;
  auto* train = app.add_subcommand("train", "train on a category and report on its test split");
  add_run_flags(train, train_flags, train_config);

  EvalOptions eval_opts;
  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its run's test split");
  eval->add_option("--checkpoint", eval_opts.checkpoint, "model.ckpt")->required();
  eval->add_option("--manifest", eval_opts.manifest, "defaults to manifest.json beside the checkpoint");
  eval->add_option("--data", eval_opts.data, "dataset root override");
  eval->add_option("--out", eval_opts.out, "report directory (default <run>/eval)");
  eval->add_option("--threshold", eval_opts.threshold, "binarisation threshold");
  eval->add_flag("--dump-overlays", eval_opts.dump_overlays, "write prediction/groundtruth overlays");

  AugmentOptions aug;
  auto* augment = app.add_subcommand("augment-preview", "write a crop-and-paste composite and its λ");
  augment->add_option("--defect", aug.defect, "defect image")->required();
  augment->add_option("--mask", aug.mask, "defect mask")->required();
  augment->add_option("--normal", aug.normal, "normal image")->required();
  augment->add_option("--out", aug.out, "composite PNG")->required();
  augment->add_option("--checkpoint", aug.checkpoint, "model used for λ");

  KeyValues sweep_flags;
  std::string sweep_config, sweep_ablations = "B,B_NBR,B_NBR_CAP";
  int sweep_seeds = 3;
  auto* sweep = app.add_subcommand("sweep", "run ablations over several seeds");
  add_run_flags(sweep, sweep_flags, sweep_config);
  sweep->add_option("--ablations", sweep_ablations, "comma-separated ablations");
  sweep->add_option("--seeds", sweep_seeds, "seeds per ablation, starting at --seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  if (*synth) {
    spec.texture_kind = parse_texture_kind(texture);
    spec.defect_kind = parse_defect_kind(defect);
    if (synth_seed) spec.seed = *synth_seed;
    else if (const auto env = seed_from_env()) spec.seed = *env;
    spec.validate();
    return cmd_synth(spec, synth_out);
  }
  if (*train) return cmd_train(merged_settings(train_flags, train_config));
  if (*eval) return cmd_eval(eval_opts);
  if (*augment) return cmd_augment_preview(aug);
  if (*sweep) {
    std::vector<Ablation> ablations;
    for (const auto& name : CLI::detail::split(sweep_ablations, ',')) {
      if (!name.empty()) ablations.push_back(parse_ablation(name));
    }
    return cmd_sweep(merged_settings(sweep_flags, sweep_config), ablations, sweep_seeds);
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumerical;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "filesystem error: %s\n", e.what());
    return kData;
  }
}
