#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fds/model.hpp"
#include "fds/synthetic.hpp"
#include "settings.hpp"

namespace fds::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

int cmd_synth(const SyntheticSpec& spec, const std::filesystem::path& out);

/// Writes manifest.json, trainlog.jsonl, model.ckpt, report.json, report.csv
/// and roc.svg into settings.out.
int cmd_train(const RunSettings& settings);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path manifest;  // defaults to manifest.json beside the checkpoint
  std::string data;                // overrides the manifest's dataset root
  std::filesystem::path out;
  std::optional<double> threshold;
  bool dump_overlays = false;
};
int cmd_eval(const EvalOptions& options);

struct AugmentOptions {
  std::filesystem::path defect;
  std::filesystem::path mask;
  std::filesystem::path normal;
  std::filesystem::path out;
  std::filesystem::path checkpoint;
};
int cmd_augment_preview(const AugmentOptions& options);

struct AugmentPreview {
  Image composite;
  std::optional<double> lambda;  // needs a model for the encoder features
};
AugmentPreview augment_preview(const Image& defect, const Mask& mask, const Image& normal,
                               SegmentationNet* model);

/// Runs each ablation over `seeds` seeds and reports mean ± std IOU.
int cmd_sweep(const RunSettings& base, const std::vector<Ablation>& ablations, int seeds);

/// SHA-256 over the sorted relative paths and contents of a directory tree.
std::string hash_tree(const std::filesystem::path& root);

/// Prediction fill at 50% alpha over the image, groundtruth contour on top.
Image render_overlay(const Image& img, const Mask& prediction, const Mask& groundtruth);

}  // namespace fds::cli
