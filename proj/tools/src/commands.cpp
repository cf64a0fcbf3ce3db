#include "commands.hpp"

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "fds/checkpoint.hpp"
#include "fds/error.hpp"
#include "fds/losses.hpp"
#include "fds/metrics.hpp"
#include "fds/png_io.hpp"
#include "fds/report_io.hpp"
#include "fds/trainer.hpp"

#ifndef FDS_BUILD_ID
#define FDS_BUILD_ID "unknown"
#endif

namespace fds::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct LoadedRun {
  std::string category;
  CategoryData data;
  std::unique_ptr<Episode> episode;
};

std::string resolve_category(const RunSettings& s) {
  if (!s.category.empty()) return s.category;
  const auto cats = list_categories(s.data);
  if (cats.size() == 1) return cats.front();
  if (cats.empty()) throw DataError("no categories found under " + s.data);
  std::string names;
  for (const auto& c : cats) names += " " + c;
  throw UsageError("several categories under " + s.data + "; pick one with --category:" + names);
}

LoadedRun load_run(const RunSettings& s) {
  LoadedRun run;
  run.category = resolve_category(s);
  run.data = load_mvtec_category(s.data, run.category, s.resolution);
  EpisodeOptions opts;
  opts.grouping = s.shots_per;
  opts.test_normals = run.data.normal_test;
  run.episode = std::make_unique<Episode>(
      build_episode(run.data.defect_test, run.data.normal_train, s.k, s.train.seed, opts));
  return run;
}

void write_reports(const fs::path& dir, const MetricReport& report, double threshold) {
  write_text_file(dir / "report.json", report_to_json(report, threshold));
  write_text_file(dir / "report.csv", report_to_csv(report));
  write_text_file(dir / "roc.svg", roc_to_svg(report.anomaly));
}

void print_report(const std::string& category, const MetricReport& report) {
  std::printf("%s: mean IOU %.4f, mean DC %.4f", category.c_str(), report.overall_mean_iou,
              report.overall_mean_dc);
  if (report.anomaly.available) {
    std::printf(", ACC %.4f, AUC %.4f", report.anomaly.acc, report.anomaly.auc);
  }
  std::printf("\n");
}

std::size_t count_files(const fs::path& dir, const std::string& suffix) {
  if (!fs::is_directory(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() >= suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      ++n;
    }
  }
  return n;
}

}  // namespace

std::string hash_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());

  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw DataError("SHA-256 initialisation failed");
  }
  std::vector<char> buf(1 << 16);
  for (const auto& rel : files) {
    const std::string name = rel.generic_string();
    EVP_DigestUpdate(ctx.get(), name.data(), name.size() + 1);
    std::ifstream in(root / rel, std::ios::binary);
    if (!in) throw DataError("cannot read " + (root / rel).string());
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof(byte), "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

Image render_overlay(const Image& img, const Mask& prediction, const Mask& groundtruth) {
  Image out = img;
  const float fill[3] = {1.0f, 0.15f, 0.1f}, contour[3] = {0.1f, 1.0f, 0.2f};
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!prediction.at(y, x)) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = 0.5f * out.at(y, x, c) + 0.5f * fill[c];
    }
  }
  const auto inside = [&](int y, int x) {
    return y >= 0 && x >= 0 && y < groundtruth.height && x < groundtruth.width && groundtruth.at(y, x);
  };
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (!inside(y, x)) continue;
      if (inside(y - 1, x) && inside(y + 1, x) && inside(y, x - 1) && inside(y, x + 1)) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = contour[c];
    }
  }
  return out;
}

int cmd_synth(const SyntheticSpec& spec, const fs::path& out) {
  const SyntheticSummary s = generate_synthetic(spec, out);
  const fs::path base = out / s.category;
  std::printf("category %s: %d normal train, %d anomalous, %d normal test, %d masks\n", s.category.c_str(),
              s.normal_train, s.defect_images, s.normal_test, s.masks);
  std::printf("written to %s (%zu PNG files)\n", base.string().c_str(), count_files(base, ".png"));
  return kOk;
}

int cmd_train(const RunSettings& given) {
  if (given.data.empty()) throw UsageError("train needs --data");
  if (given.out.empty()) throw UsageError("train needs --out");
  // Absolute paths keep the manifest usable from any working directory.
  RunSettings settings = given;
  settings.data = fs::absolute(settings.data).lexically_normal().string();
  settings.out = fs::absolute(settings.out).lexically_normal().string();
  const fs::path out(settings.out);
  if (fs::exists(out / "manifest.json")) {
    throw UsageError("run directory " + out.string() + " already holds a manifest");
  }
  LoadedRun run = load_run(settings);
  const Episode& ep = *run.episode;
  const ModelConfig mc = settings.model_config();
  fs::create_directories(out);

  json manifest;
  manifest["command"] = "train";
  manifest["build"] = FDS_BUILD_ID;
  manifest["seed"] = settings.train.seed;
  json cfg = settings.to_json();
  cfg["category"] = run.category;
  manifest["config"] = cfg;
  manifest["model"] = json::parse(model_config_json(mc));
  json shots = json::array();
  for (const auto& d : ep.defect_pairs()) shots.push_back(d.defect_type + "/" + d.stem);
  manifest["dataset"] = {{"root", settings.data},
                         {"category", run.category},
                         {"sha256", hash_tree(fs::path(settings.data) / run.category)},
                         {"normal_train", run.data.normal_train.size()},
                         {"anomalous", run.data.defect_test.size()},
                         {"normal_test", run.data.normal_test.size()}};
  manifest["episode"] = {{"train_pairs", shots},
                         {"test_anomalous", ep.test_defect_count()},
                         {"test_normal", run.data.normal_test.size()}};
  manifest["outputs"] = {{"trainlog", "trainlog.jsonl"}, {"checkpoint", "model.ckpt"},
                         {"report_json", "report.json"}, {"report_csv", "report.csv"},
                         {"roc_svg", "roc.svg"}};
  write_text_file(out / "manifest.json", manifest.dump(2) + "\n");

  SegmentationNet model(mc, settings.train.seed);
  std::ofstream trainlog(out / "trainlog.jsonl", std::ios::binary);
  if (!trainlog) throw DataError("cannot write " + (out / "trainlog.jsonl").string());
  TrainConfig tc = settings.train;
  tc.dump_dir = (out / "nonfinite").string();
  TrainHooks hooks;
  hooks.on_iteration = [&](const IterationRecord& r) {
    trainlog << to_jsonl(r);
    if (settings.checkpoint_every > 0 && r.iteration % settings.checkpoint_every == 0) {
      save_checkpoint(out / ("model_iter" + std::to_string(r.iteration) + ".ckpt"), model, tc.seed);
    }
  };
  hooks.on_snapshot = [&](const EvalSnapshot& s) {
    trainlog << to_jsonl(s);
    spdlog::info("iteration {}: test mean IOU {:.4f}", s.iteration, s.mean_iou);
  };
  spdlog::info("training {} on {} ({} shot, {} iterations)", to_string(tc.ablation), run.category,
               settings.k, tc.iterations);
  train(ep, model, tc, hooks);
  trainlog.close();
  save_checkpoint(out / "model.ckpt", model, tc.seed);

  const MetricReport report = aggregate(evaluate_test_split(model, ep, run.category, tc.threshold));
  write_reports(out, report, tc.threshold);
  print_report(run.category, report);
  return kOk;
}

int cmd_eval(const EvalOptions& o) {
  if (o.checkpoint.empty()) throw UsageError("eval needs --checkpoint");
  const fs::path manifest_path = o.manifest.empty() ? o.checkpoint.parent_path() / "manifest.json" : o.manifest;
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  RunSettings s = RunSettings::from_json(manifest.at("config"));
  if (!o.data.empty()) s.data = o.data;
  const double threshold = o.threshold.value_or(s.train.threshold);
  if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("--threshold must lie in (0,1)");

  auto model = load_checkpoint(o.checkpoint);
  if (model_config_json(model->config()) != model_config_json(s.model_config())) {
    throw DataError("checkpoint model config does not match the run manifest");
  }
  LoadedRun run = load_run(s);
  const Episode& ep = *run.episode;
  const MetricReport report = aggregate(evaluate_test_split(*model, ep, run.category, threshold));

  const fs::path out = o.out.empty() ? o.checkpoint.parent_path() / "eval" : o.out;
  fs::create_directories(out);
  write_reports(out, report, threshold);
  print_report(run.category, report);

  if (o.dump_overlays) {
    const fs::path dir = out / "overlays";
    fs::create_directories(dir);
    for (const auto& d : ep.test_defects()) {
      const Mask pred = binarize(model->forward(d.image).mask, threshold);
      write_png_image(dir / (d.defect_type + "_" + d.stem + ".png"), render_overlay(d.image, pred, d.mask));
    }
    std::printf("overlays written to %s\n", dir.string().c_str());
  }
  return kOk;
}

AugmentPreview augment_preview(const Image& defect, const Mask& mask, const Image& normal,
                               SegmentationNet* model) {
  AugmentPreview out{cap_compose(defect, mask, normal), std::nullopt};
  if (model) {
    model->set_training(false);
    out.lambda = realism_weight(model->encode(defect).bottleneck, model->encode(out.composite).bottleneck);
  }
  return out;
}

int cmd_augment_preview(const AugmentOptions& o) {
  const Image defect = read_png_image(o.defect);
  const Mask mask = read_png_mask(o.mask);
  const Image normal = read_png_image(o.normal);
  std::unique_ptr<SegmentationNet> model;
  if (!o.checkpoint.empty()) model = load_checkpoint(o.checkpoint);
  const AugmentPreview p = augment_preview(defect, mask, normal, model.get());
  write_png_image(o.out, p.composite);
  if (p.lambda) {
    std::printf("composite written to %s; λ = %.6f\n", o.out.string().c_str(), *p.lambda);
  } else {
    std::printf("composite written to %s; λ unavailable (no checkpoint)\n", o.out.string().c_str());
  }
  return kOk;
}

int cmd_sweep(const RunSettings& base, const std::vector<Ablation>& ablations, int seeds) {
  if (seeds < 1) throw UsageError("--seeds must be at least 1");
  if (ablations.empty()) throw UsageError("no ablations to sweep");
  json summary = json::array();
  for (Ablation a : ablations) {
    std::vector<MetricReport> runs;
    for (int s = 0; s < seeds; ++s) {
      RunSettings rs = base;
      rs.train.ablation = a;
      if (a != Ablation::BNbrCap) rs.train.lambda_mode = LambdaMode::Computed;
      rs.train.seed = base.train.seed + static_cast<std::uint64_t>(s);
      rs.train.eval_every = std::max(rs.train.eval_every, rs.train.iterations);
      LoadedRun run = load_run(rs);
      SegmentationNet model(rs.model_config(), rs.train.seed);
      train(*run.episode, model, rs.train);
      runs.push_back(aggregate(evaluate_test_split(model, *run.episode, run.category, rs.train.threshold)));
      spdlog::info("{} seed {}: mean IOU {:.4f}", to_string(a), rs.train.seed, runs.back().overall_mean_iou);
    }
    std::vector<double> ious;
    for (const auto& r : runs) ious.push_back(r.overall_mean_iou);
    double mean = 0.0, var = 0.0;
    for (double v : ious) mean += v;
    mean /= static_cast<double>(ious.size());
    for (double v : ious) var += (v - mean) * (v - mean);
    const double sd = ious.size() > 1 ? std::sqrt(var / static_cast<double>(ious.size() - 1)) : 0.0;
    std::printf("%-10s mean IOU %.4f (std %.4f over %d seeds)\n", to_string(a).c_str(), mean, sd, seeds);
    summary.push_back({{"ablation", to_string(a)}, {"mean_iou", mean}, {"std_iou", sd}, {"per_seed", ious}});
  }
  if (!base.out.empty()) {
    fs::create_directories(base.out);
    write_text_file(fs::path(base.out) / "sweep.json", summary.dump(2) + "\n");
  }
  return kOk;
}

}  // namespace fds::cli
