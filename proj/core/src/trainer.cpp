#include "fds/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "fds/error.hpp"
#include "fds/nn_ops.hpp"
#include "fds/png_io.hpp"

namespace fds {
namespace {

constexpr std::uint64_t kSamplingSalt = 0x5a3f1e;
constexpr int kEvalChunk = 8;

std::vector<double> pooled_row(const Tensor& pooled, int i) {
  auto s = pooled.sample(i);
  return {s.begin(), s.end()};
}

Tensor one_minus(const Tensor& t) {
  Tensor out = Tensor::like(t);
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = 1.0 - t[i];
  return out;
}

void dump_batch(const std::string& dir, int iteration, const std::vector<const DefectSample*>& defects,
                const std::vector<const Image*>& normals, const std::string& reason) {
  namespace fs = std::filesystem;
  const fs::path base = fs::path(dir) / ("nonfinite_iter_" + std::to_string(iteration));
  fs::create_directories(base);
  for (std::size_t i = 0; i < defects.size(); ++i) {
    write_png_image(base / ("defect_" + std::to_string(i) + ".png"), defects[i]->image);
    write_png_mask(base / ("defect_" + std::to_string(i) + "_mask.png"), defects[i]->mask);
  }
  for (std::size_t i = 0; i < normals.size(); ++i) {
    write_png_image(base / ("normal_" + std::to_string(i) + ".png"), *normals[i]);
  }
  std::ofstream(base / "reason.txt") << reason << "\n";
}

}  // namespace

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::B: return "B";
    case Ablation::BNbr: return "B_NBR";
    case Ablation::BNbrCap: return "B_NBR_CAP";
  }
  return "?";
}

std::string to_string(LambdaMode m) { return m == LambdaMode::Computed ? "computed" : "fixed1"; }
std::string to_string(NbrMetric m) { return m == NbrMetric::Cosine ? "cosine" : "euclidean"; }
std::string to_string(BceReduction r) { return r == BceReduction::Mean ? "mean" : "sum"; }
std::string to_string(Branch b) { return b == Branch::Cap ? "CAP" : "PLAIN"; }

Ablation parse_ablation(const std::string& s) {
  if (s == "B") return Ablation::B;
  if (s == "B_NBR") return Ablation::BNbr;
  if (s == "B_NBR_CAP") return Ablation::BNbrCap;
  throw UsageError("unknown ablation '" + s + "' (expected B, B_NBR or B_NBR_CAP)");
}

LambdaMode parse_lambda_mode(const std::string& s) {
  if (s == "computed") return LambdaMode::Computed;
  if (s == "fixed1" || s == "fixed_one") return LambdaMode::FixedOne;
  throw UsageError("unknown lambda mode '" + s + "' (expected computed or fixed1)");
}

NbrMetric parse_nbr_metric(const std::string& s) {
  if (s == "cosine") return NbrMetric::Cosine;
  if (s == "euclidean") return NbrMetric::Euclidean;
  throw UsageError("unknown NBR metric '" + s + "' (expected cosine or euclidean)");
}

BceReduction parse_bce_reduction(const std::string& s) {
  if (s == "mean") return BceReduction::Mean;
  if (s == "sum") return BceReduction::Sum;
  throw UsageError("unknown BCE reduction '" + s + "' (expected sum or mean)");
}

TrainConfig TrainConfig::for_k_shot(int k) {
  TrainConfig c;
  c.k_shot = k;
  c.batch_size = k >= 5 ? 4 : 2;
  return c;
}

void TrainConfig::validate() const {
  if (k_shot < 1) throw UsageError("k_shot must be at least 1");
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("learning rate must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
    throw UsageError("Adam betas must lie in [0,1)");
  }
  if (iterations < 1) throw UsageError("iterations must be at least 1");
  if (inner_per_outer < 1) throw UsageError("inner_per_outer must be at least 1");
  if (!(cap_probability >= 0.0 && cap_probability <= 1.0)) {
    throw UsageError("cap probability must lie in [0,1]");
  }
  if (eval_every < 1) throw UsageError("eval_every must be at least 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw UsageError("threshold must lie in (0,1)");
}

Adam::Adam(std::vector<NamedParameter>& params, double lr, double beta1, double beta2, double eps)
    : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::like(p.var.value()));
    v_.push_back(Tensor::like(p.var.value()));
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const Tensor& g = params_[k].var.grad();
    if (g.empty()) continue;
    Tensor& w = params_[k].var.mutable_value();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::vector<std::size_t> sample_minibatch(std::size_t pool_size, int m, Rng& rng) {
  if (pool_size == 0) throw DataError("cannot sample a minibatch from an empty pool");
  if (m < 1) throw UsageError("minibatch size must be at least 1");
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(m));
  if (pool_size < static_cast<std::size_t>(m)) {
    for (int i = 0; i < m; ++i) out.push_back(rng.below(pool_size));
    return out;
  }
  std::vector<std::size_t> idx(pool_size);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < m; ++i) {
    const std::size_t j = i + rng.below(pool_size - i);
    std::swap(idx[i], idx[j]);
    out.push_back(idx[i]);
  }
  return out;
}

double evaluate_mean_iou(SegmentationNet& model, const std::vector<DefectSample>& test, double threshold) {
  if (test.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t start = 0; start < test.size(); start += kEvalChunk) {
    const std::size_t end = std::min(test.size(), start + kEvalChunk);
    std::vector<const Image*> imgs;
    for (std::size_t i = start; i < end; ++i) imgs.push_back(&test[i].image);
    const Tensor probs = model.predict(images_to_tensor(imgs));
    for (std::size_t i = start; i < end; ++i) {
      const Mask pred = binarize(to_predicted_mask(probs, static_cast<int>(i - start)), threshold);
      sum += iou(pred, test[i].mask);
    }
  }
  return sum / static_cast<double>(test.size());
}

void evaluate_during_training(SegmentationNet& model, const std::vector<DefectSample>& test,
                              int every_n, int iteration, int total_iterations, double threshold,
                              TrainLog& log) {
  if (every_n < 1) throw UsageError("evaluation period must be at least 1");
  if (iteration % every_n != 0 && iteration != total_iterations) return;
  log.snapshots.push_back({iteration, evaluate_mean_iou(model, test, threshold)});
}

std::vector<ImageResult> evaluate_test_split(SegmentationNet& model, const Episode& episode,
                                             const std::string& category, double threshold) {
  std::vector<ImageResult> results;
  const auto run = [&](const std::vector<const Image*>& imgs, const std::vector<const Mask*>& gts) {
    for (std::size_t start = 0; start < imgs.size(); start += kEvalChunk) {
      const std::size_t end = std::min(imgs.size(), start + kEvalChunk);
      const Tensor probs = model.predict(
          images_to_tensor(std::vector<const Image*>(imgs.begin() + start, imgs.begin() + end)));
      for (std::size_t i = start; i < end; ++i) {
        const Mask pred = binarize(to_predicted_mask(probs, static_cast<int>(i - start)), threshold);
        const Mask empty(pred.height, pred.width);
        const Mask& gt = gts[i] ? *gts[i] : empty;
        results.push_back({category, gts[i] != nullptr, iou(pred, gt), dice(pred, gt), anomaly_score(pred)});
      }
    }
  };
  std::vector<const Image*> imgs;
  std::vector<const Mask*> gts;
  for (const auto& d : episode.test_defects()) {
    imgs.push_back(&d.image);
    gts.push_back(&d.mask);
  }
  run(imgs, gts);
  imgs.clear();
  gts.clear();
  for (const auto& n : episode.test_normals()) {
    imgs.push_back(&n);
    gts.push_back(nullptr);
  }
  run(imgs, gts);
  return results;
}

TrainLog train(const Episode& episode, SegmentationNet& model, const TrainConfig& cfg,
               const TrainHooks& hooks) {
  cfg.validate();
  if (episode.defect_pairs().empty()) throw DataError("episode has no defect training pairs");

  const int m = cfg.batch_size;
  const bool use_nbr = cfg.ablation != Ablation::B;
  const bool weight_by_realism =
      cfg.ablation == Ablation::BNbrCap && cfg.lambda_mode == LambdaMode::Computed;
  const bool weighted_branch = cfg.ablation == Ablation::BNbrCap && !cfg.substitute_plain_bce;
  const int outer_iterations = (cfg.iterations + cfg.inner_per_outer - 1) / cfg.inner_per_outer;

  Rng rng(mix_seed(cfg.seed, kSamplingSalt));
  Adam adam(model.parameters(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  TrainLog log;
  const int bottleneck_stride = model.config().total_stride();
  int iteration = 0;

  for (int outer = 0; outer < outer_iterations; ++outer) {
    const auto defects = sample_minibatch(episode.defect_pairs(), m, rng);
    std::vector<const Image*> defect_imgs;
    std::vector<const Mask*> defect_masks;
    for (const auto* d : defects) {
      defect_imgs.push_back(&d->image);
      defect_masks.push_back(&d->mask);
    }
    const Tensor defect_batch = images_to_tensor(defect_imgs);
    const Tensor mask_batch = masks_to_tensor(defect_masks);

    for (int inner = 0; inner < cfg.inner_per_outer && iteration < cfg.iterations; ++inner) {
      const auto normals = sample_minibatch(episode.normal_pool(), m, rng);
      const bool use_cap = rng.uniform() >= 1.0 - cfg.cap_probability;
      ++iteration;
      const std::size_t reads_before = episode.audit().test_reads();

      model.set_training(true);
      const Tensor normal_batch = images_to_tensor(normals);
      const bool need_defect_features = use_nbr || !use_cap || weight_by_realism;

      EncoderOutput enc_defect;
      if (need_defect_features) enc_defect = model.encode(defect_batch);

      ag::Var nbr_term;
      if (use_nbr) {
        const EncoderOutput enc_normal = model.encode(normal_batch);
        const Tensor& fd = enc_defect.bottleneck.value();
        const Tensor small = downsample_mask(mask_batch, fd.h(), fd.w(), cfg.mask_downsample);
        if (small.h() * bottleneck_stride != mask_batch.h()) {
          throw ShapeError("mask/feature stride mismatch in NBR");
        }
        const ag::Var background = ag::mask_multiply(enc_defect.bottleneck, one_minus(small));
        nbr_term = ag::nbr_loss(ag::global_avg_pool(background),
                                ag::global_avg_pool(enc_normal.bottleneck), cfg.nbr_metric);
      }

      IterationRecord rec;
      rec.iteration = iteration;
      ag::Var seg_term;
      if (use_cap) {
        rec.branch = Branch::Cap;
        const Tensor composed = cap_compose(defect_batch, mask_batch, normal_batch);
        const EncoderOutput enc_cap = model.encode(composed);
        const ag::Var probs = model.decode(enc_cap);
        rec.lambdas.assign(static_cast<std::size_t>(m), 1.0);
        if (weight_by_realism) {
          // λ is a constant weight: computed from values, outside the graph.
          ag::NoGradGuard no_grad;
          const Tensor gd = ag::global_avg_pool(enc_defect.bottleneck.detach()).value();
          const Tensor gc = ag::global_avg_pool(enc_cap.bottleneck.detach()).value();
          for (int i = 0; i < m; ++i) rec.lambdas[i] = realism_weight_pooled(pooled_row(gd, i), pooled_row(gc, i));
        }
        seg_term = weighted_branch ? ag::weighted_bce(probs, mask_batch, rec.lambdas, cfg.bce_reduction)
                                   : ag::plain_bce(probs, mask_batch, cfg.bce_reduction);
      } else {
        rec.branch = Branch::Plain;
        seg_term = ag::plain_bce(model.decode(enc_defect), mask_batch, cfg.bce_reduction);
      }

      const ag::Var total = nbr_term.defined() ? ag::add(nbr_term, seg_term) : seg_term;
      LossBundle bundle;
      try {
        bundle = combine(nbr_term.defined() ? nbr_term.value().item() : 0.0, seg_term.value().item(),
                         rec.branch);
      } catch (const NumericalError& e) {
        std::string msg = "iteration " + std::to_string(iteration) + " (" + to_string(rec.branch) +
                          " branch): " + e.what();
        if (!cfg.dump_dir.empty()) {
          dump_batch(cfg.dump_dir, iteration, defects, normals, msg);
          msg += "; batch dumped to " + cfg.dump_dir;
        }
        throw NumericalError(msg);
      }

      model.zero_grad();
      ag::backward(total);
      adam.step();

      const std::size_t leaked = episode.audit().test_reads() - reads_before;
      log.test_reads_during_steps += leaked;
      if (leaked != 0) throw DataError("held-out split was read during a gradient step");

      rec.nbr = bundle.nbr;
      rec.seg = bundle.seg;
      rec.total = bundle.total;
      if (hooks.on_iteration) hooks.on_iteration(rec);
      log.records.push_back(std::move(rec));

      const std::size_t before = log.snapshots.size();
      evaluate_during_training(model, episode.test_defects(), cfg.eval_every, iteration,
                               cfg.iterations, cfg.threshold, log);
      if (hooks.on_snapshot && log.snapshots.size() > before) hooks.on_snapshot(log.snapshots.back());
    }
  }
  model.set_training(false);
  return log;
}

}  // namespace fds
