#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fds/dataset.hpp"
#include "fds/losses.hpp"
#include "fds/metrics.hpp"
#include "fds/model.hpp"
#include "fds/rng.hpp"

namespace fds {

/// B: segmentation loss only (crop-and-paste still used as plain augmentation).
/// B_NBR: adds the normal background regularisation term.
/// B_NBR_CAP: additionally weights crop-and-paste samples by realism λ.
enum class Ablation { B, BNbr, BNbrCap };
enum class LambdaMode { Computed, FixedOne };

std::string to_string(Ablation a);
std::string to_string(LambdaMode m);
std::string to_string(NbrMetric m);
std::string to_string(BceReduction r);
std::string to_string(Branch b);
Ablation parse_ablation(const std::string& s);
LambdaMode parse_lambda_mode(const std::string& s);
NbrMetric parse_nbr_metric(const std::string& s);
BceReduction parse_bce_reduction(const std::string& s);

struct TrainConfig {
  int k_shot = 1;
  int batch_size = 2;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Total inner (normal-batch) gradient steps.
  int iterations = 1350;
  /// Normal batches drawn per defect batch.
  int inner_per_outer = 1;
  double cap_probability = 0.5;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::BNbrCap;
  LambdaMode lambda_mode = LambdaMode::Computed;
  NbrMetric nbr_metric = NbrMetric::Cosine;
  BceReduction bce_reduction = BceReduction::Mean;
  MaskDownsample mask_downsample = MaskDownsample::AreaThreshold;
  /// Evaluation period in iterations; a final snapshot is always taken.
  int eval_every = 50;
  double threshold = 0.5;
  /// Replaces the weighted BCE of the crop-and-paste branch with plain BCE.
  bool substitute_plain_bce = false;
  /// Where to write the offending batch when a loss turns non-finite.
  std::string dump_dir;

  /// Defaults with batch size 2 for 1-shot and 4 for 5-shot.
  static TrainConfig for_k_shot(int k);
  void validate() const;
};

struct IterationRecord {
  int iteration = 0;  // 1-based
  Branch branch = Branch::Plain;
  double nbr = 0.0;
  double seg = 0.0;
  double total = 0.0;
  std::vector<double> lambdas;  // CAP branch only
};

struct EvalSnapshot {
  int iteration = 0;
  double mean_iou = 0.0;
};

struct TrainLog {
  std::vector<IterationRecord> records;
  std::vector<EvalSnapshot> snapshots;
  /// Reads of the held-out split that happened inside a gradient step.
  std::size_t test_reads_during_steps = 0;
};

class Adam {
 public:
  Adam(std::vector<NamedParameter>& params, double lr, double beta1, double beta2, double eps);
  void step();
  int steps() const { return t_; }

 private:
  std::vector<NamedParameter>& params_;
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Indices into a pool of `pool_size`: without replacement when the pool can
/// fill the batch, otherwise with replacement.
std::vector<std::size_t> sample_minibatch(std::size_t pool_size, int m, Rng& rng);

template <typename T>
std::vector<const T*> sample_minibatch(const std::vector<T>& pool, int m, Rng& rng) {
  std::vector<const T*> out;
  for (std::size_t i : sample_minibatch(pool.size(), m, rng)) out.push_back(&pool[i]);
  return out;
}

/// Eval-mode mean IOU over anomalous images. Does not touch parameters.
double evaluate_mean_iou(SegmentationNet& model, const std::vector<DefectSample>& test,
                         double threshold);

/// Appends a snapshot when `iteration` is a multiple of `every_n` or the last one.
void evaluate_during_training(SegmentationNet& model, const std::vector<DefectSample>& test,
                              int every_n, int iteration, int total_iterations, double threshold,
                              TrainLog& log);

/// Per-image metrics over the episode's held-out anomalous and normal images.
std::vector<ImageResult> evaluate_test_split(SegmentationNet& model, const Episode& episode,
                                             const std::string& category, double threshold);

struct TrainHooks {
  std::function<void(const IterationRecord&)> on_iteration;
  std::function<void(const EvalSnapshot&)> on_snapshot;
};

/// Runs the nested defect-batch / normal-batch loop with Adam. Deterministic
/// for a fixed (episode, model seed, config).
TrainLog train(const Episode& episode, SegmentationNet& model, const TrainConfig& cfg,
               const TrainHooks& hooks = {});

}  // namespace fds
