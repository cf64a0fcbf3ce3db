#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fds/image.hpp"
#include "fds/model.hpp"

namespace fds {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
};

/// pred > threshold (strict) becomes 1.
Mask binarize(const PredictedMask& pred, double threshold = 0.5);

ConfusionCounts confusion(const Mask& pred, const Mask& gt);

/// TP / (TP + FN + FP); 1.0 when both masks are empty.
double iou(const Mask& pred, const Mask& gt);
/// 2TP / (2TP + FN + FP); 1.0 when both masks are empty.
double dice(const Mask& pred, const Mask& gt);

/// Area of the predicted defect region, in pixels.
std::size_t anomaly_score(const Mask& pred);
/// At least one defective pixel.
inline bool classify_anomalous(std::size_t score) { return score >= 1; }

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // (0,0) first, (1,1) last, fpr non-decreasing
};

/// Label 1 = anomalous. One ROC vertex per distinct score; tied scores move
/// diagonally, so the trapezoid area equals the Mann-Whitney statistic.
RocResult roc_auc(const std::vector<std::pair<double, int>>& scored_labels);

/// Metrics of one evaluated test image.
struct ImageResult {
  std::string category;
  bool has_defect = false;  // groundtruth label
  double iou = 0.0;
  double dice = 0.0;
  std::size_t score = 0;
};

struct CategoryStats {
  double mean_iou = 0.0, std_iou = 0.0;
  double mean_dc = 0.0, std_dc = 0.0;
  std::size_t images = 0;
  std::size_t runs = 1;
};

struct AnomalyStats {
  double acc = 0.0;
  double auc = 0.0;
  std::vector<RocPoint> roc_points;
  bool available = false;  // needs both normal and anomalous test images
};

struct MetricReport {
  std::map<std::string, CategoryStats> per_category;
  double overall_mean_iou = 0.0;
  double overall_mean_dc = 0.0;
  AnomalyStats anomaly;
};

/// Segmentation means use the anomalous test images of each category; the
/// grand mean is the unweighted mean over categories. Anomaly ACC/AUC use
/// every image. Categories without anomalous images are dropped with a warning.
MetricReport aggregate(const std::vector<ImageResult>& results);

/// Combines repeated runs (seeds): means of the per-run category means, with
/// the sample standard deviation across runs.
MetricReport aggregate_runs(const std::vector<MetricReport>& runs);

}  // namespace fds
