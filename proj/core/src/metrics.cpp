#include "fds/metrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fds/error.hpp"

namespace fds {
namespace {

void check_masks(const Mask& pred, const Mask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("metric: mask sizes differ");
  }
  if (!pred.is_binary() || !gt.is_binary()) throw DataError("metric: masks must be binary");
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

Mask binarize(const PredictedMask& pred, double threshold) {
  Mask out(pred.height, pred.width);
  for (std::size_t i = 0; i < pred.probs.size(); ++i) out.values[i] = pred.probs[i] > threshold ? 1 : 0;
  return out;
}

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
  check_masks(pred, gt);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const bool p = pred.values[i] != 0, g = gt.values[i] != 0;
    if (p && g) ++c.tp;
    else if (p) ++c.fp;
    else if (g) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double iou(const Mask& pred, const Mask& gt) {
  const auto c = confusion(pred, gt);
  const std::size_t denom = c.tp + c.fn + c.fp;
  return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double dice(const Mask& pred, const Mask& gt) {
  const auto c = confusion(pred, gt);
  const std::size_t denom = 2 * c.tp + c.fn + c.fp;
  return denom == 0 ? 1.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

std::size_t anomaly_score(const Mask& pred) { return pred.positive_count(); }

RocResult roc_auc(const std::vector<std::pair<double, int>>& scored_labels) {
  std::size_t positives = 0, negatives = 0;
  for (const auto& [score, label] : scored_labels) {
    if (label != 0 && label != 1) throw DataError("roc_auc: labels must be 0 or 1");
    if (!std::isfinite(score)) throw DataError("roc_auc: non-finite score");
    (label == 1 ? positives : negatives)++;
  }
  if (positives == 0 || negatives == 0) {
    throw DataError("roc_auc: need at least one normal and one anomalous sample");
  }
  auto sorted = scored_labels;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  RocResult r;
  r.points.push_back({0.0, 0.0});
  // Twice the area in units of one (negative, positive) cell, kept integral
  // so the result is exact.
  unsigned long long area2 = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i, dtp = 0, dfp = 0;
    while (j < sorted.size() && sorted[j].first == sorted[i].first) {
      (sorted[j].second == 1 ? dtp : dfp)++;
      ++j;
    }
    area2 += static_cast<unsigned long long>(dfp) * (2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    r.points.push_back({static_cast<double>(fp) / negatives, static_cast<double>(tp) / positives});
    i = j;
  }
  r.auc = static_cast<double>(area2) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
  return r;
}

MetricReport aggregate(const std::vector<ImageResult>& results) {
  MetricReport report;
  std::map<std::string, std::vector<const ImageResult*>> by_category;
  for (const auto& r : results) by_category[r.category].push_back(&r);

  std::vector<double> cat_iou, cat_dc;
  for (const auto& [name, items] : by_category) {
    std::vector<double> ious, dcs;
    for (const auto* r : items) {
      if (!r->has_defect) continue;
      ious.push_back(r->iou);
      dcs.push_back(r->dice);
    }
    if (ious.empty()) {
      spdlog::warn("aggregate: category '{}' has no anomalous test images; omitted", name);
      continue;
    }
    CategoryStats s;
    s.mean_iou = mean_of(ious);
    s.mean_dc = mean_of(dcs);
    s.images = ious.size();
    report.per_category[name] = s;
    cat_iou.push_back(s.mean_iou);
    cat_dc.push_back(s.mean_dc);
  }
  report.overall_mean_iou = mean_of(cat_iou);
  report.overall_mean_dc = mean_of(cat_dc);

  std::vector<std::pair<double, int>> scored;
  std::size_t correct = 0;
  for (const auto& r : results) {
    scored.emplace_back(static_cast<double>(r.score), r.has_defect ? 1 : 0);
    if (classify_anomalous(r.score) == r.has_defect) ++correct;
  }
  const bool both = std::any_of(results.begin(), results.end(), [](const auto& r) { return r.has_defect; }) &&
                    std::any_of(results.begin(), results.end(), [](const auto& r) { return !r.has_defect; });
  if (both) {
    const RocResult roc = roc_auc(scored);
    report.anomaly.auc = roc.auc;
    report.anomaly.roc_points = roc.points;
    report.anomaly.acc = static_cast<double>(correct) / static_cast<double>(results.size());
    report.anomaly.available = true;
  }
  return report;
}

MetricReport aggregate_runs(const std::vector<MetricReport>& runs) {
  if (runs.empty()) throw DataError("aggregate_runs: no runs supplied");
  if (runs.size() == 1) return runs.front();
  MetricReport out;
  std::map<std::string, std::vector<const CategoryStats*>> by_category;
  for (const auto& run : runs) {
    for (const auto& [name, stats] : run.per_category) by_category[name].push_back(&stats);
  }
  std::vector<double> cat_iou, cat_dc;
  for (const auto& [name, list] : by_category) {
    std::vector<double> ious, dcs;
    CategoryStats s;
    for (const auto* st : list) {
      ious.push_back(st->mean_iou);
      dcs.push_back(st->mean_dc);
      s.images = st->images;
    }
    s.mean_iou = mean_of(ious);
    s.std_iou = sample_std(ious);
    s.mean_dc = mean_of(dcs);
    s.std_dc = sample_std(dcs);
    s.runs = list.size();
    out.per_category[name] = s;
    cat_iou.push_back(s.mean_iou);
    cat_dc.push_back(s.mean_dc);
  }
  out.overall_mean_iou = mean_of(cat_iou);
  out.overall_mean_dc = mean_of(cat_dc);

  std::vector<double> accs, aucs;
  for (const auto& run : runs) {
    if (!run.anomaly.available) continue;
    accs.push_back(run.anomaly.acc);
    aucs.push_back(run.anomaly.auc);
  }
  if (!accs.empty()) {
    out.anomaly.available = true;
    out.anomaly.acc = mean_of(accs);
    out.anomaly.auc = mean_of(aucs);
    out.anomaly.roc_points = runs.front().anomaly.roc_points;
  }
  return out;
}

}  // namespace fds
