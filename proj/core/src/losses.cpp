#include "fds/losses.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>

#include "fds/error.hpp"

namespace fds {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void require_same_length(std::span<const double> a, std::span<const double> b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": vector lengths differ (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
}

// Per-sample pixel sum (or mean) of the clamped BCE.
double bce_kernel(std::span<const double> probs, std::span<const double> mask, BceReduction reduction) {
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], kProbEpsilon, 1.0 - kProbEpsilon);
    const double m = mask[i];
    s -= m * std::log(p) + (1.0 - m) * std::log(1.0 - p);
  }
  return reduction == BceReduction::Mean ? s / static_cast<double>(probs.size()) : s;
}

void bce_gradient_kernel(std::span<const double> probs, std::span<const double> mask, double scale,
                         BceReduction reduction, std::span<double> out) {
  const double factor =
      reduction == BceReduction::Mean ? scale / static_cast<double>(probs.size()) : scale;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    if (p <= kProbEpsilon || p >= 1.0 - kProbEpsilon) continue;
    const double m = mask[i];
    out[i] += factor * (-m / p + (1.0 - m) / (1.0 - p));
  }
}

std::vector<double> mask_as_doubles(const Mask& mask) {
  std::vector<double> m(mask.values.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = mask.values[i] != 0 ? 1.0 : 0.0;
  return m;
}

void check_bce_shapes(const Mask& mask, const PredictedMask& pred) {
  if (mask.height != pred.height || mask.width != pred.width) {
    throw ShapeError("bce: mask and prediction sizes differ");
  }
}

}  // namespace

Tensor downsample_mask(const Tensor& masks, int h, int w, MaskDownsample mode) {
  if (masks.c() != 1) throw ShapeError("downsample_mask: expected single-channel masks");
  if (h <= 0 || w <= 0 || masks.h() % h != 0 || masks.w() % w != 0) {
    throw ShapeError("downsample_mask: mask " + masks.shape_string() + " is not a multiple of " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const int by = masks.h() / h, bx = masks.w() / w;
  Tensor out(masks.n(), 1, h, w);
  for (int i = 0; i < masks.n(); ++i) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (mode == MaskDownsample::Nearest) {
          out.at(i, 0, y, x) = masks.at(i, 0, y * by, x * bx) != 0.0 ? 1.0 : 0.0;
          continue;
        }
        double s = 0.0;
        for (int yy = 0; yy < by; ++yy) {
          for (int xx = 0; xx < bx; ++xx) s += masks.at(i, 0, y * by + yy, x * bx + xx);
        }
        out.at(i, 0, y, x) = s / (by * bx) >= 0.5 ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

FeatureMap background_crop(const FeatureMap& features, const Mask& mask, MaskDownsample mode) {
  const Tensor& f = features.values;
  if (mask.height != f.h() * features.stride || mask.width != f.w() * features.stride) {
    throw ShapeError("background_crop: mask " + std::to_string(mask.height) + "x" +
                     std::to_string(mask.width) + " does not match feature map " +
                     std::to_string(f.h()) + "x" + std::to_string(f.w()) + " at stride " +
                     std::to_string(features.stride));
  }
  const Tensor small = downsample_mask(masks_to_tensor({&mask}), f.h(), f.w(), mode);
  FeatureMap out{f, features.stride};
  const std::size_t plane = f.plane_size();
  for (int ch = 0; ch < f.c(); ++ch) {
    for (std::size_t k = 0; k < plane; ++k) out.values[ch * plane + k] *= 1.0 - small[k];
  }
  return out;
}

std::vector<double> gap(const FeatureMap& features) {
  const Tensor& f = features.values;
  const std::size_t plane = f.plane_size();
  if (plane == 0) throw ShapeError("gap: empty feature map");
  std::vector<double> out(static_cast<std::size_t>(f.c()));
  for (int ch = 0; ch < f.c(); ++ch) {
    double s = 0.0;
    for (std::size_t k = 0; k < plane; ++k) s += f[ch * plane + k];
    out[ch] = s / static_cast<double>(plane);
  }
  return out;
}

BackgroundDescriptor background_descriptor(const FeatureMap& defect_features, const Mask& defect_mask,
                                           const FeatureMap& normal_features, MaskDownsample mode) {
  return {gap(background_crop(defect_features, defect_mask, mode)), gap(normal_features)};
}

double nbr_loss(std::span<const double> b_d, std::span<const double> f_n) {
  require_same_length(b_d, f_n, "nbr_loss");
  const double nb = norm2(b_d), nf = norm2(f_n);
  if (nb < kNormEpsilon && nf < kNormEpsilon) {
    spdlog::warn("nbr_loss: background and normal descriptors are both zero; returning 0");
    return 0.0;
  }
  return -dot(b_d, f_n) / (nb * nf + kNormEpsilon);
}

VectorPairGradient nbr_loss_gradient(std::span<const double> b_d, std::span<const double> f_n) {
  require_same_length(b_d, f_n, "nbr_loss_gradient");
  const std::size_t n = b_d.size();
  VectorPairGradient g{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  const double nb = norm2(b_d), nf = norm2(f_n);
  if (nb < kNormEpsilon && nf < kNormEpsilon) return g;
  const double d = dot(b_d, f_n);
  const double denom = nb * nf + kNormEpsilon;
  const double denom2 = denom * denom;
  for (std::size_t i = 0; i < n; ++i) {
    const double ub = nb > 0.0 ? b_d[i] / nb : 0.0;
    const double uf = nf > 0.0 ? f_n[i] / nf : 0.0;
    g.d_first[i] = -f_n[i] / denom + d * nf * ub / denom2;
    g.d_second[i] = -b_d[i] / denom + d * nb * uf / denom2;
  }
  return g;
}

double nbr_loss_euclidean(std::span<const double> b_d, std::span<const double> f_n) {
  require_same_length(b_d, f_n, "nbr_loss_euclidean");
  double s = 0.0;
  for (std::size_t i = 0; i < b_d.size(); ++i) s += (b_d[i] - f_n[i]) * (b_d[i] - f_n[i]);
  return std::sqrt(s);
}

VectorPairGradient nbr_loss_euclidean_gradient(std::span<const double> b_d,
                                               std::span<const double> f_n) {
  require_same_length(b_d, f_n, "nbr_loss_euclidean_gradient");
  const std::size_t n = b_d.size();
  VectorPairGradient g{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  const double dist = nbr_loss_euclidean(b_d, f_n);
  if (dist == 0.0) return g;
  for (std::size_t i = 0; i < n; ++i) {
    g.d_first[i] = (b_d[i] - f_n[i]) / dist;
    g.d_second[i] = -g.d_first[i];
  }
  return g;
}

Image cap_compose(const Image& defect, const Mask& mask, const Image& normal) {
  if (!defect.same_size(mask.height, mask.width) || !normal.same_size(mask.height, mask.width)) {
    throw ShapeError("cap_compose: defect image, mask and normal image must share dimensions");
  }
  Image out = normal;
  out.source_path.reset();
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(y, x)) continue;
      for (int ch = 0; ch < 3; ++ch) out.at(y, x, ch) = defect.at(y, x, ch);
    }
  }
  return out;
}

Tensor cap_compose(const Tensor& defect, const Tensor& masks, const Tensor& normal) {
  if (!defect.same_shape(normal) || masks.n() != defect.n() || masks.c() != 1 ||
      masks.h() != defect.h() || masks.w() != defect.w()) {
    throw ShapeError("cap_compose: incompatible batch shapes " + defect.shape_string() + ", " +
                     masks.shape_string() + ", " + normal.shape_string());
  }
  Tensor out = Tensor::like(defect);
  const std::size_t plane = defect.plane_size();
  for (int i = 0; i < defect.n(); ++i) {
    const double* m = masks.data() + i * plane;
    for (int ch = 0; ch < defect.c(); ++ch) {
      const std::size_t off = i * defect.sample_size() + ch * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        out[off + k] = defect[off + k] * m[k] + normal[off + k] * (1.0 - m[k]);
      }
    }
  }
  return out;
}

double realism_weight_pooled(std::span<const double> pooled_defect,
                             std::span<const double> pooled_composed) {
  require_same_length(pooled_defect, pooled_composed, "realism_weight");
  const double n1 = norm2(pooled_defect), n2 = norm2(pooled_composed);
  if (n1 < kNormEpsilon || n2 < kNormEpsilon) {
    spdlog::warn("realism_weight: zero-norm pooled feature; returning 0");
    return 0.0;
  }
  return std::abs(dot(pooled_defect, pooled_composed)) / (n1 * n2 + kNormEpsilon);
}

VectorPairGradient realism_weight_pooled_gradient(std::span<const double> pooled_defect,
                                                  std::span<const double> pooled_composed) {
  require_same_length(pooled_defect, pooled_composed, "realism_weight_gradient");
  const std::size_t n = pooled_defect.size();
  VectorPairGradient g{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  const double n1 = norm2(pooled_defect), n2 = norm2(pooled_composed);
  if (n1 < kNormEpsilon || n2 < kNormEpsilon) return g;
  const double d = dot(pooled_defect, pooled_composed);
  const double sign = d >= 0.0 ? 1.0 : -1.0;
  const double denom = n1 * n2 + kNormEpsilon;
  const double denom2 = denom * denom;
  for (std::size_t i = 0; i < n; ++i) {
    g.d_first[i] = sign * pooled_composed[i] / denom - std::abs(d) * n2 * (pooled_defect[i] / n1) / denom2;
    g.d_second[i] = sign * pooled_defect[i] / denom - std::abs(d) * n1 * (pooled_composed[i] / n2) / denom2;
  }
  return g;
}

double realism_weight(const FeatureMap& defect_features, const FeatureMap& composed_features) {
  if (!defect_features.values.same_shape(composed_features.values)) {
    throw ShapeError("realism_weight: feature maps differ in shape");
  }
  return realism_weight_pooled(gap(defect_features), gap(composed_features));
}

FeaturePairGradient realism_weight_gradient(const FeatureMap& defect_features,
                                            const FeatureMap& composed_features) {
  if (!defect_features.values.same_shape(composed_features.values)) {
    throw ShapeError("realism_weight_gradient: feature maps differ in shape");
  }
  const auto pg = realism_weight_pooled_gradient(gap(defect_features), gap(composed_features));
  FeaturePairGradient g{Tensor::like(defect_features.values), Tensor::like(composed_features.values)};
  const std::size_t plane = defect_features.values.plane_size();
  const double inv = 1.0 / static_cast<double>(plane);
  for (std::size_t ch = 0; ch < pg.d_first.size(); ++ch) {
    for (std::size_t k = 0; k < plane; ++k) {
      g.d_first[ch * plane + k] = pg.d_first[ch] * inv;
      g.d_second[ch * plane + k] = pg.d_second[ch] * inv;
    }
  }
  return g;
}

double weighted_bce(const Mask& mask, const PredictedMask& pred, double lambda, BceReduction reduction) {
  check_bce_shapes(mask, pred);
  const auto m = mask_as_doubles(mask);
  return lambda * bce_kernel(pred.probs, m, reduction);
}

std::vector<double> weighted_bce_gradient(const Mask& mask, const PredictedMask& pred, double lambda,
                                          BceReduction reduction) {
  check_bce_shapes(mask, pred);
  const auto m = mask_as_doubles(mask);
  std::vector<double> g(pred.probs.size(), 0.0);
  bce_gradient_kernel(pred.probs, m, lambda, reduction, g);
  return g;
}

double plain_bce(const Mask& mask, const PredictedMask& pred, BceReduction reduction) {
  return weighted_bce(mask, pred, 1.0, reduction);
}

LossBundle combine(double nbr, double seg, Branch branch, std::optional<double> lambda) {
  if (!std::isfinite(nbr) || !std::isfinite(seg)) {
    throw NumericalError("combine: non-finite loss term (nbr=" + std::to_string(nbr) +
                         ", seg=" + std::to_string(seg) + ")");
  }
  return {nbr, seg, nbr + seg, lambda, branch};
}

namespace ag {

Var nbr_loss(const Var& pooled_background, const Var& pooled_normal, NbrMetric metric) {
  const Tensor& b = pooled_background.value();
  const Tensor& f = pooled_normal.value();
  if (!b.same_shape(f) || b.h() != 1 || b.w() != 1) {
    throw ShapeError("nbr_loss: expected matching [m, C, 1, 1] inputs, got " + b.shape_string() +
                     " and " + f.shape_string());
  }
  double total = 0.0;
  for (int i = 0; i < b.n(); ++i) {
    total += metric == NbrMetric::Cosine ? fds::nbr_loss(b.sample(i), f.sample(i))
                                         : fds::nbr_loss_euclidean(b.sample(i), f.sample(i));
  }
  return make_result(Tensor::scalar(total), {pooled_background, pooled_normal}, [metric](Node& self) {
    Node& bn = *self.inputs[0];
    Node& fn = *self.inputs[1];
    const double g = self.grad[0];
    for (int i = 0; i < bn.value.n(); ++i) {
      const auto grad = metric == NbrMetric::Cosine
                            ? fds::nbr_loss_gradient(bn.value.sample(i), fn.value.sample(i))
                            : fds::nbr_loss_euclidean_gradient(bn.value.sample(i), fn.value.sample(i));
      if (bn.requires_grad) {
        auto dst = bn.grad_buffer().sample(i);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g * grad.d_first[k];
      }
      if (fn.requires_grad) {
        auto dst = fn.grad_buffer().sample(i);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g * grad.d_second[k];
      }
    }
  });
}

Var weighted_bce(const Var& probs, const Tensor& masks, std::span<const double> lambdas,
                 BceReduction reduction) {
  const Tensor& p = probs.value();
  if (!p.same_shape(masks)) {
    throw ShapeError("weighted_bce: probabilities " + p.shape_string() + " vs masks " +
                     masks.shape_string());
  }
  if (lambdas.size() != static_cast<std::size_t>(p.n())) {
    throw ShapeError("weighted_bce: one lambda per sample is required");
  }
  double total = 0.0;
  for (int i = 0; i < p.n(); ++i) total += lambdas[i] * bce_kernel(p.sample(i), masks.sample(i), reduction);
  std::vector<double> lam(lambdas.begin(), lambdas.end());
  return make_result(Tensor::scalar(total), {probs}, [masks, lam = std::move(lam), reduction](Node& self) {
    Node& pn = *self.inputs[0];
    const double g = self.grad[0];
    for (int i = 0; i < pn.value.n(); ++i) {
      bce_gradient_kernel(pn.value.sample(i), masks.sample(i), g * lam[i], reduction,
                          pn.grad_buffer().sample(i));
    }
  });
}

Var plain_bce(const Var& probs, const Tensor& masks, BceReduction reduction) {
  const Tensor& p = probs.value();
  if (!p.same_shape(masks)) {
    throw ShapeError("plain_bce: probabilities " + p.shape_string() + " vs masks " + masks.shape_string());
  }
  double total = 0.0;
  for (int i = 0; i < p.n(); ++i) total += bce_kernel(p.sample(i), masks.sample(i), reduction);
  return make_result(Tensor::scalar(total), {probs}, [masks, reduction](Node& self) {
    Node& pn = *self.inputs[0];
    for (int i = 0; i < pn.value.n(); ++i) {
      bce_gradient_kernel(pn.value.sample(i), masks.sample(i), self.grad[0], reduction,
                          pn.grad_buffer().sample(i));
    }
  });
}

}  // namespace ag
}  // namespace fds
