#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fds/autograd.hpp"
#include "fds/image.hpp"
#include "fds/model.hpp"

namespace fds {

/// Probability clamp inside the BCE logarithms.
inline constexpr double kProbEpsilon = 1e-7;
/// Floor added to cosine denominators.
inline constexpr double kNormEpsilon = 1e-8;

/// How a full-resolution mask is reduced to feature-map resolution.
enum class MaskDownsample {
  AreaThreshold,  // block average, then >= 0.5
  Nearest,
};
enum class BceReduction { Sum, Mean };
enum class NbrMetric { Cosine, Euclidean };
enum class Branch { Cap, Plain };

/// Pooled background of a defect image and pooled normal image.
struct BackgroundDescriptor {
  std::vector<double> b_d;
  std::vector<double> f_n;
};

struct LossBundle {
  double nbr = 0.0;
  double seg = 0.0;
  double total = 0.0;
  std::optional<double> lambda_used;
  Branch branch = Branch::Plain;
};

/// Gradients of a scalar function of two vectors.
struct VectorPairGradient {
  std::vector<double> d_first;
  std::vector<double> d_second;
};

/// Gradients of a scalar function of two feature maps.
struct FeaturePairGradient {
  Tensor d_first;
  Tensor d_second;
};

/// Reduces [N, 1, H, W] masks to [N, 1, h, w]; H, W must be multiples of h, w.
Tensor downsample_mask(const Tensor& masks, int h, int w, MaskDownsample mode);

/// F ⊙ (1 − M̂): zeroes feature positions covered by the downsampled mask.
FeatureMap background_crop(const FeatureMap& features, const Mask& mask,
                           MaskDownsample mode = MaskDownsample::AreaThreshold);

/// Global average pooling: per-channel spatial mean.
std::vector<double> gap(const FeatureMap& features);

BackgroundDescriptor background_descriptor(const FeatureMap& defect_features, const Mask& defect_mask,
                                           const FeatureMap& normal_features,
                                           MaskDownsample mode = MaskDownsample::AreaThreshold);

/// Negative cosine similarity −⟨b,f⟩ / (‖b‖‖f‖ + ε). Returns 0 (and warns)
/// when both vectors are numerically zero, e.g. for an all-defect image.
double nbr_loss(std::span<const double> b_d, std::span<const double> f_n);
VectorPairGradient nbr_loss_gradient(std::span<const double> b_d, std::span<const double> f_n);

/// ‖b − f‖₂, the distance-based variant.
double nbr_loss_euclidean(std::span<const double> b_d, std::span<const double> f_n);
VectorPairGradient nbr_loss_euclidean_gradient(std::span<const double> b_d,
                                               std::span<const double> f_n);

/// Pastes the masked defect region onto the normal image at the same place.
Image cap_compose(const Image& defect, const Mask& mask, const Image& normal);
/// Batched form over [N, 3, H, W] images and [N, 1, H, W] masks.
Tensor cap_compose(const Tensor& defect, const Tensor& masks, const Tensor& normal);

/// |cos| between the pooled features of the original and composed images.
double realism_weight(const FeatureMap& defect_features, const FeatureMap& composed_features);
double realism_weight_pooled(std::span<const double> pooled_defect,
                             std::span<const double> pooled_composed);
VectorPairGradient realism_weight_pooled_gradient(std::span<const double> pooled_defect,
                                                  std::span<const double> pooled_composed);
/// Gradient of realism_weight(GAP(·), GAP(·)) with respect to both maps.
FeaturePairGradient realism_weight_gradient(const FeatureMap& defect_features,
                                            const FeatureMap& composed_features);

/// λ · Σ −[M log M̃ + (1−M) log(1−M̃)] with M̃ clamped to [ε, 1−ε];
/// Mean divides the pixel sum by H·W.
double weighted_bce(const Mask& mask, const PredictedMask& pred, double lambda,
                    BceReduction reduction = BceReduction::Mean);
/// d(weighted_bce)/d(M̃), one entry per pixel. Zero where the clamp is active.
std::vector<double> weighted_bce_gradient(const Mask& mask, const PredictedMask& pred, double lambda,
                                          BceReduction reduction = BceReduction::Mean);
double plain_bce(const Mask& mask, const PredictedMask& pred,
                 BceReduction reduction = BceReduction::Mean);

/// total = nbr + seg. Throws NumericalError on non-finite input.
LossBundle combine(double nbr, double seg, Branch branch = Branch::Plain,
                   std::optional<double> lambda = std::nullopt);

namespace ag {

/// Σ_i NBR(b_i, f_i) over rows of two [m, C, 1, 1] pooled batches.
Var nbr_loss(const Var& pooled_background, const Var& pooled_normal, NbrMetric metric);

/// Σ_i λ_i · BCE(M_i, M̃_i) over a batch of [m, 1, H, W] probabilities.
/// λ values are constants: no gradient flows into them.
Var weighted_bce(const Var& probs, const Tensor& masks, std::span<const double> lambdas,
                 BceReduction reduction);

/// Σ_i BCE(M_i, M̃_i).
Var plain_bce(const Var& probs, const Tensor& masks, BceReduction reduction);

}  // namespace ag
}  // namespace fds
