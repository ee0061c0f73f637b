#pragma once

#include <optional>

#include "stm/raster.hpp"
#include "stm/types.hpp"

namespace stm {

// Published objective weights (lambda_rgb, lambda_ssim, lambda_lpips,
// lambda_lbs, lambda_depth).
struct LossWeights {
  Scalar rgb = 0.8;
  Scalar ssim = 0.2;
  Scalar lpips = 1.0;
  Scalar lbs = 100.0;
  Scalar depth = 0.02;
};

struct LossReport {
  Scalar rgb_full = 0, ssim_full = 0, lpips_full = 0;
  Scalar rgb_avatar = 0, ssim_avatar = 0, lpips_avatar = 0;
  Scalar lbs = 0, depth = 0;
  Scalar total = 0;
  bool depth_skipped = false;  // degenerate depth in training mode

  Scalar weighted_sum(const LossWeights& w) const;
};

// Pluggable perceptual scorer; the built-in hook contributes zero.
class PerceptualScorer {
 public:
  virtual ~PerceptualScorer() = default;
  virtual Scalar score(const Image& rendered, const Image& target) const = 0;
};

// Mean absolute difference over all pixels and channels.
Scalar rgb_l1(const Image& rendered, const Image& target);
Image rgb_l1_backward(const Image& rendered, const Image& target, Scalar upstream);

// SSIM index: 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2,
// valid windows only, mean over windows and channels. The loss term used in
// the objective is (1 - ssim).
Scalar ssim(const Image& rendered, const Image& target);
Image ssim_backward(const Image& rendered, const Image& target, Scalar upstream);

// 1 - Pearson correlation over valid pixels. mask (optional) selects pixels;
// throws DegenerateDepthError when either side has (near) zero variance.
Scalar pearson_depth(const Image& rendered_depth, const Image& estimated_depth,
                     const Image* mask = nullptr);
Image pearson_depth_backward(const Image& rendered_depth, const Image& estimated_depth,
                             const Image* mask, Scalar upstream);

// Squared Frobenius norm of (W - prior); divided by the row count unless
// normalize is false (raw-sum variant).
Scalar lbs_loss(const MatX& weights, const MatX& prior, bool normalize = true);
MatX lbs_loss_backward(const MatX& weights, const MatX& prior, bool normalize,
                       Scalar upstream);

struct TotalLossInputs {
  const RenderOutput* full = nullptr;
  const RenderOutput* avatar = nullptr;  // avatar-only render
  const Image* target = nullptr;         // H x W x 3
  const Image* avatar_target = nullptr;  // target masked to the avatar region
  const Image* depth_est = nullptr;
  const MatX* lbs_weights = nullptr;
  const MatX* lbs_prior = nullptr;
};

// Weighted objective. The depth term uses pixels where the full render's
// alpha exceeds 0.5; a degenerate depth map downgrades to a skipped term
// with a stderr warning.
LossReport total_loss(const TotalLossInputs& in, const LossWeights& weights,
                      const PerceptualScorer* lpips = nullptr,
                      bool lbs_normalize = true);

// Valid-geometry mask for the depth term.
Image alpha_validity_mask(const Image& alpha, Scalar threshold = 0.5);

}  // namespace stm
