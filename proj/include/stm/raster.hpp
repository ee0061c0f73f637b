#pragma once

#include <optional>
#include <vector>

#include "stm/gaussian.hpp"

namespace stm {

struct RasterConfig {
  Scalar near_clip = 0.01;
  Scalar alpha_clamp = 0.99;         // per-splat alpha ceiling
  Scalar transmittance_min = 1e-4;   // blending stops before T drops below this
  Scalar cov2d_floor = 0.3;          // px^2 low-pass added to projected covariance
  Scalar alpha_min = 1e-12;          // contributions below this are skipped
  int tile_size = 16;
  int threads = 0;                   // 0 = auto, capped by STM_THREADS
  bool deterministic = false;        // force single-threaded reductions
};

// Screen-space footprint of one projected Gaussian.
struct Splat2D {
  int index = 0;            // row in the source field
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Zero();
  Scalar view_depth = 0;
  Vec3 color = Vec3::Zero();
  Scalar opacity = 0;
};

struct RasterGradients {
  MatX3 d_positions;
  MatX4 d_rotations;
  MatX3 d_log_scales;
  VecX d_opacity_logits;
  MatX d_sh;
  // Per-splat screen-space position gradient, the densification signal.
  MatX2 d_mean2d;
  // 1.0 for primitives that survived culling in this pass (sums under add()).
  VecX visible;

  static RasterGradients zeros(const GaussianField& field);
  void add(const RasterGradients& other);
};

// EWA first-order projection of one primitive. Returns nullopt when the
// primitive sits behind the near clip.
std::optional<Splat2D> project_gaussian(const Vec3& mean, const Mat3& covariance,
                                        const Camera& camera,
                                        const RasterConfig& config = {});

// Tile-based forward render per the splatting blend: front-to-back sorted by
// view depth (ties by primitive index), alpha clamped, early stop on
// transmittance, composited over background_color.
RenderOutput render(const GaussianField& field, const Camera& camera,
                    const Vec3& background_color, const RasterConfig& config = {});

// Reference renderer: per-pixel loop over every projected primitive under a
// full global sort. Same blend rules, no tiles.
RenderOutput render_oracle(const GaussianField& field, const Camera& camera,
                           const Vec3& background_color, const RasterConfig& config = {});

// Analytic gradients of render() contracted with upstream d_color / d_depth.
RasterGradients render_backward(const GaussianField& field, const Camera& camera,
                                const Vec3& background_color, const Image& d_color,
                                const Image& d_depth, const RasterConfig& config = {});

}  // namespace stm
