#pragma once

#include <array>
#include <random>

#include "stm/types.hpp"

namespace stm {

// Three axis-aligned feature planes (XY, XZ, YZ), each an R x R grid of
// F-vectors stored row-major as (R*R) x F. Queries clamp to the bounding box.
struct Triplane {
  int resolution = 0;
  int features = 0;
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3::Ones();
  std::array<MatX, 3> planes;

  void validate() const;
  int feature_dim() const { return 3 * features; }

  static Triplane create(int resolution, int features, const Vec3& box_min,
                         const Vec3& box_max, Scalar init_half_width,
                         std::mt19937_64& rng);
};

struct TriplaneGrad {
  std::array<MatX, 3> planes;
  static TriplaneGrad zeros(const Triplane& tp);
  void add(const TriplaneGrad& other);
};

// Bilinear sample on each plane at the projected 2D coordinates; the three
// F-vectors concatenate in plane order (XY, XZ, YZ).
VecX query_triplane(const Triplane& tp, const Vec3& position);

// Scatters d_feature into plane gradients and chains to the query position
// (zero along axes clamped at the box).
void query_triplane_backward(const Triplane& tp, const Vec3& position,
                             const VecX& d_feature, TriplaneGrad& grad,
                             Vec3& d_position);

}  // namespace stm
