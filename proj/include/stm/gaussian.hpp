#pragma once

#include "stm/types.hpp"

namespace stm {

// Columnar set of N Gaussian primitives. All attributes are stored raw
// (pre-activation): quaternions unnormalized, scales in log space, opacity as
// a logit. Activations happen at use sites so optimization stays
// unconstrained and gradients flow through the activations.
struct GaussianField {
  MatX3 positions;       // N x 3, world space
  MatX4 rotations;       // N x 4 quaternions (w,x,y,z), unnormalized
  MatX3 log_scales;      // N x 3, per-axis log standard deviations
  VecX opacity_logits;   // N
  MatX sh;               // N x 3B, row layout [basis0 rgb, basis1 rgb, ...]
  int sh_degree = 0;

  Eigen::Index size() const { return positions.rows(); }
  int sh_basis_count() const { return (sh_degree + 1) * (sh_degree + 1); }

  static GaussianField empty(int sh_degree);
  // Resizes all attribute arrays to n rows with identity-ish defaults:
  // zero positions, identity quaternion, zero log scale, zero logit, zero SH.
  static GaussianField zeros(Eigen::Index n, int sh_degree);

  void validate() const;  // shape consistency
};

// Pinhole intrinsics plus a rigid world-to-camera pose (x_cam = R x + t).
// Camera looks down +z; image u grows with x_cam, v with y_cam.
struct Camera {
  Scalar fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;
  Vec3 center() const { return -rotation.transpose() * translation; }

  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                        Scalar fx, Scalar fy, int width, int height);
};

struct RenderOutput {
  Image color;  // H x W x 3
  Image depth;  // H x W, alpha-weighted expected camera depth
  Image alpha;  // H x W, accumulated opacity
};

Vec4 normalize_quaternion(const Vec4& q);  // throws DegenerateRotationError on |q|~0
Mat3 quaternion_to_matrix(const Vec4& q_unit);

// Sigma = R S S^T R^T with S = diag(exp(log_scale)). Quaternion normalized
// internally.
Mat3 build_covariance(const Vec4& quaternion, const Vec3& log_scale);

// exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)); throws SingularCovarianceError.
Scalar eval_gaussian(const Mat3& covariance, const Vec3& mean, const Vec3& x);

inline Scalar sigmoid(Scalar x) { return 1.0 / (1.0 + std::exp(-x)); }
inline Scalar inverse_sigmoid(Scalar y) { return std::log(y / (1.0 - y)); }

// Real spherical harmonics basis values for degree <= 3, 3DGS ordering.
// dir must be unit length; basis has (degree+1)^2 entries.
void sh_basis(int degree, const Vec3& dir, VecX& basis);
// d basis[b] / d dir, one 3-vector per basis entry.
void sh_basis_gradient(int degree, const Vec3& dir, MatX3& grad);

// View-dependent color: clamp(sum_b basis_b * coeff_b + 0.5, 0, 1) per
// channel. coefficients is B x 3.
Vec3 eval_sh_color(const MatX& coefficients, const Vec3& view_direction);

// Row-concatenation, a first. SH degrees must match.
GaussianField concat_fields(const GaussianField& a, const GaussianField& b);

}  // namespace stm
