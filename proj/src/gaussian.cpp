#include "stm/gaussian.hpp"

#include <cmath>

namespace stm {

namespace {

constexpr Scalar kSH0 = 0.28209479177387814;
constexpr Scalar kSH1 = 0.4886025119029199;
const Scalar kSH2[5] = {1.0925484305920792, -1.0925484305920792,
                        0.31539156525252005, -1.0925484305920792,
                        0.5462742152960396};
const Scalar kSH3[7] = {-0.5900435899266435, 2.890611442640554,
                        -0.4570457994644658, 0.3731763325901154,
                        -0.4570457994644658, 1.445305721320277,
                        -0.5900435899266435};

}  // namespace

GaussianField GaussianField::empty(int sh_degree) {
  return zeros(0, sh_degree);
}

GaussianField GaussianField::zeros(Eigen::Index n, int sh_degree) {
  GaussianField f;
  f.sh_degree = sh_degree;
  const int b = (sh_degree + 1) * (sh_degree + 1);
  f.positions = MatX3::Zero(n, 3);
  f.rotations = MatX4::Zero(n, 4);
  f.rotations.col(0).setOnes();  // identity quaternion
  f.log_scales = MatX3::Zero(n, 3);
  f.opacity_logits = VecX::Zero(n);
  f.sh = MatX::Zero(n, 3 * b);
  return f;
}

void GaussianField::validate() const {
  const Eigen::Index n = positions.rows();
  if (rotations.rows() != n || log_scales.rows() != n ||
      opacity_logits.rows() != n || sh.rows() != n)
    throw ShapeMismatchError("GaussianField: attribute row counts differ");
  if (sh.cols() != 3 * sh_basis_count())
    throw ShapeMismatchError("GaussianField: sh column count does not match degree");
}

void Camera::validate() const {
  if (fx <= 0 || fy <= 0)
    throw ConfigError("Camera: focal lengths must be positive");
  if (width < 1 || height < 1)
    throw ConfigError("Camera: viewport must be at least 1x1");
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw ConfigError("Camera: rotation is not orthonormal");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up,
                       Scalar fx, Scalar fy, int width, int height) {
  Camera cam;
  const Vec3 forward = (target - eye).normalized();   // camera +z
  const Vec3 x_axis = forward.cross(up).normalized(); // image right
  const Vec3 y_axis = forward.cross(x_axis);          // image down, z cross x
  cam.rotation.row(0) = x_axis.transpose();
  cam.rotation.row(1) = y_axis.transpose();
  cam.rotation.row(2) = forward.transpose();
  cam.translation = -cam.rotation * eye;
  cam.fx = fx;
  cam.fy = fy;
  cam.width = width;
  cam.height = height;
  cam.cx = width * 0.5;
  cam.cy = height * 0.5;
  return cam;
}

Vec4 normalize_quaternion(const Vec4& q) {
  const Scalar n = q.norm();
  if (!(n > 1e-12))
    throw DegenerateRotationError("zero-norm quaternion");
  return q / n;
}

Mat3 quaternion_to_matrix(const Vec4& q) {
  const Scalar w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

Mat3 build_covariance(const Vec4& quaternion, const Vec3& log_scale) {
  const Mat3 r = quaternion_to_matrix(normalize_quaternion(quaternion));
  const Vec3 s = log_scale.array().exp();
  const Mat3 v = r * s.asDiagonal();
  return v * v.transpose();
}

Scalar eval_gaussian(const Mat3& covariance, const Vec3& mean, const Vec3& x) {
  Eigen::LDLT<Mat3> ldlt(covariance);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 0)
    throw SingularCovarianceError("covariance is not positive definite");
  const Vec3 d = x - mean;
  return std::exp(-0.5 * d.dot(ldlt.solve(d)));
}

void sh_basis(int degree, const Vec3& dir, VecX& basis) {
  const int b = (degree + 1) * (degree + 1);
  basis.resize(b);
  basis[0] = kSH0;
  if (degree < 1) return;
  const Scalar x = dir.x(), y = dir.y(), z = dir.z();
  basis[1] = -kSH1 * y;
  basis[2] = kSH1 * z;
  basis[3] = -kSH1 * x;
  if (degree < 2) return;
  const Scalar xx = x * x, yy = y * y, zz = z * z;
  basis[4] = kSH2[0] * x * y;
  basis[5] = kSH2[1] * y * z;
  basis[6] = kSH2[2] * (2 * zz - xx - yy);
  basis[7] = kSH2[3] * x * z;
  basis[8] = kSH2[4] * (xx - yy);
  if (degree < 3) return;
  basis[9] = kSH3[0] * y * (3 * xx - yy);
  basis[10] = kSH3[1] * x * y * z;
  basis[11] = kSH3[2] * y * (4 * zz - xx - yy);
  basis[12] = kSH3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  basis[13] = kSH3[4] * x * (4 * zz - xx - yy);
  basis[14] = kSH3[5] * z * (xx - yy);
  basis[15] = kSH3[6] * x * (xx - 3 * yy);
}

void sh_basis_gradient(int degree, const Vec3& dir, MatX3& grad) {
  const int b = (degree + 1) * (degree + 1);
  grad.setZero(b, 3);
  if (degree < 1) return;
  const Scalar x = dir.x(), y = dir.y(), z = dir.z();
  grad.row(1) = Vec3(0, -kSH1, 0).transpose();
  grad.row(2) = Vec3(0, 0, kSH1).transpose();
  grad.row(3) = Vec3(-kSH1, 0, 0).transpose();
  if (degree < 2) return;
  grad.row(4) = Vec3(kSH2[0] * y, kSH2[0] * x, 0).transpose();
  grad.row(5) = Vec3(0, kSH2[1] * z, kSH2[1] * y).transpose();
  grad.row(6) = Vec3(-2 * kSH2[2] * x, -2 * kSH2[2] * y, 4 * kSH2[2] * z).transpose();
  grad.row(7) = Vec3(kSH2[3] * z, 0, kSH2[3] * x).transpose();
  grad.row(8) = Vec3(2 * kSH2[4] * x, -2 * kSH2[4] * y, 0).transpose();
  if (degree < 3) return;
  const Scalar xx = x * x, yy = y * y, zz = z * z;
  grad.row(9) = Vec3(kSH3[0] * 6 * x * y, kSH3[0] * (3 * xx - 3 * yy), 0).transpose();
  grad.row(10) = Vec3(kSH3[1] * y * z, kSH3[1] * x * z, kSH3[1] * x * y).transpose();
  grad.row(11) = Vec3(kSH3[2] * (-2 * x * y), kSH3[2] * (4 * zz - xx - 3 * yy),
                      kSH3[2] * 8 * y * z).transpose();
  grad.row(12) = Vec3(kSH3[3] * (-6 * x * z), kSH3[3] * (-6 * y * z),
                      kSH3[3] * (6 * zz - 3 * xx - 3 * yy)).transpose();
  grad.row(13) = Vec3(kSH3[4] * (4 * zz - 3 * xx - yy), kSH3[4] * (-2 * x * y),
                      kSH3[4] * 8 * x * z).transpose();
  grad.row(14) = Vec3(kSH3[5] * 2 * x * z, kSH3[5] * (-2 * y * z),
                      kSH3[5] * (xx - yy)).transpose();
  grad.row(15) = Vec3(kSH3[6] * (3 * xx - 3 * yy), kSH3[6] * (-6 * x * y), 0).transpose();
}

Vec3 eval_sh_color(const MatX& coefficients, const Vec3& view_direction) {
  const int b = static_cast<int>(coefficients.rows());
  const int degree = static_cast<int>(std::lround(std::sqrt(double(b)))) - 1;
  if ((degree + 1) * (degree + 1) != b)
    throw ConfigError("eval_sh_color: coefficient count is not a square");
  if (std::abs(view_direction.norm() - 1.0) > 1e-6)
    throw ConfigError("eval_sh_color: view direction must be unit length");
  VecX basis;
  sh_basis(degree, view_direction, basis);
  Vec3 c = coefficients.transpose() * basis;
  c.array() += 0.5;
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

GaussianField concat_fields(const GaussianField& a, const GaussianField& b) {
  if (a.sh_degree != b.sh_degree)
    throw IncompatibleFieldsError("concat_fields: SH degrees differ");
  GaussianField out;
  out.sh_degree = a.sh_degree;
  const Eigen::Index na = a.size(), nb = b.size();
  out.positions.resize(na + nb, 3);
  out.positions << a.positions, b.positions;
  out.rotations.resize(na + nb, 4);
  out.rotations << a.rotations, b.rotations;
  out.log_scales.resize(na + nb, 3);
  out.log_scales << a.log_scales, b.log_scales;
  out.opacity_logits.resize(na + nb);
  out.opacity_logits << a.opacity_logits, b.opacity_logits;
  out.sh.resize(na + nb, a.sh.cols());
  out.sh << a.sh, b.sh;
  return out;
}

}  // namespace stm
