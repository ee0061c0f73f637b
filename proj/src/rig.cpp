#include "stm/rig.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stm/gaussian.hpp"

namespace stm {

void SkeletonRig::validate() const {
  if (joints.empty()) throw ConfigError("rig: no joints");
  if (joints[0].parent != -1) throw ConfigError("rig: joint 0 must be the root");
  for (size_t k = 1; k < joints.size(); ++k) {
    if (joints[k].parent < 0 || joints[k].parent >= int(k))
      throw ConfigError("rig: parents must precede children");
    if (joints[k].rest_offset.norm() <= 0)
      throw ConfigError("rig: rest bone length must be positive");
  }
  if (shape_basis.size() > 0 && shape_basis.rows() != Eigen::Index(3 * joints.size()))
    throw ConfigError("rig: shape basis row count must be 3K");
}

std::vector<Vec3> SkeletonRig::rest_world_positions(const VecX& shape) const {
  std::vector<Vec3> offsets(joints.size());
  for (size_t k = 0; k < joints.size(); ++k) offsets[k] = joints[k].rest_offset;
  if (shape.size() > 0) {
    if (shape_basis.cols() != shape.size())
      throw ConfigError("rig: shape vector width does not match basis");
    const VecX corr = shape_basis * shape;
    for (size_t k = 0; k < joints.size(); ++k)
      offsets[k] += corr.segment<3>(Eigen::Index(3 * k));
  }
  std::vector<Vec3> world(joints.size());
  world[0] = offsets[0];
  for (size_t k = 1; k < joints.size(); ++k)
    world[k] = world[size_t(joints[k].parent)] + offsets[k];
  return world;
}

Pose Pose::identity(int joint_count) {
  Pose p;
  p.joint_rotations = MatX3::Zero(joint_count, 3);
  return p;
}

Vec4 axis_angle_to_quaternion(const Vec3& axis_angle) {
  const Scalar angle = axis_angle.norm();
  if (angle < 1e-12) return Vec4(1.0, 0.5 * axis_angle.x(), 0.5 * axis_angle.y(),
                                 0.5 * axis_angle.z());
  const Scalar half = 0.5 * angle;
  const Vec3 axis = axis_angle / angle;
  const Scalar s = std::sin(half);
  return Vec4(std::cos(half), s * axis.x(), s * axis.y(), s * axis.z());
}

Vec4 quaternion_multiply(const Vec4& a, const Vec4& b) {
  const Scalar aw = a[0], bw = b[0];
  const Vec3 av = a.tail<3>(), bv = b.tail<3>();
  Vec4 out;
  out[0] = aw * bw - av.dot(bv);
  out.tail<3>() = aw * bv + bw * av + av.cross(bv);
  return out;
}

std::vector<JointTransform> joint_transforms(const SkeletonRig& rig, const Pose& pose,
                                             const VecX& shape) {
  rig.validate();
  const int k_count = rig.joint_count();
  if (pose.joint_rotations.rows() != k_count)
    throw ConfigError("pose: joint rotation count does not match rig");

  std::vector<Vec3> offsets(static_cast<size_t>(k_count));
  for (int k = 0; k < k_count; ++k) offsets[size_t(k)] = rig.joints[size_t(k)].rest_offset;
  if (shape.size() > 0) {
    if (rig.shape_basis.cols() != shape.size())
      throw ConfigError("rig: shape vector width does not match basis");
    const VecX corr = rig.shape_basis * shape;
    for (int k = 0; k < k_count; ++k) offsets[size_t(k)] += corr.segment<3>(3 * k);
  }

  std::vector<Vec3> rest_world(static_cast<size_t>(k_count));
  std::vector<Vec3> posed_world(static_cast<size_t>(k_count));
  std::vector<Mat3> world_rot(static_cast<size_t>(k_count));
  std::vector<Vec4> world_quat(static_cast<size_t>(k_count));

  rest_world[0] = offsets[0];
  world_quat[0] = axis_angle_to_quaternion(pose.joint_rotations.row(0).transpose());
  if (world_quat[0][0] < 0) world_quat[0] = -world_quat[0];
  world_rot[0] = quaternion_to_matrix(normalize_quaternion(world_quat[0]));
  posed_world[0] = offsets[0] + pose.root_translation;

  for (int k = 1; k < k_count; ++k) {
    const int p = rig.joints[size_t(k)].parent;
    rest_world[size_t(k)] = rest_world[size_t(p)] + offsets[size_t(k)];
    const Vec4 local = axis_angle_to_quaternion(pose.joint_rotations.row(k).transpose());
    Vec4 q = quaternion_multiply(world_quat[size_t(p)], local);
    if (q.dot(world_quat[size_t(p)]) < 0) q = -q;  // consistent hemisphere for blending
    world_quat[size_t(k)] = q;
    world_rot[size_t(k)] = quaternion_to_matrix(normalize_quaternion(q));
    posed_world[size_t(k)] = posed_world[size_t(p)] + world_rot[size_t(p)] * offsets[size_t(k)];
  }

  std::vector<JointTransform> out(static_cast<size_t>(k_count));
  for (int k = 0; k < k_count; ++k) {
    out[size_t(k)].rotation = world_rot[size_t(k)];
    out[size_t(k)].translation =
        posed_world[size_t(k)] - world_rot[size_t(k)] * rest_world[size_t(k)];
    out[size_t(k)].rotation_quat = world_quat[size_t(k)];
  }
  return out;
}

MatX3 forward_skinning(const MatX3& canonical_positions, const MatX& weights,
                       const std::vector<JointTransform>& transforms) {
  const Eigen::Index n = canonical_positions.rows();
  const Eigen::Index k_count = Eigen::Index(transforms.size());
  if (weights.rows() != n || weights.cols() != k_count)
    throw ShapeMismatchError("forward_skinning: weight shape mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    if (std::abs(weights.row(i).sum() - 1.0) > 1e-6)
      throw InvalidWeightsError("forward_skinning: weight row does not sum to 1");

  // Residual form of the weighted blend: identical to sum_k w_k (B_k p + b_k)
  // up to the unit row sum, and exactly the identity when every transform is.
  MatX3 out = canonical_positions;
  for (Eigen::Index k = 0; k < k_count; ++k) {
    const auto& t = transforms[size_t(k)];
    MatX3 moved =
        canonical_positions * (t.rotation - Mat3::Identity()).transpose();
    moved.rowwise() += t.translation.transpose();
    out += weights.col(k).asDiagonal() * moved;
  }
  return out;
}

MatX knn_lbs_prior(const MatX3& positions, const MatX3& mesh_vertices,
                   const MatX& mesh_weights, int k) {
  const Eigen::Index n = positions.rows(), m = mesh_vertices.rows();
  if (mesh_weights.rows() != m)
    throw ShapeMismatchError("knn_lbs_prior: mesh weight rows do not match vertices");
  if (m < k) throw ConfigError("knn_lbs_prior: fewer mesh vertices than k");

  MatX out(n, mesh_weights.cols());
  std::vector<int> order(static_cast<size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = positions.row(i).transpose();
    VecX dist(m);
    for (Eigen::Index j = 0; j < m; ++j)
      dist(j) = (mesh_vertices.row(j).transpose() - p).norm();
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) {
                        if (dist(a) != dist(b)) return dist(a) < dist(b);
                        return a < b;
                      });
    VecX acc = VecX::Zero(mesh_weights.cols());
    Scalar total = 0;
    for (int j = 0; j < k; ++j) {
      const Scalar w = 1.0 / (dist(order[size_t(j)]) + 1e-8);
      acc += w * mesh_weights.row(order[size_t(j)]).transpose();
      total += w;
    }
    out.row(i) = (acc / total).transpose();
  }
  return out;
}

}  // namespace stm
