#pragma once

#include <vector>

#include "stm/types.hpp"

namespace stm {

// Articulated rig: K joints in a tree rooted at joint 0, parents stored
// before children. Rest pose has identity joint rotations; rest_offset is the
// joint position relative to its parent (absolute for the root). An optional
// shape basis maps a shape vector to per-joint offset corrections.
struct SkeletonRig {
  struct Joint {
    int parent = -1;
    Vec3 rest_offset = Vec3::Zero();
  };
  std::vector<Joint> joints;
  MatX shape_basis;  // (3K) x B_s, empty when the rig has no shape space

  int joint_count() const { return int(joints.size()); }
  void validate() const;
  std::vector<Vec3> rest_world_positions(const VecX& shape = VecX()) const;
};

struct Pose {
  MatX3 joint_rotations;  // K x 3 axis-angle, radians
  Vec3 root_translation = Vec3::Zero();

  static Pose identity(int joint_count);
};

// Rigid map from canonical space to posed space for points attached to one
// joint: x -> rotation * x + translation. rotation_quat carries the same
// rotation for weighted quaternion blending.
struct JointTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Vec4 rotation_quat = Vec4(1, 0, 0, 0);
};

Vec4 axis_angle_to_quaternion(const Vec3& axis_angle);
Vec4 quaternion_multiply(const Vec4& a, const Vec4& b);

// Forward kinematics relative to the rest pose: transform k maps canonical
// points rigidly attached to joint k into posed space.
std::vector<JointTransform> joint_transforms(const SkeletonRig& rig, const Pose& pose,
                                             const VecX& shape = VecX());

// p_out_i = sum_k w_ik (B_k p_i + b_k). Weight rows must sum to 1 within 1e-6.
MatX3 forward_skinning(const MatX3& canonical_positions, const MatX& weights,
                       const std::vector<JointTransform>& transforms);

// Inverse-distance weighted average of the k nearest mesh vertices' skinning
// weights, 1/(d + 1e-8) weighting, rows renormalized to sum 1.
MatX knn_lbs_prior(const MatX3& positions, const MatX3& mesh_vertices,
                   const MatX& mesh_weights, int k = 6);

}  // namespace stm
