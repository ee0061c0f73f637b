#pragma once

#include <string>

#include "stm/gaussian.hpp"
#include "stm/heads.hpp"
#include "stm/raster.hpp"
#include "stm/rig.hpp"
#include "stm/triplane.hpp"

namespace stm {

// Mesh carrying prior skinning weights in canonical pose, the regularization
// target for the learned LBS weights.
struct PriorMesh {
  MatX3 vertices;  // M x 3
  MatX weights;    // M x K, rows sum to 1
};

// Canonical Gaussian positions plus the networks that predict everything
// else. Per-primitive attributes come from the deformation heads on top of
// uniform defaults, so a zeroed network renders as gray mid-opacity blobs at
// the canonical points.
struct AvatarModel {
  MatX3 canonical_positions;
  Triplane triplane;
  DeformationHeads heads;
  SkeletonRig rig;
  PriorMesh prior;
  Vec3 base_log_scale = Vec3::Constant(std::log(0.05));
  Scalar base_opacity_logit = inverse_sigmoid(0.9);
  int sh_degree = 3;

  Eigen::Index size() const { return canonical_positions.rows(); }
  void validate() const;
};

// Forward cache: everything the backward pass reuses.
struct PosedAvatar {
  GaussianField field;            // posed, world space
  MatX features;                  // N x 3F triplane features at raw canonical points
  HeadOutputs head_out;
  MatX lbs_weights;               // N x K, softmaxed
  MatX3 canonical_offset;         // canonical + delta
  std::vector<JointTransform> transforms;
  MatX blend_quats;               // N x 4, unnormalized weighted joint quats
  MatX4 canonical_quats;          // N x 4, identity + head rotation
};

struct AvatarGrads {
  MatX3 d_canonical_positions;
  TriplaneGrad triplane;
  HeadGrads heads;
  static AvatarGrads zeros(const AvatarModel& model);
  void add(const AvatarGrads& other);
};

PosedAvatar pose_avatar_fwd(const AvatarModel& model, const Pose& pose,
                            const VecX& shape = VecX());

inline GaussianField pose_avatar(const AvatarModel& model, const Pose& pose,
                                 const VecX& shape = VecX()) {
  return pose_avatar_fwd(model, pose, shape).field;
}

// d_field: rasterizer gradients on the posed field. d_lbs_weights: extra
// upstream on the softmaxed weights (the LBS regularizer), may be empty.
AvatarGrads pose_avatar_backward(const AvatarModel& model, const PosedAvatar& cache,
                                 const RasterGradients& d_field,
                                 const MatX& d_lbs_weights = MatX());

// Rig + prior mesh + weights JSON schema (see docs/rig_format.md).
void save_rig_json(const SkeletonRig& rig, const PriorMesh& mesh, const std::string& path);
void load_rig_json(const std::string& path, SkeletonRig& rig, PriorMesh& mesh);
std::string rig_to_json_string(const SkeletonRig& rig, const PriorMesh& mesh);
void rig_from_json_string(const std::string& text, SkeletonRig& rig, PriorMesh& mesh);

// Motion sequences: JSON array of {joint_rotations: Kx3, root_translation: 3}.
void save_pose_sequence(const std::vector<Pose>& poses, const std::string& path);
std::vector<Pose> load_pose_sequence(const std::string& path);

}  // namespace stm
