#pragma once

#include <string>
#include <vector>

#include "stm/avatar.hpp"
#include "stm/gaussian.hpp"
#include "stm/mapping.hpp"

namespace stm {

// Generating avatar: a canonical field with analytically assigned skinning
// weights, one primitive per prior-mesh vertex.
struct GroundTruthAvatar {
  GaussianField canonical;
  MatX lbs_weights;  // N x K
  SkeletonRig rig;
  PriorMesh prior;
};

struct SyntheticFrame {
  Image image;      // H x W x 3
  Image depth;      // true alpha-weighted depth
  Image depth_est;  // affine-corrupted + noisy monocular stand-in
  Image mask;       // avatar region, binary
  Camera camera;
  Pose pose;
};

struct SyntheticSequence {
  std::vector<SyntheticFrame> frames;
  std::vector<int> train_split;
  std::vector<int> test_split;
  GaussianField scene;
  GroundTruthAvatar avatar;
  Vec3 background = Vec3(0.10, 0.10, 0.12);
  Scalar extent = 4.0;
  uint64_t seed = 0;
};

// Deterministic scene: a flattened ground slab plus clustered furniture
// blobs, palette colors in the SH DC terms.
GaussianField make_scene(uint64_t seed, int n_primitives, Scalar extent,
                         int sh_degree = 3);

// 6-joint humanoid (root, spine, two 2-joint legs) with a capsule-sampled
// prior mesh carrying rigid-falloff weights, bilaterally symmetric about x=0.
GroundTruthAvatar make_gt_avatar(uint64_t seed, int sh_degree = 3);

// Trainee model over the same rig and prior mesh: canonical points seeded one
// per vertex, fresh triplane and heads.
AvatarModel make_trainee_avatar(const SkeletonRig& rig, const PriorMesh& prior,
                                uint64_t seed, int sh_degree, int triplane_resolution,
                                int triplane_features, int head_hidden);

GaussianField pose_gt_avatar(const GroundTruthAvatar& avatar, const Pose& pose);

Pose walk_pose(const GroundTruthAvatar& avatar, int frame, int n_frames);

SyntheticSequence make_sequence(const GaussianField& scene,
                                const GroundTruthAvatar& avatar, int n_frames,
                                uint64_t seed, int width = 64, int height = 64);

Scalar psnr(const Image& a, const Image& b);  // dB, capped at 100

// Euclidean dilation by `radius` pixels.
Image dilate_mask(const Image& mask, int radius);

struct FrameScore {
  Scalar psnr = 0, ssim = 0;
  Scalar mask_psnr = 0;   // per-pixel mask metric
  Scalar crop_psnr = 0;   // dilated-mask bounding box metric
  Scalar band_psnr = 0;   // dilated(5) minus mask ring
  bool has_mask = false;
};

struct QualityReport {
  std::vector<FrameScore> per_frame;
  FrameScore mean;
  std::vector<int> frame_indices;
};

QualityReport evaluate(const GaussianField& scene, const AvatarModel& avatar,
                       const MappingStack& mapping,
                       const std::vector<SyntheticFrame>& frames,
                       const std::vector<int>& indices, const Vec3& background,
                       const RasterConfig& rcfg = {});

// Scores stored frames against a rendering of the stored generators.
QualityReport self_check(const SyntheticSequence& seq);

// Directory layout: frames/NNN.png, depth/NNN.pfm, depth_est/NNN.pfm,
// mask/NNN.png, cameras.json, poses.json, rig.json, init_points.ply,
// gt_scene.ply, gt_avatar.ply, meta.json.
void save_sequence(const SyntheticSequence& seq, const std::string& dir);

struct Dataset {
  std::vector<SyntheticFrame> frames;
  std::vector<int> train_split;
  std::vector<int> test_split;
  SkeletonRig rig;
  PriorMesh prior;
  GaussianField init_points;
  Vec3 background = Vec3::Zero();
  Scalar extent = 0;
  uint64_t seed = 0;
};

Dataset load_dataset(const std::string& dir);

}  // namespace stm
