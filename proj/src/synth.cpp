#include "stm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "stm/field_io.hpp"
#include "stm/image_io.hpp"
#include "stm/losses.hpp"
#include "stm/parallel.hpp"
#include "stm/raster.hpp"

namespace stm {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr Scalar kY00 = 0.28209479177387814;

// DC coefficient that renders as the given channel value.
Scalar dc_for(Scalar channel) { return (channel - 0.5) / kY00; }

void set_color(GaussianField& f, Eigen::Index i, const Vec3& rgb) {
  f.sh(i, 0) = dc_for(rgb[0]);
  f.sh(i, 1) = dc_for(rgb[1]);
  f.sh(i, 2) = dc_for(rgb[2]);
}

const Vec3 kPalette[8] = {
    {0.62, 0.47, 0.33}, {0.35, 0.55, 0.30}, {0.55, 0.26, 0.24}, {0.75, 0.68, 0.50},
    {0.30, 0.42, 0.58}, {0.66, 0.60, 0.62}, {0.45, 0.35, 0.50}, {0.70, 0.50, 0.28}};

struct BoneSegment {
  int joint;
  Vec3 a, b;
  Scalar radius;
  Vec3 color;
  int rings;
};

Scalar point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const Scalar t = std::clamp(ab.dot(p - a) / ab.squaredNorm(), Scalar(0), Scalar(1));
  return (p - (a + t * ab)).norm();
}

std::vector<BoneSegment> humanoid_bones() {
  // Root, spine, and two 2-joint legs; everything mirror symmetric in x.
  const Vec3 shorts(0.30, 0.35, 0.72);
  const Vec3 shirt(0.74, 0.28, 0.24);
  const Vec3 skin(0.82, 0.67, 0.55);
  return {
      {0, {0, 0.78, 0}, {0, 1.10, 0}, 0.16, shorts, 6},
      {1, {0, 1.10, 0}, {0, 1.52, 0}, 0.13, shirt, 8},
      {2, {-0.13, 0.89, 0}, {-0.13, 0.48, 0}, 0.070, skin, 6},
      {3, {-0.13, 0.48, 0}, {-0.13, 0.06, 0}, 0.055, skin, 6},
      {4, {0.13, 0.89, 0}, {0.13, 0.48, 0}, 0.070, skin, 6},
      {5, {0.13, 0.48, 0}, {0.13, 0.06, 0}, 0.055, skin, 6},
  };
}

SkeletonRig humanoid_rig() {
  SkeletonRig rig;
  rig.joints.resize(6);
  rig.joints[0] = {-1, Vec3(0, 0.95, 0)};        // root / pelvis
  rig.joints[1] = {0, Vec3(0, 0.35, 0)};         // spine
  rig.joints[2] = {0, Vec3(-0.13, -0.06, 0)};    // hip left
  rig.joints[3] = {2, Vec3(0, -0.41, 0)};        // knee left
  rig.joints[4] = {0, Vec3(0.13, -0.06, 0)};     // hip right
  rig.joints[5] = {4, Vec3(0, -0.41, 0)};        // knee right
  return rig;
}

}  // namespace

GaussianField make_scene(uint64_t seed, int n_primitives, Scalar extent,
                         int sh_degree) {
  if (n_primitives < 1) throw ConfigError("make_scene: need at least one primitive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> uni(0.0, 1.0);
  GaussianField f = GaussianField::zeros(n_primitives, sh_degree);
  const Scalar radius = 0.5 * extent;

  if (n_primitives == 1) {
    f.log_scales.row(0).setConstant(std::log(0.1 * extent));
    f.opacity_logits(0) = inverse_sigmoid(0.95);
    set_color(f, 0, kPalette[0]);
    return f;
  }

  // Cluster centers for the furniture blobs sit on the slab.
  const int n_clusters = 5;
  std::vector<Vec3> centers;
  std::vector<Vec3> cluster_colors;
  for (int c = 0; c < n_clusters; ++c) {
    const Scalar ang = 2 * M_PI * uni(rng);
    const Scalar r = radius * (0.55 + 0.35 * uni(rng));
    centers.push_back(Vec3(r * std::cos(ang), 0.2 + 0.5 * uni(rng), r * std::sin(ang)));
    cluster_colors.push_back(kPalette[size_t(c + 2) % 8]);
  }

  const Eigen::Index n_ground = Eigen::Index(std::lround(n_primitives * 0.6));
  for (Eigen::Index i = 0; i < n_primitives; ++i) {
    if (i < n_ground) {
      // Flattened slab primitive.
      const Scalar ang = 2 * M_PI * uni(rng);
      const Scalar r = radius * std::sqrt(uni(rng));
      f.positions.row(i) = Vec3(r * std::cos(ang), 0.02 * uni(rng),
                                r * std::sin(ang)).transpose();
      f.log_scales(i, 0) = std::log(extent * (0.030 + 0.045 * uni(rng)));
      f.log_scales(i, 1) = std::log(extent * (0.004 + 0.006 * uni(rng)));
      f.log_scales(i, 2) = std::log(extent * (0.030 + 0.045 * uni(rng)));
      const Scalar yaw = 2 * M_PI * uni(rng);
      f.rotations.row(i) = Vec4(std::cos(yaw / 2), 0, std::sin(yaw / 2), 0).transpose();
      const Vec3 base = (i % 2 == 0) ? kPalette[0] : kPalette[1];
      const Scalar tint = 0.9 + 0.2 * uni(rng);
      set_color(f, i, (base * tint).cwiseMin(0.95));
    } else {
      const size_t c = size_t(i) % centers.size();
      Vec3 offset(uni(rng) - 0.5, uni(rng) - 0.5, uni(rng) - 0.5);
      f.positions.row(i) = (centers[c] + 0.35 * extent * 0.25 * offset).transpose();
      for (int a = 0; a < 3; ++a)
        f.log_scales(i, a) = std::log(extent * (0.015 + 0.030 * uni(rng)));
      Vec4 q(uni(rng) * 2 - 1, uni(rng) * 2 - 1, uni(rng) * 2 - 1, uni(rng) * 2 - 1);
      if (q.norm() < 0.3) q = Vec4(1, 0, 0, 0);
      f.rotations.row(i) = q.transpose();
      const Scalar tint = 0.85 + 0.3 * uni(rng);
      set_color(f, i, (cluster_colors[c] * tint).cwiseMin(0.95));
    }
    f.opacity_logits(i) = inverse_sigmoid(0.88 + 0.08 * uni(rng));
    // Mild view dependence in the rest coefficients.
    for (int b = 1; b < f.sh_basis_count(); ++b)
      for (int ch = 0; ch < 3; ++ch)
        f.sh(i, 3 * b + ch) = 0.03 * (2 * uni(rng) - 1);
  }
  return f;
}

GroundTruthAvatar make_gt_avatar(uint64_t seed, int sh_degree) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> uni(0.0, 1.0);
  GroundTruthAvatar out;
  out.rig = humanoid_rig();
  const auto bones = humanoid_bones();
  const int k_count = out.rig.joint_count();

  // One tint per bone, shared by mirrored bones. Depth-tie groups under a
  // sagittal camera span whole bones (a ring angle with sin = +-1 puts every
  // ring of both legs at the same depth), and alpha blending only commutes
  // within equal colors, so tints must be constant across each such group.
  // All four leg segments share one skin tone: the z = 0 tie group interleaves
  // thigh and shin blocks between mirror partners.
  std::vector<Scalar> bone_tint(bones.size());
  for (size_t b = 0; b < bones.size(); ++b) {
    const size_t source = bones[b].joint >= 3 ? 2 : b;
    bone_tint[b] = source == b ? 0.92 + 0.14 * uni(rng) : bone_tint[source];
  }

  std::vector<Vec3> verts;
  std::vector<Vec3> colors;
  // Exact ring trig so that mirror pairs (x -> -x) share bitwise-identical
  // depth from any sagittal camera; libm sin/cos of mirrored angles differ by
  // an ulp, which would split and reorder the depth ties.
  constexpr int kRingPoints = 8;
  const Scalar c = std::sqrt(0.5);
  const Scalar ring_cos[kRingPoints] = {1, c, 0, -c, -1, -c, 0, c};
  const Scalar ring_sin[kRingPoints] = {0, c, 1, c, 0, -c, -1, -c};
  for (size_t b = 0; b < bones.size(); ++b) {
    const BoneSegment& bone = bones[b];
    for (int ring = 0; ring < bone.rings; ++ring) {
      const Scalar t = bone.rings == 1 ? 0.5 : Scalar(ring) / (bone.rings - 1);
      const Vec3 center = bone.a + t * (bone.b - bone.a);
      for (int j = 0; j < kRingPoints; ++j) {
        verts.push_back(center +
                        bone.radius * Vec3(ring_cos[j], 0, ring_sin[j]));
        colors.push_back((bone.color * bone_tint[b]).cwiseMin(0.95));
      }
    }
  }

  const Eigen::Index n = Eigen::Index(verts.size());
  out.prior.vertices.resize(n, 3);
  out.prior.weights.resize(n, k_count);
  const Scalar falloff = 0.03;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.prior.vertices.row(i) = verts[size_t(i)].transpose();
    VecX w = VecX::Zero(k_count);
    for (const BoneSegment& bone : bones) {
      const Scalar d = point_segment_distance(verts[size_t(i)], bone.a, bone.b);
      w(bone.joint) += std::exp(-(d / falloff) * (d / falloff));
    }
    out.prior.weights.row(i) = (w / w.sum()).transpose();
  }
  out.lbs_weights = out.prior.weights;

  // View-independent colors (DC only) keep the avatar bilaterally symmetric:
  // odd-in-x basis functions would flip sign under mirroring.
  out.canonical = GaussianField::zeros(n, sh_degree);
  out.canonical.positions = out.prior.vertices;
  out.canonical.log_scales.setConstant(std::log(0.04));
  out.canonical.opacity_logits.setConstant(inverse_sigmoid(0.35));
  for (Eigen::Index i = 0; i < n; ++i)
    set_color(out.canonical, i, colors[size_t(i)]);
  return out;
}

AvatarModel make_trainee_avatar(const SkeletonRig& rig, const PriorMesh& prior,
                                uint64_t seed, int sh_degree, int triplane_resolution,
                                int triplane_features, int head_hidden) {
  std::mt19937_64 rng(seed);
  AvatarModel m;
  m.rig = rig;
  m.prior = prior;
  m.sh_degree = sh_degree;
  m.canonical_positions = prior.vertices;

  Vec3 lo = prior.vertices.colwise().minCoeff().transpose();
  Vec3 hi = prior.vertices.colwise().maxCoeff().transpose();
  const Vec3 pad = 0.25 * (hi - lo).cwiseMax(0.2);
  m.triplane = Triplane::create(triplane_resolution, triplane_features, lo - pad,
                                hi + pad, 1e-4, rng);
  m.heads = DeformationHeads::create(m.triplane.feature_dim(),
                                     (sh_degree + 1) * (sh_degree + 1),
                                     rig.joint_count(), head_hidden, rng);

  // Base scale from the mean 3-NN spacing of the canonical points.
  const Eigen::Index n = prior.vertices.rows();
  Scalar mean_nn = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Scalar> d;
    d.reserve(size_t(n - 1));
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d.push_back((prior.vertices.row(j) - prior.vertices.row(i)).norm());
    std::nth_element(d.begin(), d.begin() + 2, d.end());
    mean_nn += (d[0] + d[1] + d[2]) / 3.0;
  }
  mean_nn /= Scalar(n);
  m.base_log_scale.setConstant(std::log(std::max(1e-3, mean_nn)));
  m.base_opacity_logit = inverse_sigmoid(0.5);
  m.validate();
  return m;
}

GaussianField pose_gt_avatar(const GroundTruthAvatar& avatar, const Pose& pose) {
  const auto transforms = joint_transforms(avatar.rig, pose);
  GaussianField posed = avatar.canonical;
  posed.positions = forward_skinning(avatar.canonical.positions, avatar.lbs_weights,
                                     transforms);
  return posed;
}

Pose walk_pose(const GroundTruthAvatar& avatar, int frame, int n_frames) {
  Pose pose = Pose::identity(avatar.rig.joint_count());
  const Scalar phi = 2 * M_PI * frame / std::max(1, n_frames);
  const Scalar walk_radius = 1.0;
  const Scalar gait = 4 * phi;  // four stride cycles per circuit
  const Scalar swing = 0.55 * std::sin(gait);
  const Scalar lift = 0.45;

  pose.root_translation =
      Vec3(walk_radius * std::cos(phi), -0.02 - 0.03 * std::abs(std::cos(gait)),
           walk_radius * std::sin(phi));
  pose.joint_rotations.row(0) = Vec3(0, -phi, 0).transpose();  // face the tangent
  pose.joint_rotations.row(1) = Vec3(0.06 * std::sin(gait * 0.5), 0, 0).transpose();
  pose.joint_rotations.row(2) = Vec3(swing, 0, 0).transpose();
  pose.joint_rotations.row(3) =
      Vec3(lift * std::max(0.0, std::sin(gait + 0.9)), 0, 0).transpose();
  pose.joint_rotations.row(4) = Vec3(-swing, 0, 0).transpose();
  pose.joint_rotations.row(5) =
      Vec3(lift * std::max(0.0, std::sin(gait + M_PI + 0.9)), 0, 0).transpose();
  return pose;
}

SyntheticSequence make_sequence(const GaussianField& scene,
                                const GroundTruthAvatar& avatar, int n_frames,
                                uint64_t seed, int width, int height) {
  if (n_frames < 1) throw ConfigError("make_sequence: need at least one frame");
  SyntheticSequence seq;
  seq.scene = scene;
  seq.avatar = avatar;
  seq.seed = seed;
  seq.frames.resize(size_t(n_frames));

  RasterConfig rcfg;
  rcfg.threads = 1;  // frames parallelize below

  parallel_for(0, n_frames, [&](int64_t lo, int64_t hi) {
    for (int64_t fi = lo; fi < hi; ++fi) {
      std::mt19937_64 rng(seed * 1000003 + uint64_t(fi));
      std::uniform_real_distribution<Scalar> uni(0.0, 1.0);
      SyntheticFrame& frame = seq.frames[size_t(fi)];

      const Scalar orbit = 2 * M_PI * Scalar(fi) / n_frames;
      const Scalar cam_radius = 1.05 * seq.extent + 0.15 * (2 * uni(rng) - 1);
      const Scalar cam_height = 0.50 * seq.extent + 0.12 * (2 * uni(rng) - 1);
      const Vec3 eye(cam_radius * std::cos(orbit), cam_height,
                     cam_radius * std::sin(orbit));
      frame.camera = Camera::look_at(eye, Vec3(0, 0.6, 0), Vec3(0, 1, 0),
                                     0.95 * width, 0.95 * height, width, height);
      frame.pose = walk_pose(avatar, int(fi), n_frames);

      const GaussianField posed = pose_gt_avatar(avatar, frame.pose);
      const GaussianField full = concat_fields(scene, posed);
      const RenderOutput out = render_oracle(full, frame.camera, seq.background, rcfg);
      frame.image = out.color;
      frame.depth = out.depth;

      const RenderOutput avatar_only =
          render_oracle(posed, frame.camera, Vec3::Zero(), rcfg);
      frame.mask = Image(width, height, 1);
      for (size_t p = 0; p < frame.mask.data.size(); ++p)
        frame.mask.data[p] = avatar_only.alpha.data[p] > 0.5 ? 1.0 : 0.0;

      // Monocular-estimate stand-in: per-frame affine distortion plus noise
      // proportional to the visible depth range.
      const Scalar a = 0.5 + 1.5 * uni(rng);
      const Scalar b = -1.0 + 2.0 * uni(rng);
      Scalar dmin = 1e30, dmax = -1e30;
      for (size_t p = 0; p < frame.depth.data.size(); ++p)
        if (out.alpha.data[p] > 0.5) {
          dmin = std::min(dmin, frame.depth.data[p]);
          dmax = std::max(dmax, frame.depth.data[p]);
        }
      const Scalar sigma = dmax > dmin ? 0.01 * (dmax - dmin) : 0.0;
      std::normal_distribution<Scalar> noise(0.0, 1.0);
      frame.depth_est = Image(width, height, 1);
      for (size_t p = 0; p < frame.depth.data.size(); ++p)
        frame.depth_est.data[p] = a * frame.depth.data[p] + b + sigma * noise(rng);
    }
  });

  for (int fi = 0; fi < n_frames; ++fi) {
    if (n_frames >= 12 && fi % 6 == 5)
      seq.test_split.push_back(fi);
    else
      seq.train_split.push_back(fi);
  }
  return seq;
}

Scalar psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  Scalar mse = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const Scalar d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= Scalar(a.data.size());
  if (mse <= 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

Image dilate_mask(const Image& mask, int radius) {
  Image out(mask.width, mask.height, 1);
  const int r2 = radius * radius;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      bool on = false;
      for (int dy = -radius; dy <= radius && !on; ++dy)
        for (int dx = -radius; dx <= radius && !on; ++dx) {
          if (dy * dy + dx * dx > r2) continue;
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= mask.height || xx < 0 || xx >= mask.width) continue;
          on = mask.at(yy, xx) > 0.5;
        }
      out.at(y, x) = on ? 1.0 : 0.0;
    }
  return out;
}

namespace {

Scalar psnr_over(const Image& a, const Image& b,
                 const std::function<bool(int, int)>& select) {
  Scalar mse = 0;
  int count = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (!select(y, x)) continue;
      for (int c = 0; c < a.channels; ++c) {
        const Scalar d = a.at(y, x, c) - b.at(y, x, c);
        mse += d * d;
      }
      count += a.channels;
    }
  if (count == 0) return -1;
  mse /= count;
  if (mse <= 0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

FrameScore score_frame(const Image& rendered, const SyntheticFrame& frame) {
  FrameScore s;
  s.psnr = psnr(rendered, frame.image);
  s.ssim = ssim(rendered, frame.image);
  int mask_pixels = 0;
  for (Scalar v : frame.mask.data) mask_pixels += v > 0.5;
  if (mask_pixels > 0) {
    const Image dilated = dilate_mask(frame.mask, 5);
    int x0 = frame.mask.width, x1 = -1, y0 = frame.mask.height, y1 = -1;
    for (int y = 0; y < dilated.height; ++y)
      for (int x = 0; x < dilated.width; ++x)
        if (dilated.at(y, x) > 0.5) {
          x0 = std::min(x0, x); x1 = std::max(x1, x);
          y0 = std::min(y0, y); y1 = std::max(y1, y);
        }
    s.mask_psnr = psnr_over(rendered, frame.image, [&](int y, int x) {
      return frame.mask.at(y, x) > 0.5;
    });
    s.crop_psnr = psnr_over(rendered, frame.image, [&](int y, int x) {
      return y >= y0 && y <= y1 && x >= x0 && x <= x1;
    });
    s.band_psnr = psnr_over(rendered, frame.image, [&](int y, int x) {
      return dilated.at(y, x) > 0.5 && frame.mask.at(y, x) <= 0.5;
    });
    s.has_mask = s.mask_psnr >= 0 && s.band_psnr >= 0;
  }
  return s;
}

}  // namespace

QualityReport evaluate(const GaussianField& scene, const AvatarModel& avatar,
                       const MappingStack& mapping,
                       const std::vector<SyntheticFrame>& frames,
                       const std::vector<int>& indices, const Vec3& background,
                       const RasterConfig& rcfg) {
  QualityReport report;
  report.frame_indices = indices;
  for (int idx : indices) {
    const SyntheticFrame& frame = frames[size_t(idx)];
    const GaussianField posed = pose_avatar(avatar, frame.pose);
    const GaussianField full = map_then_concat(mapping, scene, posed);
    const RenderOutput out = render(full, frame.camera, background, rcfg);
    report.per_frame.push_back(score_frame(out.color, frame));
  }
  FrameScore mean;
  int masked = 0;
  for (const FrameScore& s : report.per_frame) {
    mean.psnr += s.psnr;
    mean.ssim += s.ssim;
    if (s.has_mask) {
      mean.mask_psnr += s.mask_psnr;
      mean.crop_psnr += s.crop_psnr;
      mean.band_psnr += s.band_psnr;
      ++masked;
    }
  }
  const int n = int(report.per_frame.size());
  if (n > 0) {
    mean.psnr /= n;
    mean.ssim /= n;
  }
  if (masked > 0) {
    mean.mask_psnr /= masked;
    mean.crop_psnr /= masked;
    mean.band_psnr /= masked;
    mean.has_mask = true;
  }
  report.mean = mean;
  return report;
}

QualityReport self_check(const SyntheticSequence& seq) {
  QualityReport report;
  RasterConfig rcfg;
  for (size_t fi = 0; fi < seq.frames.size(); ++fi) {
    const SyntheticFrame& frame = seq.frames[fi];
    const GaussianField posed = pose_gt_avatar(seq.avatar, frame.pose);
    const GaussianField full = concat_fields(seq.scene, posed);
    const RenderOutput out = render_oracle(full, frame.camera, seq.background, rcfg);
    report.per_frame.push_back(score_frame(out.color, frame));
    report.frame_indices.push_back(int(fi));
  }
  FrameScore mean;
  for (const FrameScore& s : report.per_frame) {
    mean.psnr += s.psnr;
    mean.ssim += s.ssim;
  }
  if (!report.per_frame.empty()) {
    mean.psnr /= Scalar(report.per_frame.size());
    mean.ssim /= Scalar(report.per_frame.size());
  }
  report.mean = mean;
  return report;
}

namespace {

json camera_to_json(const Camera& cam) {
  json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(cam.rotation(r, c));
  j["rotation"] = std::move(rot);
  j["translation"] = {cam.translation.x(), cam.translation.y(), cam.translation.z()};
  return j;
}

Camera camera_from_json(const json& j) {
  Camera cam;
  cam.fx = j.at("fx").get<Scalar>();
  cam.fy = j.at("fy").get<Scalar>();
  cam.cx = j.at("cx").get<Scalar>();
  cam.cy = j.at("cy").get<Scalar>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto& rot = j.at("rotation");
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rot[r * 3 + c].get<Scalar>();
  const auto& t = j.at("translation");
  cam.translation = Vec3(t[0].get<Scalar>(), t[1].get<Scalar>(), t[2].get<Scalar>());
  return cam;
}

std::string frame_name(int i) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return buf;
}

}  // namespace

void save_sequence(const SyntheticSequence& seq, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "frames");
  fs::create_directories(fs::path(dir) / "depth");
  fs::create_directories(fs::path(dir) / "depth_est");
  fs::create_directories(fs::path(dir) / "mask");

  json cameras = json::array();
  std::vector<Pose> poses;
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    const SyntheticFrame& f = seq.frames[i];
    const std::string n = frame_name(int(i));
    save_png(f.image, (fs::path(dir) / "frames" / (n + ".png")).string());
    save_pfm(f.depth, (fs::path(dir) / "depth" / (n + ".pfm")).string());
    save_pfm(f.depth_est, (fs::path(dir) / "depth_est" / (n + ".pfm")).string());
    save_png(f.mask, (fs::path(dir) / "mask" / (n + ".png")).string());
    cameras.push_back(camera_to_json(f.camera));
    poses.push_back(f.pose);
  }
  {
    std::ofstream out((fs::path(dir) / "cameras.json").string());
    if (!out) throw IoError("cannot write cameras.json");
    out << cameras.dump(1, '\t') << "\n";
  }
  save_pose_sequence(poses, (fs::path(dir) / "poses.json").string());
  save_rig_json(seq.avatar.rig, seq.avatar.prior, (fs::path(dir) / "rig.json").string());
  save_field_json(seq.scene, (fs::path(dir) / "gt_scene.json").string());
  save_field_json(seq.avatar.canonical, (fs::path(dir) / "gt_avatar.json").string());

  // COLMAP-style initial points: subsampled noisy scene positions.
  std::mt19937_64 rng(seq.seed * 77 + 5);
  std::normal_distribution<Scalar> jitter(0.0, 0.02 * seq.extent / 4.0);
  const Eigen::Index keep = std::max<Eigen::Index>(1, seq.scene.size() * 2 / 3);
  GaussianField init = GaussianField::zeros(keep, seq.scene.sh_degree);
  for (Eigen::Index i = 0; i < keep; ++i) {
    const Eigen::Index src = i * seq.scene.size() / keep;
    init.positions.row(i) = seq.scene.positions.row(src) +
                            Vec3(jitter(rng), jitter(rng), jitter(rng)).transpose();
  }
  save_ply(init, (fs::path(dir) / "init_points.ply").string());

  json meta;
  meta["generator_version"] = 1;
  meta["seed"] = seq.seed;
  meta["frames"] = seq.frames.size();
  meta["width"] = seq.frames.empty() ? 0 : seq.frames[0].image.width;
  meta["height"] = seq.frames.empty() ? 0 : seq.frames[0].image.height;
  meta["background"] = {seq.background[0], seq.background[1], seq.background[2]};
  meta["extent"] = seq.extent;
  meta["sh_degree"] = seq.scene.sh_degree;
  meta["train_split"] = seq.train_split;
  meta["test_split"] = seq.test_split;
  std::ofstream out((fs::path(dir) / "meta.json").string());
  if (!out) throw IoError("cannot write meta.json");
  out << meta.dump(1, '\t') << "\n";
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  std::ifstream meta_in((fs::path(dir) / "meta.json").string());
  if (!meta_in) throw IoError("not a dataset directory (missing meta.json): " + dir);
  json meta;
  meta_in >> meta;
  ds.seed = meta.at("seed").get<uint64_t>();
  ds.extent = meta.at("extent").get<Scalar>();
  const auto& bg = meta.at("background");
  ds.background = Vec3(bg[0].get<Scalar>(), bg[1].get<Scalar>(), bg[2].get<Scalar>());
  ds.train_split = meta.at("train_split").get<std::vector<int>>();
  ds.test_split = meta.at("test_split").get<std::vector<int>>();
  const int n = meta.at("frames").get<int>();

  json cameras;
  {
    std::ifstream in((fs::path(dir) / "cameras.json").string());
    if (!in) throw IoError("missing cameras.json in " + dir);
    in >> cameras;
  }
  const auto poses = load_pose_sequence((fs::path(dir) / "poses.json").string());
  if (int(poses.size()) != n || int(cameras.size()) != n)
    throw IoError("dataset: camera/pose counts do not match meta");

  ds.frames.resize(size_t(n));
  for (int i = 0; i < n; ++i) {
    SyntheticFrame& f = ds.frames[size_t(i)];
    const std::string name = frame_name(i);
    f.image = load_png((fs::path(dir) / "frames" / (name + ".png")).string());
    f.depth = load_pfm((fs::path(dir) / "depth" / (name + ".pfm")).string());
    f.depth_est = load_pfm((fs::path(dir) / "depth_est" / (name + ".pfm")).string());
    f.mask = load_png((fs::path(dir) / "mask" / (name + ".png")).string());
    f.camera = camera_from_json(cameras[i]);
    f.pose = poses[size_t(i)];
  }
  load_rig_json((fs::path(dir) / "rig.json").string(), ds.rig, ds.prior);
  ds.init_points = load_ply((fs::path(dir) / "init_points.ply").string());
  return ds;
}

}  // namespace stm
