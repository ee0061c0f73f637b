#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "stm/image_io.hpp"
#include "stm/losses.hpp"
#include "stm/raster.hpp"
#include "stm/synth.hpp"
#include "test_util.hpp"

using namespace stm;

TEST_CASE("make_scene is a pure function of its seed") {
  const GaussianField a = make_scene(9, 80, 4.0);
  const GaussianField b = make_scene(9, 80, 4.0);
  CHECK((a.positions - b.positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.sh - b.sh).cwiseAbs().maxCoeff() == 0.0);
  const GaussianField c = make_scene(10, 80, 4.0);
  CHECK((a.positions - c.positions).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("make_scene single primitive sits at the extent center") {
  const GaussianField f = make_scene(3, 1, 4.0);
  CHECK(f.size() == 1);
  CHECK(f.positions.row(0).norm() == 0.0);
}

TEST_CASE("ground slab primitives are flattened") {
  const Scalar extent = 4.0;
  const GaussianField f = make_scene(11, 200, extent);
  const Eigen::Index n_ground = 120;  // 60% by construction
  for (Eigen::Index i = 0; i < n_ground; ++i) {
    const Scalar min_scale = f.log_scales.row(i).array().exp().minCoeff();
    CHECK(min_scale < 0.05 * extent);
  }
}

TEST_CASE("gt avatar prior weights form a simplex and legs stay local") {
  const GroundTruthAvatar av = make_gt_avatar(5);
  CHECK(av.prior.vertices.rows() >= 300);
  for (Eigen::Index i = 0; i < av.prior.weights.rows(); ++i) {
    CHECK(std::abs(av.prior.weights.row(i).sum() - 1.0) < 1e-9);
    CHECK(av.prior.weights.row(i).minCoeff() >= 0.0);
  }

  // 90 degree left-hip rotation: displacement beyond 1e-6 implies left-leg
  // weight, and far vertices must not move.
  Pose pose = Pose::identity(av.rig.joint_count());
  pose.joint_rotations.row(2) = Vec3(M_PI / 2, 0, 0).transpose();
  const GaussianField rest = pose_gt_avatar(av, Pose::identity(av.rig.joint_count()));
  const GaussianField posed = pose_gt_avatar(av, pose);
  for (Eigen::Index i = 0; i < rest.size(); ++i) {
    const Scalar moved = (posed.positions.row(i) - rest.positions.row(i)).norm();
    const Scalar leg_weight = av.prior.weights(i, 2) + av.prior.weights(i, 3);
    if (moved > 1e-6) CHECK(leg_weight > 1e-6);
    if (leg_weight < 1e-7) CHECK(moved < 1e-6);
  }
}

TEST_CASE("identity-pose avatar renders bilaterally symmetric") {
  const GroundTruthAvatar av = make_gt_avatar(2);
  const GaussianField posed = pose_gt_avatar(av, Pose::identity(av.rig.joint_count()));
  // Camera on the sagittal plane (x = 0), even width, centered principal point.
  const Camera cam = Camera::look_at(Vec3(0, 1.0, -3.0), Vec3(0, 1.0, 0), Vec3(0, 1, 0),
                                     60, 60, 64, 64);
  const RenderOutput out = render_oracle(posed, cam, Vec3(0.2, 0.2, 0.2));
  // Precondition for exactness: no ray saturates to the blending cutoff, so
  // tied mirror pairs are always blended whole.
  Scalar max_alpha = 0;
  for (Scalar a : out.alpha.data) max_alpha = std::max(max_alpha, a);
  CHECK(max_alpha < 1.0 - 1e-3);
  Scalar max_diff = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      for (int c = 0; c < 3; ++c)
        max_diff = std::max(max_diff, std::abs(out.color.at(y, x, c) -
                                               out.color.at(y, 63 - x, c)));
  CHECK(max_diff < 1e-6);
}

TEST_CASE("psnr closed forms") {
  Image a(8, 8, 3, 0.0), b(8, 8, 3, 0.0);
  CHECK(psnr(a, b) == 100.0);
  for (auto& v : b.data) v = 0.5;
  CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / 0.25)).epsilon(1e-12));
  // MSE 0.01 -> 20 dB.
  Image c(8, 8, 1, 0.0), d(8, 8, 1, 0.1);
  CHECK(psnr(c, d) == doctest::Approx(20.0).epsilon(1e-9));
}

TEST_CASE("sequence frames are self-consistent") {
  const GaussianField scene = make_scene(21, 60, 4.0);
  const GroundTruthAvatar av = make_gt_avatar(22);
  const SyntheticSequence seq = make_sequence(scene, av, 4, 21, 48, 48);
  REQUIRE(seq.frames.size() == 4);

  // Masks: mask-on pixels have avatar-only alpha > 0.5 (definition check via
  // a re-render).
  const SyntheticFrame& f = seq.frames[1];
  const GaussianField posed = pose_gt_avatar(av, f.pose);
  const RenderOutput avatar_only = render_oracle(posed, f.camera, Vec3::Zero());
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x)
      if (f.mask.at(y, x) > 0.5) CHECK(avatar_only.alpha.at(y, x) > 0.5);

  // Ground-truth consistency: stored generators re-render to stored frames.
  const QualityReport check = self_check(seq);
  for (const FrameScore& s : check.per_frame) CHECK(s.psnr == 100.0);

  // Determinism under the seed.
  const SyntheticSequence seq2 = make_sequence(scene, av, 4, 21, 48, 48);
  for (size_t i = 0; i < seq.frames.size(); ++i) {
    CHECK(seq.frames[i].image.data == seq2.frames[i].image.data);
    CHECK(seq.frames[i].depth_est.data == seq2.frames[i].depth_est.data);
  }
}

TEST_CASE("sequence round-trips through the dataset directory") {
  namespace fs = std::filesystem;
  const GaussianField scene = make_scene(31, 50, 4.0);
  const GroundTruthAvatar av = make_gt_avatar(32);
  const SyntheticSequence seq = make_sequence(scene, av, 3, 31, 32, 32);
  const std::string dir = (fs::temp_directory_path() / "stm_test_seq").string();
  fs::remove_all(dir);
  save_sequence(seq, dir);
  const Dataset ds = load_dataset(dir);
  REQUIRE(ds.frames.size() == 3);
  CHECK(ds.rig.joint_count() == av.rig.joint_count());
  CHECK(ds.extent == seq.extent);

  // Cameras and poses survive JSON with double round-trip exactness:
  // re-rendering with the loaded cameras/poses reproduces the in-memory
  // frames to 1e-6.
  for (int i = 0; i < 3; ++i) {
    const GaussianField posed = pose_gt_avatar(av, ds.frames[size_t(i)].pose);
    const GaussianField full = concat_fields(scene, posed);
    const RenderOutput out =
        render_oracle(full, ds.frames[size_t(i)].camera, seq.background);
    Scalar max_diff = 0;
    for (size_t p = 0; p < out.color.data.size(); ++p)
      max_diff = std::max(max_diff,
                          std::abs(out.color.data[p] - seq.frames[size_t(i)].image.data[p]));
    CHECK(max_diff < 1e-6);
    // PNG-loaded frames agree within 8-bit quantization.
    Scalar max_q = 0;
    for (size_t p = 0; p < out.color.data.size(); ++p)
      max_q = std::max(max_q, std::abs(std::clamp(out.color.data[p], 0.0, 1.0) -
                                       ds.frames[size_t(i)].image.data[p]));
    CHECK(max_q <= 0.5 / 255.0 + 1e-9);
  }
  fs::remove_all(dir);
}

TEST_CASE("evaluating the generating truth against itself maxes the metrics") {
  const GaussianField scene = make_scene(41, 40, 4.0);
  const GroundTruthAvatar av = make_gt_avatar(42);
  const SyntheticSequence seq = make_sequence(scene, av, 2, 41, 32, 32);
  const QualityReport check = self_check(seq);
  CHECK(check.mean.psnr == 100.0);
  CHECK(check.mean.ssim == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("report mean equals the arithmetic mean of rows") {
  QualityReport r;
  r.per_frame = {FrameScore{30, 0.9, 25, 26, 20, true},
                 FrameScore{34, 0.8, 27, 28, 22, true}};
  Scalar mean_psnr = 0;
  for (const auto& s : r.per_frame) mean_psnr += s.psnr;
  CHECK(mean_psnr / 2 == doctest::Approx(32.0));
}

TEST_CASE("mask and crop PSNR conventions agree under uniform noise") {
  // Uniform corruption makes the expected MSE identical over any pixel
  // subset, so the per-pixel-mask metric and the dilated-bbox metric agree.
  const GaussianField scene = make_scene(51, 60, 4.0);
  const GroundTruthAvatar av = make_gt_avatar(52);
  SyntheticSequence seq = make_sequence(scene, av, 2, 51, 64, 64);

  for (auto& frame : seq.frames) {
    // Fixed-magnitude corruption signed toward the interior: every pixel
    // contributes exactly delta^2 to the MSE of any subset.
    const Scalar delta = 0.04;
    Image corrupted = frame.image;
    for (auto& v : corrupted.data) v += v < 0.5 ? delta : -delta;
    // Score the corrupted render against the stored frame via evaluate()'s
    // internals: reuse psnr over subsets through the public report path.
    // Build a one-frame report by hand.
    Image mask = frame.mask;
    int on = 0;
    for (Scalar v : mask.data) on += v > 0.5;
    REQUIRE(on > 0);
    // mask metric
    Scalar mse_mask = 0;
    int n_mask = 0;
    Scalar mse_crop = 0;
    int n_crop = 0;
    const Image dilated = dilate_mask(mask, 5);
    int x0 = 64, x1 = -1, y0 = 64, y1 = -1;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (dilated.at(y, x) > 0.5) {
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
        }
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        for (int c = 0; c < 3; ++c) {
          const Scalar d = corrupted.at(y, x, c) - frame.image.at(y, x, c);
          if (mask.at(y, x) > 0.5) {
            mse_mask += d * d;
            ++n_mask;
          }
          if (y >= y0 && y <= y1 && x >= x0 && x <= x1) {
            mse_crop += d * d;
            ++n_crop;
          }
        }
      }
    const Scalar psnr_mask = 10 * std::log10(1.0 / (mse_mask / n_mask));
    const Scalar psnr_crop = 10 * std::log10(1.0 / (mse_crop / n_crop));
    CHECK(std::abs(psnr_mask - psnr_crop) < 0.1);
  }
}

TEST_CASE("walk poses create ground contact frames") {
  const GroundTruthAvatar av = make_gt_avatar(61);
  int contact_frames = 0;
  for (int f = 0; f < 30; ++f) {
    const GaussianField posed = pose_gt_avatar(av, walk_pose(av, f, 30));
    const Scalar min_y = posed.positions.col(1).minCoeff();
    if (min_y < 0.06) ++contact_frames;  // inside the slab's vertical support
  }
  CHECK(contact_frames >= 5);
}
