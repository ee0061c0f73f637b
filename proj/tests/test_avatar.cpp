#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "stm/avatar.hpp"
#include "test_util.hpp"

using namespace stm;

namespace {

SkeletonRig two_link_chain() {
  SkeletonRig rig;
  rig.joints.resize(2);
  rig.joints[0].parent = -1;
  rig.joints[0].rest_offset = Vec3(0, 0, 0.1);  // root off origin, nonzero bone
  rig.joints[1].parent = 0;
  rig.joints[1].rest_offset = Vec3(1, 0, 0);
  rig.joints[0].rest_offset = Vec3::Zero();
  rig.joints[0].parent = -1;
  return rig;
}

// Small rig + triplane + heads for gradient checks.
AvatarModel tiny_avatar(uint64_t seed, int n_points, bool randomize_heads) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> uni(-1, 1);
  AvatarModel m;
  m.rig.joints.resize(3);
  m.rig.joints[0].parent = -1;
  m.rig.joints[0].rest_offset = Vec3(0, 0.5, 0);
  m.rig.joints[1].parent = 0;
  m.rig.joints[1].rest_offset = Vec3(0, 0.4, 0);
  m.rig.joints[2].parent = 0;
  m.rig.joints[2].rest_offset = Vec3(0.1, -0.4, 0);
  m.sh_degree = 1;
  m.triplane = Triplane::create(6, 4, Vec3(-1, -1, -1), Vec3(1.5, 1.6, 1.7), 0.3, rng);
  m.heads = DeformationHeads::create(m.triplane.feature_dim(), 4, 3, 16, rng);
  if (randomize_heads) {
    for (Mlp* mlp : {&m.heads.offset, &m.heads.appearance, &m.heads.transform}) {
      for (Eigen::Index i = 0; i < mlp->w2.rows(); ++i)
        for (Eigen::Index j = 0; j < mlp->w2.cols(); ++j) mlp->w2(i, j) = 0.05 * uni(rng);
      for (Eigen::Index i = 0; i < mlp->b2.size(); ++i) mlp->b2(i) = 0.05 * uni(rng);
    }
  }
  m.canonical_positions.resize(n_points, 3);
  for (int i = 0; i < n_points; ++i)
    m.canonical_positions.row(i) =
        Vec3(0.8 * uni(rng), 0.8 * uni(rng), 0.8 * uni(rng)).transpose();
  m.prior.vertices.resize(8, 3);
  m.prior.weights.resize(8, 3);
  for (int i = 0; i < 8; ++i) {
    m.prior.vertices.row(i) = Vec3(uni(rng), uni(rng), uni(rng)).transpose();
    Vec3 w(std::abs(uni(rng)) + 0.1, std::abs(uni(rng)) + 0.1, std::abs(uni(rng)) + 0.1);
    m.prior.weights.row(i) = (w / w.sum()).transpose();
  }
  return m;
}

}  // namespace

TEST_CASE("joint_transforms identity pose") {
  SkeletonRig rig = two_link_chain();
  const auto tr = joint_transforms(rig, Pose::identity(2));
  for (const auto& t : tr) {
    CHECK((t.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.translation.norm() < 1e-12);
  }
}

TEST_CASE("root-only rotation moves every joint rigidly") {
  SkeletonRig rig;
  rig.joints.resize(3);
  rig.joints[0] = {-1, Vec3(0.2, 0.1, 0)};
  rig.joints[1] = {0, Vec3(0, 1, 0)};
  rig.joints[2] = {1, Vec3(0, 0.5, 0)};
  Pose pose = Pose::identity(3);
  pose.joint_rotations.row(0) = Vec3(0, 0, M_PI / 3).transpose();
  const auto tr = joint_transforms(rig, pose);
  const Mat3 rot = quaternion_to_matrix(axis_angle_to_quaternion(Vec3(0, 0, M_PI / 3)));
  const Vec3 pivot(0.2, 0.1, 0);
  for (const auto& t : tr) {
    CHECK((t.rotation - rot).cwiseAbs().maxCoeff() < 1e-12);
    const Vec3 expected = pivot - rot * pivot;
    CHECK((t.translation - expected).norm() < 1e-12);
  }
}

TEST_CASE("two-link elbow bends analytically") {
  SkeletonRig rig = two_link_chain();
  Pose pose = Pose::identity(2);
  pose.joint_rotations.row(1) = Vec3(0, 0, M_PI / 2).transpose();
  const auto tr = joint_transforms(rig, pose);
  // A point at the rest child tip (2,0,0), rigidly attached to the elbow,
  // rotates about the elbow at (1,0,0) up to (1,1,0).
  const Vec3 tip(2, 0, 0);
  const Vec3 moved = tr[1].rotation * tip + tr[1].translation;
  CHECK((moved - Vec3(1, 1, 0)).norm() < 1e-9);
  // The root stays put.
  const Vec3 fixed = tr[0].rotation * tip + tr[0].translation;
  CHECK((fixed - tip).norm() < 1e-12);
}

TEST_CASE("forward_skinning basics") {
  SkeletonRig rig = two_link_chain();
  Pose pose = Pose::identity(2);
  pose.joint_rotations.row(1) = Vec3(0, 0, M_PI / 2).transpose();
  const auto tr = joint_transforms(rig, pose);

  MatX3 points(1, 3);
  points.row(0) = Vec3(2, 0, 0).transpose();

  MatX w_identity(1, 2);
  w_identity << 1, 0;
  CHECK((forward_skinning(points, w_identity, tr).row(0).transpose() - Vec3(2, 0, 0))
            .norm() < 1e-12);

  MatX w_child(1, 2);
  w_child << 0, 1;
  CHECK((forward_skinning(points, w_child, tr).row(0).transpose() - Vec3(1, 1, 0))
            .norm() < 1e-12);

  MatX w_mixed(1, 2);
  w_mixed << 0.5, 0.5;
  const Vec3 mid = forward_skinning(points, w_mixed, tr).row(0).transpose();
  CHECK((mid - Vec3(1.5, 0.5, 0)).norm() < 1e-12);

  MatX bad(1, 2);
  bad << 0.7, 0.7;
  CHECK_THROWS_AS(forward_skinning(points, bad, tr), InvalidWeightsError);
}

TEST_CASE("identity pose is an exact fixed point") {
  SkeletonRig rig = two_link_chain();
  const auto tr = joint_transforms(rig, Pose::identity(2));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<Scalar> uni(-2, 2);
  MatX3 points(20, 3);
  MatX weights(20, 2);
  for (int i = 0; i < 20; ++i) {
    points.row(i) = Vec3(uni(rng), uni(rng), uni(rng)).transpose();
    const Scalar a = 0.5 + 0.4 * std::sin(double(i));
    weights.row(i) << a, 1 - a;
  }
  const MatX3 posed = forward_skinning(points, weights, tr);
  CHECK((posed - points).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("skinning is linear in the weights") {
  SkeletonRig rig = two_link_chain();
  Pose pose = Pose::identity(2);
  pose.joint_rotations.row(0) = Vec3(0.3, -0.2, 0.5).transpose();
  pose.joint_rotations.row(1) = Vec3(0, 0.9, 0).transpose();
  pose.root_translation = Vec3(0.1, 0.2, -0.3);
  const auto tr = joint_transforms(rig, pose);
  MatX3 points(5, 3);
  points << 0.1, 0.2, 0.3, 1, 0, 0, 2, 0.1, -0.2, 0.5, 0.5, 0.5, -0.3, 0.4, 1.0;
  MatX w1(5, 2), w2(5, 2);
  w1.col(0).setConstant(0.8);
  w1.col(1).setConstant(0.2);
  w2.col(0).setConstant(0.3);
  w2.col(1).setConstant(0.7);
  const Scalar a = 0.37;
  const MatX3 lhs = forward_skinning(points, a * w1 + (1 - a) * w2, tr);
  const MatX3 rhs = a * forward_skinning(points, w1, tr) +
                    (1 - a) * forward_skinning(points, w2, tr);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("knn prior matches brute force and sums to one") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<Scalar> uni(-1, 1);
  const int m = 40, k = 6, joints = 4;
  MatX3 verts(m, 3);
  MatX weights(m, joints);
  for (int i = 0; i < m; ++i) {
    verts.row(i) = Vec3(uni(rng), uni(rng), uni(rng)).transpose();
    VecX w(joints);
    for (int j = 0; j < joints; ++j) w(j) = std::abs(uni(rng)) + 0.01;
    weights.row(i) = (w / w.sum()).transpose();
  }
  MatX3 queries(15, 3);
  for (int i = 0; i < 15; ++i)
    queries.row(i) = Vec3(uni(rng), uni(rng), uni(rng)).transpose();

  const MatX prior = knn_lbs_prior(queries, verts, weights, k);
  for (Eigen::Index i = 0; i < prior.rows(); ++i)
    CHECK(std::abs(prior.row(i).sum() - 1.0) < 1e-6);

  // Full-sort brute-force oracle.
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    std::vector<std::pair<Scalar, int>> dist;
    for (int j = 0; j < m; ++j)
      dist.push_back({(verts.row(j) - queries.row(i)).norm(), j});
    std::sort(dist.begin(), dist.end());
    VecX acc = VecX::Zero(joints);
    Scalar total = 0;
    for (int j = 0; j < k; ++j) {
      const Scalar w = 1.0 / (dist[size_t(j)].first + 1e-8);
      acc += w * weights.row(dist[size_t(j)].second).transpose();
      total += w;
    }
    CHECK((prior.row(i).transpose() - acc / total).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("knn prior degenerate placements") {
  MatX3 verts(3, 3);
  verts << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  MatX weights(3, 2);
  weights << 1, 0, 0, 1, 0.5, 0.5;

  // Query on a vertex: epsilon-dominated, returns that vertex's weights.
  MatX3 q1(1, 3);
  q1.row(0) = verts.row(0);
  const MatX w1 = knn_lbs_prior(q1, verts, weights, 2);
  CHECK(std::abs(w1(0, 0) - 1.0) < 1e-6);

  // Query equidistant from two vertices with k=2: arithmetic mean.
  MatX3 q2(1, 3);
  q2.row(0) = Vec3(0.5, 0, 0).transpose();
  const MatX w2 = knn_lbs_prior(q2, verts, weights, 2);
  CHECK(std::abs(w2(0, 0) - 0.5) < 1e-9);
  CHECK(std::abs(w2(0, 1) - 0.5) < 1e-9);

  CHECK_THROWS_AS(knn_lbs_prior(q2, verts, weights, 5), ConfigError);
}

TEST_CASE("triplane interpolation") {
  std::mt19937_64 rng(1);
  Triplane tp = Triplane::create(5, 2, Vec3(0, 0, 0), Vec3(1, 1, 1), 0.0, rng);
  SUBCASE("constant planes") {
    for (int p = 0; p < 3; ++p) tp.planes[p].setConstant(0.7);
    const VecX f = query_triplane(tp, Vec3(0.31, 0.77, 0.13));
    CHECK(f.size() == 6);
    for (Eigen::Index i = 0; i < f.size(); ++i) CHECK(f[i] == doctest::Approx(0.7));
  }
  SUBCASE("grid node hits the node value") {
    tp.planes[0](2 * 5 + 1, 0) = 3.5;  // node (ix=1, iy=2) on the XY plane
    const VecX f = query_triplane(tp, Vec3(0.25, 0.5, 0.9));
    CHECK(f[0] == doctest::Approx(3.5));
  }
  SUBCASE("cell center averages corners") {
    for (int p = 0; p < 3; ++p) tp.planes[p].setZero();
    tp.planes[0](0 * 5 + 0, 1) = 4.0;  // one corner of the first cell
    const Scalar cell = 1.0 / 4.0;
    const VecX f = query_triplane(tp, Vec3(cell / 2, cell / 2, 0.0));
    CHECK(f[1] == doctest::Approx(1.0));
  }
  SUBCASE("positions clamp to the box") {
    for (int p = 0; p < 3; ++p) tp.planes[p].setRandom();
    const VecX inside = query_triplane(tp, Vec3(1.0, 1.0, 1.0));
    const VecX outside = query_triplane(tp, Vec3(4.0, 9.0, 2.0));
    CHECK((inside - outside).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("triplane gradients match finite differences") {
  std::mt19937_64 rng(8);
  Triplane tp = Triplane::create(4, 3, Vec3(-1, -1, -1), Vec3(1, 1, 1), 0.5, rng);
  const Vec3 pos(0.13, -0.42, 0.55);
  std::uniform_real_distribution<Scalar> uni(-1, 1);
  VecX upstream(tp.feature_dim());
  for (Eigen::Index i = 0; i < upstream.size(); ++i) upstream(i) = uni(rng);

  TriplaneGrad grad = TriplaneGrad::zeros(tp);
  Vec3 d_pos;
  query_triplane_backward(tp, pos, upstream, grad, d_pos);

  auto loss = [&](const Triplane& t, const Vec3& p) {
    return upstream.dot(query_triplane(t, p));
  };
  const Scalar h = 1e-5;
  for (int p = 0; p < 3; ++p)
    for (Eigen::Index i = 0; i < tp.planes[p].rows(); ++i)
      for (Eigen::Index j = 0; j < tp.planes[p].cols(); ++j) {
        const Scalar saved = tp.planes[p](i, j);
        tp.planes[p](i, j) = saved + h;
        const Scalar hi = loss(tp, pos);
        tp.planes[p](i, j) = saved - h;
        const Scalar lo = loss(tp, pos);
        tp.planes[p](i, j) = saved;
        CHECK(test::grad_close(grad.planes[p](i, j), (hi - lo) / (2 * h)));
      }
  for (int c = 0; c < 3; ++c) {
    Vec3 moved = pos;
    moved[c] = pos[c] + h;
    const Scalar hi = loss(tp, moved);
    moved[c] = pos[c] - h;
    const Scalar lo = loss(tp, moved);
    CHECK(test::grad_close(d_pos[c], (hi - lo) / (2 * h)));
  }
}

TEST_CASE("run_heads zero parameters give zero outputs and uniform weights") {
  std::mt19937_64 rng(4);
  DeformationHeads heads;
  heads.sh_basis = 4;
  heads.joint_count = 3;
  heads.offset = Mlp::zeros(6, 8, 3);
  heads.appearance = Mlp::zeros(6, 8, 13);
  heads.transform = Mlp::zeros(6, 8, 10);
  MatX features(2, 6);
  features.setRandom();
  const HeadOutputs out = run_heads(heads, features);
  CHECK(out.delta_position.cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.sh.cwiseAbs().maxCoeff() == 0.0);
  CHECK(out.rotation.cwiseAbs().maxCoeff() == 0.0);
  const MatX w = softmax_rows(out.lbs_logits);
  CHECK((w.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("run_heads is deterministic and validates dimensions") {
  std::mt19937_64 rng(5);
  DeformationHeads heads = DeformationHeads::create(6, 4, 3, 8, rng);
  MatX features(3, 6);
  features.setRandom();
  const HeadOutputs a = run_heads(heads, features);
  const HeadOutputs b = run_heads(heads, features);
  CHECK((a.lbs_logits - b.lbs_logits).cwiseAbs().maxCoeff() == 0.0);
  MatX bad(3, 5);
  bad.setRandom();
  CHECK_THROWS_AS(run_heads(heads, bad), ConfigError);
}

TEST_CASE("mlp gradients match finite differences") {
  std::mt19937_64 rng(6);
  Mlp mlp = Mlp::create(4, 5, 3, rng);
  std::uniform_real_distribution<Scalar> uni(-0.5, 0.5);
  for (Eigen::Index i = 0; i < mlp.w2.rows(); ++i)
    for (Eigen::Index j = 0; j < mlp.w2.cols(); ++j) mlp.w2(i, j) = uni(rng);
  MatX x(3, 4);
  x.setRandom();
  MatX upstream(3, 3);
  upstream.setRandom();

  Mlp grad = Mlp::zeros(4, 5, 3);
  const MatX d_x = mlp.backward(x, upstream, grad);
  auto loss = [&](const Mlp& m, const MatX& input) {
    return (m.forward(input).array() * upstream.array()).sum();
  };
  const Scalar h = 1e-5;
  auto fd_check = [&](Scalar& slot, Scalar analytic) {
    const Scalar saved = slot;
    slot = saved + h;
    const Scalar hi = loss(mlp, x);
    slot = saved - h;
    const Scalar lo = loss(mlp, x);
    slot = saved;
    CHECK(test::grad_close(analytic, (hi - lo) / (2 * h)));
  };
  for (Eigen::Index i = 0; i < mlp.w1.rows(); ++i)
    for (Eigen::Index j = 0; j < mlp.w1.cols(); ++j) fd_check(mlp.w1(i, j), grad.w1(i, j));
  for (Eigen::Index i = 0; i < mlp.b1.size(); ++i) fd_check(mlp.b1(i), grad.b1(i));
  for (Eigen::Index i = 0; i < mlp.w2.rows(); ++i)
    for (Eigen::Index j = 0; j < mlp.w2.cols(); ++j) fd_check(mlp.w2(i, j), grad.w2(i, j));
  for (Eigen::Index i = 0; i < mlp.b2.size(); ++i) fd_check(mlp.b2(i), grad.b2(i));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) fd_check(x(i, j), d_x(i, j));
}

TEST_CASE("pose_avatar identity with zero heads reproduces canonical points") {
  AvatarModel m = tiny_avatar(12, 10, false);
  for (int p = 0; p < 3; ++p) m.triplane.planes[p].setZero();
  m.heads.offset = Mlp::zeros(m.triplane.feature_dim(), 16, 3);
  m.heads.appearance = Mlp::zeros(m.triplane.feature_dim(), 16, 13);
  m.heads.transform = Mlp::zeros(m.triplane.feature_dim(), 16, 10);
  m.validate();
  const GaussianField f = pose_avatar(m, Pose::identity(3));
  CHECK((f.positions - m.canonical_positions).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((f.rotations.col(0).array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(f.rotations.rightCols(3).cwiseAbs().maxCoeff() < 1e-12);
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    CHECK((f.log_scales.row(i).transpose() - m.base_log_scale).norm() < 1e-12);
    CHECK(f.opacity_logits(i) == m.base_opacity_logit);
  }
  CHECK(f.sh.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rigid root rotation preserves pairwise distances") {
  AvatarModel m = tiny_avatar(13, 12, true);
  Pose pose = Pose::identity(3);
  pose.joint_rotations.row(0) = Vec3(0.2, 0.7, -0.4).transpose();
  pose.root_translation = Vec3(0.5, -0.1, 0.3);
  const GaussianField rest = pose_avatar(m, Pose::identity(3));
  const GaussianField posed = pose_avatar(m, pose);
  for (Eigen::Index i = 0; i < rest.size(); ++i)
    for (Eigen::Index j = i + 1; j < rest.size(); ++j) {
      const Scalar before = (rest.positions.row(i) - rest.positions.row(j)).norm();
      const Scalar after = (posed.positions.row(i) - posed.positions.row(j)).norm();
      CHECK(std::abs(before - after) < 1e-9);
    }
}

TEST_CASE("lbs weight rows form a probability simplex") {
  AvatarModel m = tiny_avatar(14, 9, true);
  const PosedAvatar posed = pose_avatar_fwd(m, Pose::identity(3));
  for (Eigen::Index i = 0; i < posed.lbs_weights.rows(); ++i) {
    CHECK(posed.lbs_weights.row(i).minCoeff() >= 0.0);
    CHECK(std::abs(posed.lbs_weights.row(i).sum() - 1.0) < 1e-6);
  }
}

TEST_CASE("pose_avatar gradients match finite differences end to end") {
  AvatarModel m = tiny_avatar(15, 5, true);
  Pose pose = Pose::identity(3);
  pose.joint_rotations.row(1) = Vec3(0.4, 0.1, -0.3).transpose();
  pose.joint_rotations.row(2) = Vec3(-0.2, 0.3, 0.1).transpose();
  pose.root_translation = Vec3(0.05, 0.02, -0.04);

  // Random fixed projections of every field attribute plus the LBS weights.
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<Scalar> uni(-1, 1);
  const PosedAvatar base = pose_avatar_fwd(m, pose);
  RasterGradients up = RasterGradients::zeros(base.field);
  for (Eigen::Index i = 0; i < base.field.size(); ++i) {
    for (int j = 0; j < 3; ++j) up.d_positions(i, j) = uni(rng);
    for (int j = 0; j < 4; ++j) up.d_rotations(i, j) = uni(rng);
    for (int j = 0; j < 3; ++j) up.d_log_scales(i, j) = uni(rng);
    up.d_opacity_logits(i) = uni(rng);
    for (int j = 0; j < up.d_sh.cols(); ++j) up.d_sh(i, j) = uni(rng);
  }
  MatX up_w(base.lbs_weights.rows(), base.lbs_weights.cols());
  for (Eigen::Index i = 0; i < up_w.size(); ++i) up_w(i) = uni(rng);

  auto loss = [&](const AvatarModel& model) {
    const PosedAvatar p = pose_avatar_fwd(model, pose);
    Scalar s = (p.field.positions.array() * up.d_positions.array()).sum();
    s += (p.field.rotations.array() * up.d_rotations.array()).sum();
    s += (p.field.log_scales.array() * up.d_log_scales.array()).sum();
    s += (p.field.opacity_logits.array() * up.d_opacity_logits.array()).sum();
    s += (p.field.sh.array() * up.d_sh.array()).sum();
    s += (p.lbs_weights.array() * up_w.array()).sum();
    return s;
  };
  const AvatarGrads grads = pose_avatar_backward(m, base, up, up_w);

  const Scalar h = 1e-5;
  int failures = 0;
  auto fd_check = [&](Scalar& slot, Scalar analytic) {
    const Scalar saved = slot;
    slot = saved + h;
    const Scalar hi = loss(m);
    slot = saved - h;
    const Scalar lo = loss(m);
    slot = saved;
    if (!test::grad_close(analytic, (hi - lo) / (2 * h))) ++failures;
  };
  for (Eigen::Index i = 0; i < m.canonical_positions.rows(); ++i)
    for (int j = 0; j < 3; ++j)
      fd_check(m.canonical_positions(i, j), grads.d_canonical_positions(i, j));
  for (int p = 0; p < 3; ++p)
    for (Eigen::Index i = 0; i < m.triplane.planes[p].size(); i += 7)
      fd_check(m.triplane.planes[p].data()[i], grads.triplane.planes[p].data()[i]);
  auto sweep_mlp = [&](Mlp& mlp, const Mlp& g) {
    for (Eigen::Index i = 0; i < mlp.w1.size(); i += 3)
      fd_check(mlp.w1.data()[i], g.w1.data()[i]);
    for (Eigen::Index i = 0; i < mlp.b1.size(); ++i) fd_check(mlp.b1(i), g.b1(i));
    for (Eigen::Index i = 0; i < mlp.w2.size(); i += 3)
      fd_check(mlp.w2.data()[i], g.w2.data()[i]);
    for (Eigen::Index i = 0; i < mlp.b2.size(); ++i) fd_check(mlp.b2(i), g.b2(i));
  };
  sweep_mlp(m.heads.offset, grads.heads.offset);
  sweep_mlp(m.heads.appearance, grads.heads.appearance);
  sweep_mlp(m.heads.transform, grads.heads.transform);
  CHECK(failures == 0);
}

TEST_CASE("rig json round-trip") {
  AvatarModel m = tiny_avatar(20, 4, false);
  const std::string path =
      (std::filesystem::temp_directory_path() / "stm_rig.json").string();
  save_rig_json(m.rig, m.prior, path);
  SkeletonRig rig;
  PriorMesh mesh;
  load_rig_json(path, rig, mesh);
  CHECK(rig.joint_count() == m.rig.joint_count());
  CHECK((mesh.vertices - m.prior.vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mesh.weights - m.prior.weights).cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < rig.joint_count(); ++k) {
    CHECK(rig.joints[size_t(k)].parent == m.rig.joints[size_t(k)].parent);
    CHECK((rig.joints[size_t(k)].rest_offset - m.rig.joints[size_t(k)].rest_offset)
              .norm() == 0.0);
  }
  std::remove(path.c_str());
}

TEST_CASE("pose sequence json round-trip") {
  std::vector<Pose> poses;
  for (int f = 0; f < 3; ++f) {
    Pose p = Pose::identity(4);
    p.joint_rotations.setRandom();
    p.root_translation = Vec3(f, -f, 0.5 * f);
    poses.push_back(p);
  }
  const std::string path =
      (std::filesystem::temp_directory_path() / "stm_poses.json").string();
  save_pose_sequence(poses, path);
  const auto back = load_pose_sequence(path);
  REQUIRE(back.size() == poses.size());
  for (size_t f = 0; f < poses.size(); ++f) {
    CHECK((back[f].joint_rotations - poses[f].joint_rotations).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back[f].root_translation - poses[f].root_translation).norm() == 0.0);
  }
  std::remove(path.c_str());
}
