#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "stm/mapping.hpp"
#include "test_util.hpp"

using namespace stm;

namespace {

MappingStack random_stack(MappingMode mode, int sh_degree, uint64_t seed) {
  std::mt19937_64 rng(seed);
  MappingStack s = MappingStack::create(mode, sh_degree, 8, rng);
  std::uniform_real_distribution<Scalar> uni(-0.2, 0.2);
  auto randomize = [&](AttributeMapper& m) {
    for (Eigen::Index i = 0; i < m.mlp.w2.size(); ++i) m.mlp.w2.data()[i] = uni(rng);
    for (Eigen::Index i = 0; i < m.mlp.b2.size(); ++i) m.mlp.b2(i) = uni(rng);
  };
  for (int a = 0; a < kAttributeCount; ++a) {
    randomize(s.shared[size_t(a)]);
    randomize(s.scene[size_t(a)]);
    randomize(s.avatar[size_t(a)]);
  }
  return s;
}

Scalar max_field_diff(const GaussianField& a, const GaussianField& b) {
  return std::max({(a.positions - b.positions).cwiseAbs().maxCoeff(),
                   (a.rotations - b.rotations).cwiseAbs().maxCoeff(),
                   (a.log_scales - b.log_scales).cwiseAbs().maxCoeff(),
                   (a.opacity_logits - b.opacity_logits).cwiseAbs().maxCoeff(),
                   (a.sh - b.sh).cwiseAbs().maxCoeff()});
}

}  // namespace

TEST_CASE("zero-parameter mapper is the exact identity") {
  std::mt19937_64 rng(1);
  AttributeMapper m;
  m.mlp = Mlp::create(3, 8, 3, rng);  // second layer zero by construction
  MatX v(5, 3);
  v.setRandom();
  const MatX out = map_attribute(m, v);
  CHECK((out - v).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one-neuron mapper arithmetic") {
  AttributeMapper m;
  m.mlp = Mlp::zeros(1, 1, 1);
  m.mlp.w1(0, 0) = 2.0;
  m.mlp.b1(0) = -0.5;
  m.mlp.w2(0, 0) = 3.0;
  m.mlp.b2(0) = 0.25;
  MatX v(2, 1);
  v << 1.0, -1.0;
  const MatX out = map_attribute(m, v);
  // v + w2*relu(w1 v + b1) + b2
  CHECK(out(0, 0) == doctest::Approx(1.0 + 3.0 * 1.5 + 0.25).epsilon(1e-12));
  CHECK(out(1, 0) == doctest::Approx(-1.0 + 0.0 + 0.25).epsilon(1e-12));
}

TEST_CASE("map_attribute rejects width mismatch") {
  std::mt19937_64 rng(2);
  AttributeMapper m;
  m.mlp = Mlp::create(4, 8, 4, rng);
  MatX v(3, 3);
  v.setRandom();
  CHECK_THROWS_AS(map_attribute(m, v), ConfigError);
}

TEST_CASE("map_attribute gradients match finite differences") {
  std::mt19937_64 rng(3);
  AttributeMapper m;
  m.mlp = Mlp::create(3, 6, 3, rng);
  std::uniform_real_distribution<Scalar> uni(-0.3, 0.3);
  for (Eigen::Index i = 0; i < m.mlp.w2.size(); ++i) m.mlp.w2.data()[i] = uni(rng);
  MatX v(4, 3);
  v.setRandom();
  MatX upstream(4, 3);
  upstream.setRandom();

  Mlp grad = Mlp::zeros(3, 6, 3);
  const MatX d_v = m.apply_backward(v, upstream, grad);
  auto loss = [&] { return (m.apply(v).array() * upstream.array()).sum(); };
  const Scalar h = 1e-5;
  auto fd = [&](Scalar& slot, Scalar analytic) {
    const Scalar saved = slot;
    slot = saved + h;
    const Scalar hi = loss();
    slot = saved - h;
    const Scalar lo = loss();
    slot = saved;
    CHECK(test::grad_close(analytic, (hi - lo) / (2 * h)));
  };
  for (Eigen::Index i = 0; i < v.size(); ++i) fd(v.data()[i], d_v.data()[i]);
  for (Eigen::Index i = 0; i < m.mlp.w1.size(); ++i)
    fd(m.mlp.w1.data()[i], grad.w1.data()[i]);
  for (Eigen::Index i = 0; i < m.mlp.w2.size(); ++i)
    fd(m.mlp.w2.data()[i], grad.w2.data()[i]);
  for (Eigen::Index i = 0; i < m.mlp.b1.size(); ++i) fd(m.mlp.b1(i), grad.b1(i));
  for (Eigen::Index i = 0; i < m.mlp.b2.size(); ++i) fd(m.mlp.b2(i), grad.b2(i));
}

TEST_CASE("off mode and identity-initialized shared mode pass fields through") {
  const GaussianField scene = test::random_field(10, 8, 2, false);
  const GaussianField avatar = test::random_field(11, 5, 2, false);
  std::mt19937_64 rng(4);
  MappingStack off = MappingStack::create(MappingMode::Off, 2, 8, rng);
  const MappedPair po = map_fields(off, scene, avatar);
  CHECK(max_field_diff(po.scene, scene) == 0.0);
  CHECK(max_field_diff(po.avatar, avatar) == 0.0);

  MappingStack fresh = MappingStack::create(MappingMode::Shared, 2, 8, rng);
  const MappedPair pf = map_fields(fresh, scene, avatar);
  CHECK(max_field_diff(pf.scene, scene) == 0.0);
  CHECK(max_field_diff(pf.avatar, avatar) == 0.0);

  // Residual-identity start: mapped concatenation is bitwise the plain one.
  const GaussianField direct = concat_fields(scene, avatar);
  const GaussianField mapped = map_then_concat(fresh, scene, avatar);
  CHECK(max_field_diff(direct, mapped) == 0.0);
}

TEST_CASE("shared mode maps identical rows identically across fields") {
  GaussianField scene = test::random_field(20, 6, 2, false);
  GaussianField avatar = test::random_field(21, 4, 2, false);
  // Plant a duplicate row across the two fields.
  avatar.positions.row(2) = scene.positions.row(3);
  avatar.rotations.row(2) = scene.rotations.row(3);
  avatar.log_scales.row(2) = scene.log_scales.row(3);
  avatar.opacity_logits(2) = scene.opacity_logits(3);
  avatar.sh.row(2) = scene.sh.row(3);

  const MappingStack shared = random_stack(MappingMode::Shared, 2, 5);
  const MappedPair ps = map_fields(shared, scene, avatar);
  CHECK((ps.scene.positions.row(3) - ps.avatar.positions.row(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ps.scene.sh.row(3) - ps.avatar.sh.row(2)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ps.scene.opacity_logits(3) == ps.avatar.opacity_logits(2));

  // Separate mode with independently randomized parameters breaks it.
  const MappingStack separate = random_stack(MappingMode::Separate, 2, 6);
  const MappedPair pp = map_fields(separate, scene, avatar);
  CHECK((pp.scene.positions.row(3) - pp.avatar.positions.row(2)).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("mapping preserves attribute shapes and field sizes") {
  const GaussianField scene = test::random_field(30, 7, 3, false);
  const GaussianField avatar = test::random_field(31, 9, 3, false);
  const MappingStack stack = random_stack(MappingMode::Shared, 3, 7);
  const MappedPair p = map_fields(stack, scene, avatar);
  CHECK(p.scene.size() == scene.size());
  CHECK(p.avatar.size() == avatar.size());
  CHECK(p.scene.sh.cols() == scene.sh.cols());
  const GaussianField all = map_then_concat(stack, scene, avatar);
  CHECK(all.size() == scene.size() + avatar.size());
}

TEST_CASE("disabled attributes pass through unchanged") {
  const GaussianField scene = test::random_field(40, 5, 2, false);
  const GaussianField avatar = test::random_field(41, 5, 2, false);
  MappingStack stack = random_stack(MappingMode::Shared, 2, 8);
  stack.enabled[0] = false;  // position
  stack.enabled[3] = false;  // opacity
  const MappedPair p = map_fields(stack, scene, avatar);
  CHECK((p.scene.positions - scene.positions).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.scene.opacity_logits - scene.opacity_logits).cwiseAbs().maxCoeff() == 0.0);
  CHECK((p.scene.rotations - scene.rotations).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("map_fields gradients flow to both fields and the mappers") {
  const GaussianField scene = test::random_field(50, 10, 1, false);
  const GaussianField avatar = test::random_field(51, 10, 1, false);
  MappingStack stack = random_stack(MappingMode::Shared, 1, 9);

  std::mt19937_64 rng(12);
  std::uniform_real_distribution<Scalar> uni(-1, 1);
  RasterGradients up_s = RasterGradients::zeros(scene);
  RasterGradients up_a = RasterGradients::zeros(avatar);
  auto fill = [&](RasterGradients& g) {
    for (Eigen::Index i = 0; i < g.d_positions.size(); ++i) g.d_positions.data()[i] = uni(rng);
    for (Eigen::Index i = 0; i < g.d_rotations.size(); ++i) g.d_rotations.data()[i] = uni(rng);
    for (Eigen::Index i = 0; i < g.d_log_scales.size(); ++i) g.d_log_scales.data()[i] = uni(rng);
    for (Eigen::Index i = 0; i < g.d_opacity_logits.size(); ++i) g.d_opacity_logits(i) = uni(rng);
    for (Eigen::Index i = 0; i < g.d_sh.size(); ++i) g.d_sh.data()[i] = uni(rng);
  };
  fill(up_s);
  fill(up_a);

  auto loss = [&](const GaussianField& s, const GaussianField& a) {
    const MappedPair p = map_fields(stack, s, a);
    Scalar v = 0;
    v += (p.scene.positions.array() * up_s.d_positions.array()).sum();
    v += (p.scene.rotations.array() * up_s.d_rotations.array()).sum();
    v += (p.scene.log_scales.array() * up_s.d_log_scales.array()).sum();
    v += (p.scene.opacity_logits.array() * up_s.d_opacity_logits.array()).sum();
    v += (p.scene.sh.array() * up_s.d_sh.array()).sum();
    v += (p.avatar.positions.array() * up_a.d_positions.array()).sum();
    v += (p.avatar.rotations.array() * up_a.d_rotations.array()).sum();
    v += (p.avatar.log_scales.array() * up_a.d_log_scales.array()).sum();
    v += (p.avatar.opacity_logits.array() * up_a.d_opacity_logits.array()).sum();
    v += (p.avatar.sh.array() * up_a.d_sh.array()).sum();
    return v;
  };

  RasterGradients d_s = RasterGradients::zeros(scene);
  RasterGradients d_a = RasterGradients::zeros(avatar);
  MappingGrads grads = MappingGrads::zeros(stack);
  map_fields_backward(stack, scene, avatar, up_s, up_a, d_s, d_a, grads);

  // All three gradient paths are simultaneously nonzero.
  CHECK(d_s.d_positions.cwiseAbs().maxCoeff() > 0.0);
  CHECK(d_a.d_positions.cwiseAbs().maxCoeff() > 0.0);
  Scalar mapper_grad_norm = 0;
  for (int a = 0; a < kAttributeCount; ++a)
    mapper_grad_norm += grads.shared[size_t(a)].w2.cwiseAbs().sum();
  CHECK(mapper_grad_norm > 0.0);

  GaussianField s = scene, av = avatar;
  const Scalar h = 1e-5;
  auto fd = [&](Scalar& slot, Scalar analytic) {
    const Scalar saved = slot;
    slot = saved + h;
    const Scalar hi = loss(s, av);
    slot = saved - h;
    const Scalar lo = loss(s, av);
    slot = saved;
    CHECK(test::grad_close(analytic, (hi - lo) / (2 * h)));
  };
  for (Eigen::Index i = 0; i < s.positions.size(); i += 5)
    fd(s.positions.data()[i], d_s.d_positions.data()[i]);
  for (Eigen::Index i = 0; i < av.sh.size(); i += 7)
    fd(av.sh.data()[i], d_a.d_sh.data()[i]);
  for (Eigen::Index i = 0; i < av.opacity_logits.size(); ++i)
    fd(av.opacity_logits(i), d_a.d_opacity_logits(i));
  for (int a = 0; a < kAttributeCount; ++a) {
    Mlp& mlp = stack.shared[size_t(a)].mlp;
    const Mlp& g = grads.shared[size_t(a)];
    for (Eigen::Index i = 0; i < mlp.w1.size(); i += 4) fd(mlp.w1.data()[i], g.w1.data()[i]);
    for (Eigen::Index i = 0; i < mlp.w2.size(); i += 4) fd(mlp.w2.data()[i], g.w2.data()[i]);
    for (Eigen::Index i = 0; i < mlp.b2.size(); i += 2) fd(mlp.b2(i), g.b2(i));
  }
}
