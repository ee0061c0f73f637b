#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "stm/raster.hpp"
#include "test_util.hpp"

using namespace stm;

namespace {

// Scalar objective: random fixed projections of the color and depth outputs.
struct Probe {
  Image u_color;
  Image u_depth;
  Camera cam;
  Vec3 bg;
  RasterConfig cfg;

  Probe(uint64_t seed, const Camera& camera) : cam(camera) {
    cfg.threads = 1;
    bg = Vec3(0.35, 0.25, 0.45);
    u_color = Image(cam.width, cam.height, 3);
    u_depth = Image(cam.width, cam.height, 1);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<Scalar> uni(-1, 1);
    for (auto& v : u_color.data) v = uni(rng);
    for (auto& v : u_depth.data) v = uni(rng);
  }

  Scalar loss(const GaussianField& f) const {
    const RenderOutput out = render(f, cam, bg, cfg);
    Scalar s = 0;
    for (size_t i = 0; i < out.color.data.size(); ++i)
      s += out.color.data[i] * u_color.data[i];
    for (size_t i = 0; i < out.depth.data.size(); ++i)
      s += out.depth.data[i] * u_depth.data[i];
    return s;
  }

  RasterGradients grads(const GaussianField& f) const {
    return render_backward(f, cam, bg, u_color, u_depth, cfg);
  }
};

int check_field_gradients(GaussianField f, const Probe& probe, Scalar h = 1e-4) {
  const RasterGradients g = probe.grads(f);
  int failures = 0;
  auto check_one = [&](Scalar& slot, Scalar analytic) {
    const Scalar saved = slot;
    slot = saved + h;
    const Scalar hi = probe.loss(f);
    slot = saved - h;
    const Scalar lo = probe.loss(f);
    slot = saved;
    const Scalar numeric = (hi - lo) / (2 * h);
    if (!test::grad_close(analytic, numeric)) {
      ++failures;
      MESSAGE("grad mismatch analytic=" << analytic << " numeric=" << numeric);
    }
  };
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    for (int j = 0; j < 3; ++j) check_one(f.positions(i, j), g.d_positions(i, j));
    for (int j = 0; j < 4; ++j) check_one(f.rotations(i, j), g.d_rotations(i, j));
    for (int j = 0; j < 3; ++j) check_one(f.log_scales(i, j), g.d_log_scales(i, j));
    check_one(f.opacity_logits(i), g.d_opacity_logits(i));
    for (int j = 0; j < f.sh.cols(); ++j) check_one(f.sh(i, j), g.d_sh(i, j));
  }
  return failures;
}

}  // namespace

TEST_CASE("zero upstream gives zero gradients") {
  const GaussianField f = test::random_field(3, 8, 2);
  const Camera cam = test::simple_camera();
  Image zc(cam.width, cam.height, 3), zd(cam.width, cam.height, 1);
  const RasterGradients g = render_backward(f, cam, Vec3(0.2, 0.2, 0.2), zc, zd);
  CHECK(g.d_positions.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_rotations.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_log_scales.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_opacity_logits.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.d_sh.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single splat gradients match finite differences") {
  const Camera cam = test::simple_camera(24, 24, 22.0);
  GaussianField f = test::random_field(101, 1, 2);
  const Probe probe(7, cam);
  CHECK(check_field_gradients(f, probe) == 0);
}

TEST_CASE("small scene gradients match finite differences") {
  const Camera cam = test::simple_camera(24, 24, 22.0);
  GaussianField f = test::random_field(202, 6, 2);
  const Probe probe(8, cam);
  CHECK(check_field_gradients(f, probe) == 0);
}

TEST_CASE("degree-3 SH gradients match finite differences") {
  const Camera cam = test::simple_camera(20, 20, 18.0);
  GaussianField f = test::random_field(303, 3, 3);
  const Probe probe(9, cam);
  CHECK(check_field_gradients(f, probe) == 0);
}

TEST_CASE("backward reduction is stable across thread counts") {
  const GaussianField f = test::random_field(404, 24, 2, false);
  const Camera cam = test::simple_camera(40, 40, 35.0);
  Probe p1(11, cam), p7(11, cam);
  p1.cfg.threads = 1;
  p7.cfg.threads = 7;
  const RasterGradients a = p1.grads(f);
  const RasterGradients b = p7.grads(f);
  CHECK((a.d_positions - b.d_positions).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.d_rotations - b.d_rotations).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.d_sh - b.d_sh).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.d_opacity_logits - b.d_opacity_logits).cwiseAbs().maxCoeff() < 1e-6);
}
