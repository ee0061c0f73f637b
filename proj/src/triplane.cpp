#include "stm/triplane.hpp"

#include <algorithm>
#include <cmath>

namespace stm {

namespace {

// Axis pairs per plane: XY, XZ, YZ.
constexpr int kAxisA[3] = {0, 0, 1};
constexpr int kAxisB[3] = {1, 2, 2};

struct PlaneSample {
  int ia0, ia1, ib0, ib1;  // corner node indices per axis
  Scalar fa, fb;           // in-cell fractions
  Scalar da, db;           // d(continuous coord)/d(world position component), 0 if clamped
};

PlaneSample locate(const Triplane& tp, const Vec3& position, int plane) {
  const int a = kAxisA[plane], b = kAxisB[plane];
  PlaneSample s;
  auto axis = [&](int world_axis, int& i0, int& i1, Scalar& frac, Scalar& dcoord) {
    const Scalar extent = tp.box_max[world_axis] - tp.box_min[world_axis];
    Scalar u = (position[world_axis] - tp.box_min[world_axis]) / extent;
    const bool clamped = u <= 0.0 || u >= 1.0;
    u = std::clamp(u, Scalar(0), Scalar(1));
    const Scalar coord = u * (tp.resolution - 1);
    i0 = std::min(int(coord), tp.resolution - 2);
    i1 = i0 + 1;
    frac = coord - i0;
    dcoord = clamped ? 0.0 : (tp.resolution - 1) / extent;
  };
  axis(a, s.ia0, s.ia1, s.fa, s.da);
  axis(b, s.ib0, s.ib1, s.fb, s.db);
  return s;
}

}  // namespace

void Triplane::validate() const {
  if (resolution < 2) throw ConfigError("triplane: resolution must be at least 2");
  if (features < 1) throw ConfigError("triplane: needs at least one feature channel");
  for (const MatX& p : planes)
    if (p.rows() != Eigen::Index(resolution) * resolution || p.cols() != features)
      throw ShapeMismatchError("triplane: plane storage mismatch");
  if (((box_max - box_min).array() <= 0).any())
    throw ConfigError("triplane: empty bounding box");
}

Triplane Triplane::create(int resolution, int features, const Vec3& box_min,
                          const Vec3& box_max, Scalar init_half_width,
                          std::mt19937_64& rng) {
  Triplane tp;
  tp.resolution = resolution;
  tp.features = features;
  tp.box_min = box_min;
  tp.box_max = box_max;
  std::uniform_real_distribution<Scalar> uni(-init_half_width, init_half_width);
  for (MatX& p : tp.planes) {
    p.resize(Eigen::Index(resolution) * resolution, features);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) = uni(rng);
  }
  tp.validate();
  return tp;
}

TriplaneGrad TriplaneGrad::zeros(const Triplane& tp) {
  TriplaneGrad g;
  for (int p = 0; p < 3; ++p)
    g.planes[p] = MatX::Zero(tp.planes[p].rows(), tp.planes[p].cols());
  return g;
}

void TriplaneGrad::add(const TriplaneGrad& other) {
  for (int p = 0; p < 3; ++p) planes[p] += other.planes[p];
}

VecX query_triplane(const Triplane& tp, const Vec3& position) {
  VecX out(tp.feature_dim());
  for (int p = 0; p < 3; ++p) {
    const PlaneSample s = locate(tp, position, p);
    const int r = tp.resolution;
    const auto& grid = tp.planes[p];
    const Scalar w00 = (1 - s.fa) * (1 - s.fb), w10 = s.fa * (1 - s.fb);
    const Scalar w01 = (1 - s.fa) * s.fb, w11 = s.fa * s.fb;
    out.segment(p * tp.features, tp.features) =
        (w00 * grid.row(s.ib0 * r + s.ia0) + w10 * grid.row(s.ib0 * r + s.ia1) +
         w01 * grid.row(s.ib1 * r + s.ia0) + w11 * grid.row(s.ib1 * r + s.ia1))
            .transpose();
  }
  return out;
}

void query_triplane_backward(const Triplane& tp, const Vec3& position,
                             const VecX& d_feature, TriplaneGrad& grad,
                             Vec3& d_position) {
  if (d_feature.size() != tp.feature_dim())
    throw ShapeMismatchError("query_triplane_backward: feature width mismatch");
  d_position.setZero();
  for (int p = 0; p < 3; ++p) {
    const PlaneSample s = locate(tp, position, p);
    const int r = tp.resolution;
    const auto& grid = tp.planes[p];
    const auto df = d_feature.segment(p * tp.features, tp.features);

    const Scalar w00 = (1 - s.fa) * (1 - s.fb), w10 = s.fa * (1 - s.fb);
    const Scalar w01 = (1 - s.fa) * s.fb, w11 = s.fa * s.fb;
    grad.planes[p].row(s.ib0 * r + s.ia0) += w00 * df.transpose();
    grad.planes[p].row(s.ib0 * r + s.ia1) += w10 * df.transpose();
    grad.planes[p].row(s.ib1 * r + s.ia0) += w01 * df.transpose();
    grad.planes[p].row(s.ib1 * r + s.ia1) += w11 * df.transpose();

    const VecX g00 = grid.row(s.ib0 * r + s.ia0).transpose();
    const VecX g10 = grid.row(s.ib0 * r + s.ia1).transpose();
    const VecX g01 = grid.row(s.ib1 * r + s.ia0).transpose();
    const VecX g11 = grid.row(s.ib1 * r + s.ia1).transpose();
    const Scalar d_fa = df.dot((1 - s.fb) * (g10 - g00) + s.fb * (g11 - g01));
    const Scalar d_fb = df.dot((1 - s.fa) * (g01 - g00) + s.fa * (g11 - g10));
    d_position[kAxisA[p]] += d_fa * s.da;
    d_position[kAxisB[p]] += d_fb * s.db;
  }
}

}  // namespace stm
