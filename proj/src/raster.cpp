#include "stm/raster.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "stm/parallel.hpp"

namespace stm {

namespace {

struct Prepared {
  Splat2D splat;
  Mat2 conic;      // inverse of cov2d
  Scalar radius;   // pixel radius beyond which alpha < alpha_min
};

struct BlendEntry {
  const Prepared* p = nullptr;
  Scalar alpha = 0;
  Scalar g = 0;
  Scalar t_at_blend = 0;  // transmittance before this splat
};

Scalar max_eigenvalue_2x2(const Mat2& m) {
  const Scalar mid = 0.5 * (m(0, 0) + m(1, 1));
  const Scalar det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return mid + std::sqrt(std::max(Scalar(0), mid * mid - det));
}

// Projects every primitive in front of the near clip and globally sorts
// front-to-back by (view_depth, primitive index).
std::vector<Prepared> prepare_splats(const GaussianField& field, const Camera& camera,
                                     const RasterConfig& cfg) {
  field.validate();
  camera.validate();
  const Vec3 cam_center = camera.center();
  const int basis_count = field.sh_basis_count();

  std::vector<Prepared> out;
  out.reserve(field.size());
  for (Eigen::Index i = 0; i < field.size(); ++i) {
    const Vec3 mu = field.positions.row(i).transpose();
    const Vec3 t = camera.rotation * mu + camera.translation;
    if (t.z() <= cfg.near_clip) continue;

    Prepared p;
    p.splat.index = int(i);
    p.splat.view_depth = t.z();
    const Scalar inv_z = 1.0 / t.z();
    p.splat.mean2d = Vec2(camera.fx * t.x() * inv_z + camera.cx,
                          camera.fy * t.y() * inv_z + camera.cy);

    Eigen::Matrix<Scalar, 2, 3> jac;
    jac << camera.fx * inv_z, 0, -camera.fx * t.x() * inv_z * inv_z,
           0, camera.fy * inv_z, -camera.fy * t.y() * inv_z * inv_z;
    const Mat3 sigma = build_covariance(field.rotations.row(i).transpose(),
                                        field.log_scales.row(i).transpose());
    const Eigen::Matrix<Scalar, 2, 3> m = jac * camera.rotation;
    p.splat.cov2d = m * sigma * m.transpose() + cfg.cov2d_floor * Mat2::Identity();

    const Scalar det = p.splat.cov2d.determinant();
    p.conic << p.splat.cov2d(1, 1), -p.splat.cov2d(0, 1),
               -p.splat.cov2d(1, 0), p.splat.cov2d(0, 0);
    p.conic /= det;

    p.splat.opacity = sigmoid(field.opacity_logits(i));
    const Scalar lam_max = max_eigenvalue_2x2(p.splat.cov2d);
    const Scalar log_ratio = std::log(p.splat.opacity / cfg.alpha_min);
    p.radius = log_ratio > 0 ? std::sqrt(2.0 * lam_max * log_ratio) : 0.0;

    const Vec3 dir = (mu - cam_center).normalized();
    p.splat.color = eval_sh_color(
        field.sh.row(i).reshaped(3, basis_count).transpose(), dir);
    out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const Prepared& a, const Prepared& b) {
    if (a.splat.view_depth != b.splat.view_depth)
      return a.splat.view_depth < b.splat.view_depth;
    return a.splat.index < b.splat.index;
  });
  return out;
}

// Blends one pixel front to back. `entries` (when non-null) records the
// blended prefix for the backward pass. Template over the candidate source so
// tile lists and the oracle's full list share the exact arithmetic.
template <typename CandidateRange>
void blend_pixel(Scalar px, Scalar py, const CandidateRange& candidates,
                 const Vec3& background, const RasterConfig& cfg, Vec3& color,
                 Scalar& depth, Scalar& alpha_out,
                 std::vector<BlendEntry>* entries = nullptr) {
  Scalar transmittance = 1.0;
  color.setZero();
  depth = 0;
  for (const Prepared* p : candidates) {
    const Vec2 d(px - p->splat.mean2d.x(), py - p->splat.mean2d.y());
    const Scalar q = p->conic(0, 0) * d.x() * d.x() +
                     2.0 * p->conic(0, 1) * d.x() * d.y() +
                     p->conic(1, 1) * d.y() * d.y();
    const Scalar g = std::exp(-0.5 * q);
    const Scalar alpha = std::min(p->splat.opacity * g, cfg.alpha_clamp);
    if (alpha < cfg.alpha_min) continue;
    const Scalar next_t = transmittance * (1.0 - alpha);
    if (next_t < cfg.transmittance_min) break;
    color += alpha * transmittance * p->splat.color;
    depth += alpha * transmittance * p->splat.view_depth;
    if (entries)
      entries->push_back({p, alpha, g, transmittance});
    transmittance = next_t;
  }
  color += transmittance * background;
  alpha_out = 1.0 - transmittance;
}

struct TileGrid {
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<const Prepared*>> lists;  // per tile, in global order
};

TileGrid bin_splats(const std::vector<Prepared>& prepared, const Camera& camera,
                    const RasterConfig& cfg) {
  TileGrid grid;
  grid.tiles_x = (camera.width + cfg.tile_size - 1) / cfg.tile_size;
  grid.tiles_y = (camera.height + cfg.tile_size - 1) / cfg.tile_size;
  grid.lists.resize(size_t(grid.tiles_x) * grid.tiles_y);
  for (const Prepared& p : prepared) {
    const Scalar pad = p.radius + 1.0;
    int x0 = int(std::floor(p.splat.mean2d.x() - pad));
    int x1 = int(std::ceil(p.splat.mean2d.x() + pad));
    int y0 = int(std::floor(p.splat.mean2d.y() - pad));
    int y1 = int(std::ceil(p.splat.mean2d.y() + pad));
    x0 = std::max(0, x0); y0 = std::max(0, y0);
    x1 = std::min(camera.width - 1, x1); y1 = std::min(camera.height - 1, y1);
    if (x0 > x1 || y0 > y1) continue;
    const int tx0 = x0 / cfg.tile_size, tx1 = x1 / cfg.tile_size;
    const int ty0 = y0 / cfg.tile_size, ty1 = y1 / cfg.tile_size;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        grid.lists[size_t(ty) * grid.tiles_x + tx].push_back(&p);
  }
  return grid;
}

RenderOutput make_output(const Camera& camera) {
  RenderOutput out;
  out.color = Image(camera.width, camera.height, 3);
  out.depth = Image(camera.width, camera.height, 1);
  out.alpha = Image(camera.width, camera.height, 1);
  return out;
}

// Accumulated per-splat pixel-level gradients, collapsed to attribute
// gradients once the image sweep is done.
struct PixelAccum {
  MatX2 d_mean2d;
  MatX3 d_conic;  // symmetric 2x2 as (aa, ab, bb) per splat
  MatX3 d_color;
  VecX d_opacity;
  VecX d_depth;

  explicit PixelAccum(Eigen::Index n)
      : d_mean2d(MatX2::Zero(n, 2)), d_conic(MatX3::Zero(n, 3)),
        d_color(MatX3::Zero(n, 3)), d_opacity(VecX::Zero(n)),
        d_depth(VecX::Zero(n)) {}

  void add(const PixelAccum& o) {
    d_mean2d += o.d_mean2d;
    d_conic += o.d_conic;
    d_color += o.d_color;
    d_opacity += o.d_opacity;
    d_depth += o.d_depth;
  }
};

}  // namespace

RasterGradients RasterGradients::zeros(const GaussianField& field) {
  RasterGradients g;
  g.d_positions = MatX3::Zero(field.size(), 3);
  g.d_rotations = MatX4::Zero(field.size(), 4);
  g.d_log_scales = MatX3::Zero(field.size(), 3);
  g.d_opacity_logits = VecX::Zero(field.size());
  g.d_sh = MatX::Zero(field.size(), field.sh.cols());
  g.d_mean2d = MatX2::Zero(field.size(), 2);
  g.visible = VecX::Zero(field.size());
  return g;
}

void RasterGradients::add(const RasterGradients& other) {
  d_positions += other.d_positions;
  d_rotations += other.d_rotations;
  d_log_scales += other.d_log_scales;
  d_opacity_logits += other.d_opacity_logits;
  d_sh += other.d_sh;
  d_mean2d += other.d_mean2d;
  visible += other.visible;
}

std::optional<Splat2D> project_gaussian(const Vec3& mean, const Mat3& covariance,
                                        const Camera& camera,
                                        const RasterConfig& cfg) {
  camera.validate();
  const Vec3 t = camera.rotation * mean + camera.translation;
  if (t.z() <= cfg.near_clip) return std::nullopt;
  Splat2D s;
  const Scalar inv_z = 1.0 / t.z();
  s.view_depth = t.z();
  s.mean2d = Vec2(camera.fx * t.x() * inv_z + camera.cx,
                  camera.fy * t.y() * inv_z + camera.cy);
  Eigen::Matrix<Scalar, 2, 3> jac;
  jac << camera.fx * inv_z, 0, -camera.fx * t.x() * inv_z * inv_z,
         0, camera.fy * inv_z, -camera.fy * t.y() * inv_z * inv_z;
  const Eigen::Matrix<Scalar, 2, 3> m = jac * camera.rotation;
  s.cov2d = m * covariance * m.transpose() + cfg.cov2d_floor * Mat2::Identity();
  return s;
}

RenderOutput render(const GaussianField& field, const Camera& camera,
                    const Vec3& background_color, const RasterConfig& cfg) {
  const std::vector<Prepared> prepared = prepare_splats(field, camera, cfg);
  const TileGrid grid = bin_splats(prepared, camera, cfg);
  RenderOutput out = make_output(camera);

  const int threads = cfg.deterministic ? 1 : cfg.threads;
  const int64_t n_tiles = int64_t(grid.lists.size());
  parallel_for(0, n_tiles, [&](int64_t lo, int64_t hi) {
    for (int64_t tile = lo; tile < hi; ++tile) {
      const auto& list = grid.lists[size_t(tile)];
      const int tx = int(tile % grid.tiles_x), ty = int(tile / grid.tiles_x);
      const int x0 = tx * cfg.tile_size, y0 = ty * cfg.tile_size;
      const int x1 = std::min(camera.width, x0 + cfg.tile_size);
      const int y1 = std::min(camera.height, y0 + cfg.tile_size);
      Vec3 color;
      Scalar depth, alpha;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          blend_pixel(x + 0.5, y + 0.5, list, background_color, cfg, color, depth, alpha);
          for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = color[c];
          out.depth.at(y, x) = depth;
          out.alpha.at(y, x) = alpha;
        }
    }
  }, threads);
  return out;
}

RenderOutput render_oracle(const GaussianField& field, const Camera& camera,
                           const Vec3& background_color, const RasterConfig& cfg) {
  const std::vector<Prepared> prepared = prepare_splats(field, camera, cfg);
  std::vector<const Prepared*> all;
  all.reserve(prepared.size());
  for (const Prepared& p : prepared) all.push_back(&p);
  RenderOutput out = make_output(camera);

  const int threads = cfg.deterministic ? 1 : cfg.threads;
  parallel_for(0, camera.height, [&](int64_t lo, int64_t hi) {
    Vec3 color;
    Scalar depth, alpha;
    for (int64_t y = lo; y < hi; ++y)
      for (int x = 0; x < camera.width; ++x) {
        blend_pixel(x + 0.5, y + 0.5, all, background_color, cfg, color, depth, alpha);
        for (int c = 0; c < 3; ++c) out.color.at(int(y), x, c) = color[c];
        out.depth.at(int(y), x) = depth;
        out.alpha.at(int(y), x) = alpha;
      }
  }, threads);
  return out;
}

RasterGradients render_backward(const GaussianField& field, const Camera& camera,
                                const Vec3& background_color, const Image& d_color,
                                const Image& d_depth, const RasterConfig& cfg) {
  if (d_color.width != camera.width || d_color.height != camera.height ||
      d_color.channels != 3)
    throw ShapeMismatchError("render_backward: d_color shape mismatch");
  if (d_depth.width != camera.width || d_depth.height != camera.height ||
      d_depth.channels != 1)
    throw ShapeMismatchError("render_backward: d_depth shape mismatch");

  const std::vector<Prepared> prepared = prepare_splats(field, camera, cfg);
  const TileGrid grid = bin_splats(prepared, camera, cfg);

  const int64_t n_tiles = int64_t(grid.lists.size());
  const int workers = cfg.deterministic ? 1 : thread_count(cfg.threads);
  std::vector<PixelAccum> accums;
  accums.reserve(size_t(workers));
  for (int w = 0; w < workers; ++w) accums.emplace_back(field.size());

  parallel_for_indexed(0, n_tiles, [&](int worker, int64_t lo, int64_t hi) {
    PixelAccum& acc = accums[size_t(worker)];
    std::vector<BlendEntry> entries;
    entries.reserve(64);
    for (int64_t tile = lo; tile < hi; ++tile) {
      const auto& list = grid.lists[size_t(tile)];
      if (list.empty()) continue;
      const int tx = int(tile % grid.tiles_x), ty = int(tile / grid.tiles_x);
      const int x0 = tx * cfg.tile_size, y0 = ty * cfg.tile_size;
      const int x1 = std::min(camera.width, x0 + cfg.tile_size);
      const int y1 = std::min(camera.height, y0 + cfg.tile_size);
      Vec3 color;
      Scalar depth, alpha;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          entries.clear();
          blend_pixel(x + 0.5, y + 0.5, list, background_color, cfg, color, depth,
                      alpha, &entries);
          if (entries.empty()) continue;
          const Vec3 uc(d_color.at(y, x, 0), d_color.at(y, x, 1), d_color.at(y, x, 2));
          const Scalar ud = d_depth.at(y, x);

          // Reverse sweep with suffix accumulators: S_c collects everything
          // blended behind splat i (plus the background term), so that
          // dC/dalpha_i = T_i c_i - S_c / (1 - alpha_i).
          const Scalar t_final =
              entries.back().t_at_blend * (1.0 - entries.back().alpha);
          Vec3 suffix_c = t_final * background_color;
          Scalar suffix_d = 0;
          for (size_t k = entries.size(); k-- > 0;) {
            const BlendEntry& e = entries[k];
            const Eigen::Index i = e.p->splat.index;
            const Scalar w = e.alpha * e.t_at_blend;
            const Scalar inv_one_minus = 1.0 / (1.0 - e.alpha);
            const Scalar d_alpha =
                uc.dot(e.t_at_blend * e.p->splat.color - suffix_c * inv_one_minus) +
                ud * (e.t_at_blend * e.p->splat.view_depth - suffix_d * inv_one_minus);
            acc.d_color.row(i) += (uc * w).transpose();
            acc.d_depth(i) += ud * w;
            if (e.p->splat.opacity * e.g < cfg.alpha_clamp) {
              acc.d_opacity(i) += d_alpha * e.g;
              const Scalar d_g = d_alpha * e.p->splat.opacity;
              const Vec2 d(x + 0.5 - e.p->splat.mean2d.x(),
                           y + 0.5 - e.p->splat.mean2d.y());
              const Vec2 conic_d = e.p->conic * d;
              acc.d_mean2d.row(i) += (d_g * e.g * conic_d).transpose();
              const Scalar f = -0.5 * d_g * e.g;
              acc.d_conic(i, 0) += f * d.x() * d.x();
              acc.d_conic(i, 1) += f * d.x() * d.y();
              acc.d_conic(i, 2) += f * d.y() * d.y();
            }
            suffix_c += w * e.p->splat.color;
            suffix_d += w * e.p->splat.view_depth;
          }
        }
    }
  }, workers);

  for (size_t w = 1; w < accums.size(); ++w) accums[0].add(accums[w]);
  const PixelAccum& acc = accums[0];

  // Collapse screen-space gradients through projection, covariance
  // factorization, SH, and activations. One writer per primitive row.
  RasterGradients grads = RasterGradients::zeros(field);
  const Vec3 cam_center = camera.center();
  const int basis_count = field.sh_basis_count();
  const int degree = field.sh_degree;

  parallel_for(0, int64_t(prepared.size()), [&](int64_t lo, int64_t hi) {
    VecX basis;
    MatX3 basis_grad;
    for (int64_t k = lo; k < hi; ++k) {
      const Prepared& p = prepared[size_t(k)];
      const Eigen::Index i = p.splat.index;

      const Vec4 q = field.rotations.row(i).transpose();
      const Vec4 qn = normalize_quaternion(q);
      const Mat3 rot = quaternion_to_matrix(qn);
      const Vec3 s = field.log_scales.row(i).transpose().array().exp();
      const Mat3 v = rot * s.asDiagonal();
      const Mat3 sigma = v * v.transpose();

      const Vec3 mu = field.positions.row(i).transpose();
      const Vec3 t = camera.rotation * mu + camera.translation;
      const Scalar inv_z = 1.0 / t.z();
      Eigen::Matrix<Scalar, 2, 3> jac;
      jac << camera.fx * inv_z, 0, -camera.fx * t.x() * inv_z * inv_z,
             0, camera.fy * inv_z, -camera.fy * t.y() * inv_z * inv_z;
      const Eigen::Matrix<Scalar, 2, 3> m = jac * camera.rotation;

      Mat2 d_lambda;
      d_lambda << acc.d_conic(i, 0), acc.d_conic(i, 1),
                  acc.d_conic(i, 1), acc.d_conic(i, 2);
      const Mat2 d_cov2d = -p.conic * d_lambda * p.conic;
      const Mat3 d_sigma = m.transpose() * d_cov2d * m;
      const Eigen::Matrix<Scalar, 2, 3> d_m = 2.0 * d_cov2d * m * sigma;
      const Eigen::Matrix<Scalar, 2, 3> d_jac = d_m * camera.rotation.transpose();

      Vec3 d_t = Vec3::Zero();
      const Scalar inv_z2 = inv_z * inv_z;
      d_t.x() += d_jac(0, 2) * (-camera.fx * inv_z2);
      d_t.y() += d_jac(1, 2) * (-camera.fy * inv_z2);
      d_t.z() += d_jac(0, 0) * (-camera.fx * inv_z2) +
                 d_jac(1, 1) * (-camera.fy * inv_z2) +
                 d_jac(0, 2) * (2.0 * camera.fx * t.x() * inv_z2 * inv_z) +
                 d_jac(1, 2) * (2.0 * camera.fy * t.y() * inv_z2 * inv_z);

      const Vec2 d_m2d = acc.d_mean2d.row(i).transpose();
      d_t.x() += d_m2d.x() * camera.fx * inv_z;
      d_t.z() += d_m2d.x() * (-camera.fx * t.x() * inv_z2);
      d_t.y() += d_m2d.y() * camera.fy * inv_z;
      d_t.z() += d_m2d.y() * (-camera.fy * t.y() * inv_z2);
      d_t.z() += acc.d_depth(i);

      Vec3 d_mu = camera.rotation.transpose() * d_t;

      // SH color: clamp(coeffs^T basis + 0.5, 0, 1), view direction from the
      // camera center to the primitive.
      const Vec3 rel = mu - cam_center;
      const Scalar dist = rel.norm();
      const Vec3 dir = rel / dist;
      sh_basis(degree, dir, basis);
      sh_basis_gradient(degree, dir, basis_grad);
      Vec3 d_dir = Vec3::Zero();
      for (int c = 0; c < 3; ++c) {
        Scalar pre = 0.5;
        for (int b = 0; b < basis_count; ++b) pre += basis[b] * field.sh(i, 3 * b + c);
        if (pre <= 0.0 || pre >= 1.0) continue;
        const Scalar up = acc.d_color(i, c);
        for (int b = 0; b < basis_count; ++b) {
          grads.d_sh(i, 3 * b + c) = up * basis[b];
          d_dir += up * field.sh(i, 3 * b + c) * basis_grad.row(b).transpose();
        }
      }
      d_mu += (Mat3::Identity() - dir * dir.transpose()) * d_dir / dist;

      grads.visible(i) = 1.0;
      grads.d_positions.row(i) = d_mu.transpose();
      grads.d_opacity_logits(i) =
          acc.d_opacity(i) * p.splat.opacity * (1.0 - p.splat.opacity);
      grads.d_mean2d.row(i) = acc.d_mean2d.row(i);

      const Mat3 d_v = 2.0 * d_sigma * v;
      const Mat3 d_rot = d_v * s.asDiagonal();
      Vec3 d_log_s;
      for (int j = 0; j < 3; ++j)
        d_log_s[j] = d_v.col(j).dot(rot.col(j)) * s[j];
      grads.d_log_scales.row(i) = d_log_s.transpose();

      const Scalar w = qn[0], x = qn[1], y = qn[2], z = qn[3];
      Mat3 dr_dw, dr_dx, dr_dy, dr_dz;
      dr_dw << 0, -z, y, z, 0, -x, -y, x, 0;
      dr_dx << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
      dr_dy << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
      dr_dz << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
      Vec4 d_qn(2.0 * (d_rot.array() * dr_dw.array()).sum(),
                2.0 * (d_rot.array() * dr_dx.array()).sum(),
                2.0 * (d_rot.array() * dr_dy.array()).sum(),
                2.0 * (d_rot.array() * dr_dz.array()).sum());
      const Vec4 d_q = (d_qn - qn * qn.dot(d_qn)) / q.norm();
      grads.d_rotations.row(i) = d_q.transpose();
    }
  }, workers);

  return grads;
}

}  // namespace stm
