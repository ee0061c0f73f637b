#include "stm/densify.hpp"

#include <cmath>

namespace stm {

DensifyPlan plan_densify(const GaussianField& field, const VecX& mean_screen_grad,
                         const DensifyConfig& cfg, Scalar scene_extent,
                         std::mt19937_64& rng) {
  if (mean_screen_grad.size() != field.size())
    throw ShapeMismatchError("plan_densify: gradient accumulator mismatch");
  DensifyPlan plan;
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < field.size(); ++i) {
    const bool prune = sigmoid(field.opacity_logits(i)) < cfg.prune_opacity;
    if (prune) {
      ++plan.pruned;
      continue;
    }
    const bool dense = mean_screen_grad(i) > cfg.grad_threshold;
    if (!dense) {
      plan.keep.push_back(int(i));
      continue;
    }
    const Scalar max_scale = field.log_scales.row(i).array().exp().maxCoeff();
    if (max_scale < cfg.clone_scale_fraction * scene_extent) {
      plan.keep.push_back(int(i));
      plan.clones.push_back(int(i));
    } else {
      for (int child = 0; child < 2; ++child) {
        Vec3 xi(normal(rng), normal(rng), normal(rng));
        plan.splits.push_back({int(i), xi});
      }
    }
  }
  return plan;
}

namespace {

void copy_row(GaussianField& dst, Eigen::Index d, const GaussianField& src,
              Eigen::Index s) {
  dst.positions.row(d) = src.positions.row(s);
  dst.rotations.row(d) = src.rotations.row(s);
  dst.log_scales.row(d) = src.log_scales.row(s);
  dst.opacity_logits(d) = src.opacity_logits(s);
  dst.sh.row(d) = src.sh.row(s);
}

}  // namespace

GaussianField apply_densify(const GaussianField& field, const DensifyPlan& plan,
                            const DensifyConfig& cfg) {
  GaussianField out = GaussianField::zeros(plan.output_size(), field.sh_degree);
  Eigen::Index row = 0;
  for (int src : plan.keep) copy_row(out, row++, field, src);
  for (int src : plan.clones) copy_row(out, row++, field, src);
  const Scalar shrink = std::log(cfg.split_scale_factor);
  for (const auto& child : plan.splits) {
    copy_row(out, row, field, child.source);
    const Mat3 rot = quaternion_to_matrix(
        normalize_quaternion(field.rotations.row(child.source).transpose()));
    const Vec3 scale = field.log_scales.row(child.source).transpose().array().exp();
    out.positions.row(row) += (rot * scale.cwiseProduct(child.unit_sample)).transpose();
    out.log_scales.row(row).array() -= shrink;
    ++row;
  }
  return out;
}

MatX3 apply_densify_positions(const MatX3& canonical, const GaussianField& posed,
                              const DensifyPlan& plan, const DensifyConfig& cfg) {
  MatX3 out(plan.output_size(), 3);
  Eigen::Index row = 0;
  for (int src : plan.keep) out.row(row++) = canonical.row(src);
  for (int src : plan.clones) out.row(row++) = canonical.row(src);
  const Scalar shrink = 1.0 / cfg.split_scale_factor;
  for (const auto& child : plan.splits) {
    const Vec3 scale = posed.log_scales.row(child.source).transpose().array().exp();
    out.row(row++) = canonical.row(child.source) +
                     (shrink * scale.cwiseProduct(child.unit_sample)).transpose();
  }
  return out;
}

AdamMoments remap_moments(const AdamMoments& moments, const DensifyPlan& plan) {
  AdamMoments out = AdamMoments::zeros(plan.output_size(), moments.m.cols());
  out.step = moments.step;
  Eigen::Index row = 0;
  for (int src : plan.keep) {
    out.m.row(row) = moments.m.row(src);
    out.v.row(row) = moments.v.row(src);
    ++row;
  }
  // Clones and split children start with zero moments.
  return out;
}

SceneDensifyResult densify_and_prune(const GaussianField& field,
                                     const VecX& mean_screen_grad,
                                     const DensifyConfig& cfg, Scalar scene_extent,
                                     std::mt19937_64& rng) {
  SceneDensifyResult r;
  r.plan = plan_densify(field, mean_screen_grad, cfg, scene_extent, rng);
  r.field = apply_densify(field, r.plan, cfg);
  return r;
}

}  // namespace stm
