#pragma once

#include <random>
#include <vector>

#include "stm/config.hpp"
#include "stm/gaussian.hpp"
#include "stm/optimizer.hpp"

namespace stm {

// Clone/split/prune decisions, computed once on the input field:
//  - prune: activated opacity < prune threshold
//  - densify (mean screen gradient > threshold, not pruned):
//      clone when max activated scale < clone_scale_fraction * extent,
//      otherwise split into two samples at scale / split_scale_factor.
struct DensifyPlan {
  std::vector<int> keep;  // surviving original rows, in order
  std::vector<int> clones;
  struct SplitChild {
    int source;
    Vec3 unit_sample;  // standard normal draw, mapped by the applier
  };
  std::vector<SplitChild> splits;  // two entries per split primitive
  int pruned = 0;

  Eigen::Index output_size() const {
    return Eigen::Index(keep.size() + clones.size() + splits.size());
  }
};

DensifyPlan plan_densify(const GaussianField& field, const VecX& mean_screen_grad,
                         const DensifyConfig& cfg, Scalar scene_extent,
                         std::mt19937_64& rng);

// Scene application: clones copy rows; split children sample positions from
// the parent Gaussian and shrink scales.
GaussianField apply_densify(const GaussianField& field, const DensifyPlan& plan,
                            const DensifyConfig& cfg);

// Avatar application: only canonical positions persist; split children jitter
// by the head-predicted activated scale along the canonical axes.
MatX3 apply_densify_positions(const MatX3& canonical, const GaussianField& posed,
                              const DensifyPlan& plan, const DensifyConfig& cfg);

// Remaps optimizer moments to the new rows: kept rows carry over, new rows
// start at zero.
AdamMoments remap_moments(const AdamMoments& moments, const DensifyPlan& plan);

// Convenience wrapper matching the spec operation: plan + apply + moment
// remap over all five attribute groups of a scene field.
struct SceneDensifyResult {
  GaussianField field;
  DensifyPlan plan;
};
SceneDensifyResult densify_and_prune(const GaussianField& field,
                                     const VecX& mean_screen_grad,
                                     const DensifyConfig& cfg, Scalar scene_extent,
                                     std::mt19937_64& rng);

}  // namespace stm
