#pragma once

#include <string>
#include <vector>

#include "stm/avatar.hpp"
#include "stm/config.hpp"
#include "stm/densify.hpp"
#include "stm/losses.hpp"
#include "stm/mapping.hpp"
#include "stm/optimizer.hpp"
#include "stm/synth.hpp"

namespace stm {

struct MlpMoments {
  AdamMoments w1, b1, w2, b2;
  static MlpMoments zeros_like(const Mlp& mlp);
};

// Full optimization state: both fields, the mapping stack, Adam moments for
// every parameter group, densification accumulators, and the RNG stream.
struct TrainState {
  GaussianField scene;
  AvatarModel avatar;
  MappingStack mapping;

  // Scene moment groups: positions, rotations, log scales, opacity, sh.
  std::array<AdamMoments, 5> scene_m;
  AdamMoments avatar_positions_m;
  std::array<AdamMoments, 3> triplane_m;
  MlpMoments offset_m, appearance_m, transform_m;
  std::array<MlpMoments, kAttributeCount> map_shared_m, map_scene_m, map_avatar_m;

  MatX scene_grad_sum;    // N x 1 accumulated screen gradient norms
  MatX scene_grad_count;  // N x 1 visibility counts
  MatX avatar_grad_sum;
  MatX avatar_grad_count;

  int iteration = 0;
  std::mt19937_64 rng;
  TrainConfig config;
  Scalar scene_extent = 0;
};

TrainState init_train_state(const Dataset& dataset, const TrainConfig& config);

struct ParamGroupInfo {
  std::string name;
  Scalar lr_start = 0;
  Scalar lr_end = 0;
  Eigen::Index count = 0;
};

class Trainer {
 public:
  Trainer(const Dataset& dataset, const TrainConfig& config);
  Trainer(const Dataset& dataset, TrainState state);  // resume

  // One optimization step: sample frame, pose, map, render, backward, Adam,
  // scheduled densify/prune. Throws on a non-finite loss after writing an
  // emergency checkpoint next to `out_dir` when one was configured.
  LossReport step();

  // Full loop: metrics.csv plus periodic and final checkpoints in out_dir.
  void run(const std::string& out_dir);

  const TrainState& state() const { return state_; }
  TrainState& mutable_state() { return state_; }
  const Dataset& dataset() const { return dataset_; }

  // Config-to-group learning rate binding table.
  std::vector<ParamGroupInfo> parameter_groups() const;

 private:
  void apply_adam(const RasterGradients& d_scene, const AvatarGrads& d_avatar,
                  const MappingGrads& d_mapping);
  void maybe_densify(const PosedAvatar& posed);

  const Dataset& dataset_;
  TrainState state_;
  std::string out_dir_;
};

void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace stm
