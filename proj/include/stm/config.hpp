#pragma once

#include <string>
#include <vector>

#include "stm/losses.hpp"
#include "stm/mapping.hpp"

namespace stm {

struct LrSchedule {
  Scalar start = 0;
  Scalar end = 0;  // == start means constant
};

struct DensifyConfig {
  int scene_interval = 100;
  int avatar_interval = 600;
  Scalar grad_threshold = 2e-4;
  Scalar prune_opacity = 0.005;
  Scalar split_scale_factor = 1.6;
  Scalar clone_scale_fraction = 0.01;  // clone below this fraction of the extent
  int start_iteration = 500;           // inherited warmup / stop conventions
  int stop_iteration = 15000;
};

struct MappingConfig {
  MappingMode mode = MappingMode::Shared;
  int hidden = 64;
  std::vector<std::string> disabled;  // attribute names with mapping turned off
};

struct TrainConfig {
  int iterations = 20000;
  uint64_t seed = 0;
  bool deterministic = false;
  int threads = 0;

  LrSchedule position_lr{1.6e-4, 1.6e-6};
  LrSchedule mapping_lr{1e-3, 1e-5};
  // Paper-silent groups, inherited defaults; constant schedules.
  Scalar sh_lr = 2.5e-3;
  Scalar opacity_lr = 5e-2;
  Scalar scale_lr = 5e-3;
  Scalar rotation_lr = 1e-3;
  Scalar deform_lr = 1e-3;  // triplane + deformation heads

  DensifyConfig densify;
  LossWeights loss_weights;
  bool lbs_normalize = true;
  int knn_k = 6;
  MappingConfig mapping;

  int sh_degree = 3;
  int triplane_resolution = 64;
  int triplane_features = 16;
  int head_hidden = 128;

  int checkpoint_interval = 1000;
  Scalar scene_extent = 0;  // 0 = take from the dataset meta

  void validate() const;
};

TrainConfig train_config_from_json(const std::string& json_text);
std::string train_config_to_json(const TrainConfig& config);
TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& config, const std::string& path);

}  // namespace stm
