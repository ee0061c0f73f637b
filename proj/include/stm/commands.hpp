#pragma once

#include <string>
#include <vector>

#include "stm/types.hpp"

namespace stm::cli {

struct CommandResult {
  int code = 0;  // 0 success, 1 usage error, 2 runtime error
  std::string summary;
  std::vector<std::string> artifacts;
};

struct SynthOptions {
  std::string out;
  uint64_t seed = 0;
  int frames = 60;
  int primitives = 500;
  int width = 64;
  int height = 64;
  Scalar extent = 4.0;
};
CommandResult cmd_synth(const SynthOptions& opt);

struct TrainOptions {
  std::string data;
  std::string out;
  std::string config_path;
  std::string resume_checkpoint;
  // Flag overrides; negative/empty means "leave the config value".
  int iters = -1;
  long long seed = -1;
  bool deterministic = false;
  std::string mapping_mode;
  std::vector<std::string> disable_mapping;
  Scalar depth_weight = -1;
  int threads = -1;
};
CommandResult cmd_train(const TrainOptions& opt);

struct RenderOptions {
  std::string checkpoint;
  std::string out;
  std::string layer = "full";  // full | scene | avatar
  std::string data;            // render the dataset's cameras/poses when set
  int frames = 24;             // orbit length when no dataset is given
  bool deterministic = false;
  int threads = 0;
};
CommandResult cmd_render(const RenderOptions& opt);

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string split = "test";  // test | train | all
  int threads = 0;
};
CommandResult cmd_eval(const EvalOptions& opt);

struct AnimateOptions {
  std::string checkpoint;
  std::string poses;           // pose-sequence JSON
  std::string out;
  std::string scene_checkpoint;  // optional: swap in another scene
  bool empty_scene = false;
  std::string data;            // cameras source; orbit otherwise
  int frames = -1;             // cap / orbit length
  Vec3 place_translation = Vec3::Zero();
  Scalar place_yaw_degrees = 0;
  int threads = 0;
};
CommandResult cmd_animate(const AnimateOptions& opt);

struct AblateOptions {
  std::string data;
  std::string out;
  std::string config_path;
  int iters = 5000;
  std::vector<uint64_t> seeds = {0};
  std::string rows = "abcdefg";
  bool deterministic = false;
  int threads = -1;
};
CommandResult cmd_ablate(const AblateOptions& opt);

}  // namespace stm::cli
