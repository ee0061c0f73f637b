#include <CLI11.hpp>

#include <iostream>

#include "stm/commands.hpp"

using namespace stm::cli;

int main(int argc, char** argv) {
  CLI::App app{"Separate-then-Map human-scene Gaussian splatting"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->add_option("--out", synth.out, "Output dataset directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--frames", synth.frames, "Frame count");
  synth_cmd->add_option("--primitives", synth.primitives, "Scene primitive count");
  synth_cmd->add_option("--width", synth.width, "Image width");
  synth_cmd->add_option("--height", synth.height, "Image height");
  synth_cmd->add_option("--extent", synth.extent, "Scene extent (scene units)");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Optimize a model on a dataset");
  train_cmd->add_option("--data", train.data, "Dataset directory")->required();
  train_cmd->add_option("--out", train.out, "Output run directory")->required();
  train_cmd->add_option("--config", train.config_path, "Training config JSON");
  train_cmd->add_option("--resume", train.resume_checkpoint, "Checkpoint to resume");
  train_cmd->add_option("--iters", train.iters, "Iteration count override");
  train_cmd->add_option("--seed", train.seed, "Seed override");
  train_cmd->add_flag("--deterministic", train.deterministic,
                      "Single-threaded bit-exact mode");
  train_cmd->add_option("--mapping-mode", train.mapping_mode,
                        "shared | separate | off");
  train_cmd->add_option("--disable-mapping", train.disable_mapping,
                        "Attribute mappers to disable");
  train_cmd->add_option("--depth-weight", train.depth_weight,
                        "Depth loss weight override");
  train_cmd->add_option("--threads", train.threads, "Worker thread cap");

  RenderOptions render;
  auto* render_cmd = app.add_subcommand("render", "Render a trained checkpoint");
  render_cmd->add_option("--checkpoint", render.checkpoint, "Checkpoint file")->required();
  render_cmd->add_option("--out", render.out, "Output image directory")->required();
  render_cmd->add_option("--layer", render.layer, "full | scene | avatar");
  render_cmd->add_option("--data", render.data, "Render this dataset's cameras/poses");
  render_cmd->add_option("--frames", render.frames, "Frame cap / orbit length");
  render_cmd->add_flag("--deterministic", render.deterministic, "Bit-exact mode");
  render_cmd->add_option("--threads", render.threads, "Worker thread cap");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint against a dataset");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "Dataset directory")->required();
  eval_cmd->add_option("--out", eval.out, "Report directory")->required();
  eval_cmd->add_option("--split", eval.split, "test | train | all");
  eval_cmd->add_option("--threads", eval.threads, "Worker thread cap");

  AnimateOptions animate;
  auto* animate_cmd =
      app.add_subcommand("animate", "Novel pose / novel scene composition");
  animate_cmd->add_option("--checkpoint", animate.checkpoint, "Avatar checkpoint")
      ->required();
  animate_cmd->add_option("--out", animate.out, "Output image directory")->required();
  animate_cmd->add_option("--poses", animate.poses, "Pose-sequence JSON");
  animate_cmd->add_option("--scene-checkpoint", animate.scene_checkpoint,
                          "Compose into this checkpoint's scene");
  animate_cmd->add_flag("--empty-scene", animate.empty_scene,
                        "Render the avatar over the background only");
  animate_cmd->add_option("--data", animate.data, "Camera (and default pose) source");
  animate_cmd->add_option("--frames", animate.frames, "Frame cap");
  double place[3] = {0, 0, 0};
  animate_cmd->add_option("--place-x", place[0], "Placement translation x");
  animate_cmd->add_option("--place-y", place[1], "Placement translation y");
  animate_cmd->add_option("--place-z", place[2], "Placement translation z");
  animate_cmd->add_option("--place-yaw", animate.place_yaw_degrees,
                          "Placement yaw (degrees)");
  animate_cmd->add_option("--threads", animate.threads, "Worker thread cap");

  AblateOptions ablate;
  auto* ablate_cmd = app.add_subcommand("ablate", "Run the mapping ablation grid");
  ablate_cmd->add_option("--data", ablate.data, "Dataset directory")->required();
  ablate_cmd->add_option("--out", ablate.out, "Output directory")->required();
  ablate_cmd->add_option("--config", ablate.config_path, "Base config JSON");
  ablate_cmd->add_option("--iters", ablate.iters, "Iterations per run");
  ablate_cmd->add_option("--seeds", ablate.seeds, "Seeds to average over");
  ablate_cmd->add_option("--rows", ablate.rows, "Subset of rows a..g");
  ablate_cmd->add_flag("--deterministic", ablate.deterministic, "Bit-exact mode");
  ablate_cmd->add_option("--threads", ablate.threads, "Worker thread cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // exits 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    CommandResult result;
    if (*synth_cmd) result = cmd_synth(synth);
    else if (*train_cmd) result = cmd_train(train);
    else if (*render_cmd) result = cmd_render(render);
    else if (*eval_cmd) result = cmd_eval(eval);
    else if (*animate_cmd) {
      animate.place_translation = stm::Vec3(place[0], place[1], place[2]);
      result = cmd_animate(animate);
    } else if (*ablate_cmd) result = cmd_ablate(ablate);

    if (result.code == 0) {
      std::cout << result.summary << "\n";
      for (const std::string& artifact : result.artifacts)
        std::cout << "  " << artifact << "\n";
    }
    return result.code;
  } catch (const stm::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
