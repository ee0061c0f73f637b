#include "stm/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stm/field_io.hpp"
#include "stm/image_io.hpp"
#include "stm/synth.hpp"
#include "stm/train.hpp"

namespace stm::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string frame_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", i);
  return buf;
}

CommandResult usage_error(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return {1, message, {}};
}

GaussianField transform_field(const GaussianField& field, const Mat3& rotation,
                              const Vec3& translation) {
  GaussianField out = field;
  out.positions = (field.positions * rotation.transpose()).rowwise() +
                  translation.transpose();
  Vec4 rq;
  {
    // Rotation matrix to quaternion, w >= 0 branch is fine for placements.
    const Scalar tr = rotation.trace();
    const Scalar w = std::sqrt(std::max(0.0, 1.0 + tr)) / 2.0;
    const Scalar x = (rotation(2, 1) - rotation(1, 2)) / (4 * w);
    const Scalar y = (rotation(0, 2) - rotation(2, 0)) / (4 * w);
    const Scalar z = (rotation(1, 0) - rotation(0, 1)) / (4 * w);
    rq = Vec4(w, x, y, z);
  }
  for (Eigen::Index i = 0; i < out.size(); ++i)
    out.rotations.row(i) =
        quaternion_multiply(rq, field.rotations.row(i).transpose()).transpose();
  return out;
}

std::vector<Camera> orbit_cameras(int n, Scalar extent, int width, int height) {
  std::vector<Camera> cams;
  for (int i = 0; i < n; ++i) {
    const Scalar ang = 2 * M_PI * i / std::max(1, n);
    const Vec3 eye(1.05 * extent * std::cos(ang), 0.5 * extent,
                   1.05 * extent * std::sin(ang));
    cams.push_back(Camera::look_at(eye, Vec3(0, 0.6, 0), Vec3(0, 1, 0), 0.95 * width,
                                   0.95 * height, width, height));
  }
  return cams;
}

json report_to_json(const QualityReport& report) {
  json frames = json::array();
  for (size_t i = 0; i < report.per_frame.size(); ++i) {
    const FrameScore& s = report.per_frame[i];
    json row;
    row["frame"] = report.frame_indices[i];
    row["psnr"] = s.psnr;
    row["ssim"] = s.ssim;
    if (s.has_mask) {
      row["mask_psnr"] = s.mask_psnr;
      row["crop_psnr"] = s.crop_psnr;
      row["band_psnr"] = s.band_psnr;
    }
    frames.push_back(std::move(row));
  }
  json j;
  j["frames"] = std::move(frames);
  j["mean"] = {{"psnr", report.mean.psnr},
               {"ssim", report.mean.ssim},
               {"mask_psnr", report.mean.mask_psnr},
               {"crop_psnr", report.mean.crop_psnr},
               {"band_psnr", report.mean.band_psnr}};
  return j;
}

std::string report_to_markdown(const QualityReport& report, const std::string& label) {
  std::ostringstream md;
  md << "| Frames | PSNR (dB) | SSIM | Human PSNR (dB) | Boundary PSNR (dB) |\n";
  md << "|---|---|---|---|---|\n";
  char line[256];
  std::snprintf(line, sizeof line, "| %s (%zu frames) | %.2f | %.4f | %.2f | %.2f |\n",
                label.c_str(), report.per_frame.size(), report.mean.psnr,
                report.mean.ssim, report.mean.mask_psnr, report.mean.band_psnr);
  md << line;
  return md.str();
}

}  // namespace

CommandResult cmd_synth(const SynthOptions& opt) {
  if (opt.out.empty()) return usage_error("synth: --out is required");
  if (opt.frames < 1) return usage_error("synth: --frames must be >= 1");
  if (opt.primitives < 1) return usage_error("synth: --primitives must be >= 1");

  const GaussianField scene =
      make_scene(opt.seed, opt.primitives, opt.extent, /*sh_degree=*/3);
  const GroundTruthAvatar avatar = make_gt_avatar(opt.seed + 1, /*sh_degree=*/3);
  SyntheticSequence seq =
      make_sequence(scene, avatar, opt.frames, opt.seed, opt.width, opt.height);
  seq.extent = opt.extent;
  save_sequence(seq, opt.out);

  CommandResult r;
  r.summary = "wrote " + std::to_string(opt.frames) + "-frame synthetic sequence (" +
              std::to_string(scene.size()) + " scene + " +
              std::to_string(avatar.canonical.size()) + " avatar primitives)";
  r.artifacts = {opt.out + "/meta.json", opt.out + "/cameras.json",
                 opt.out + "/poses.json", opt.out + "/rig.json"};
  return r;
}

namespace {

TrainConfig resolve_train_config(const TrainOptions& opt) {
  TrainConfig config;
  if (!opt.config_path.empty()) config = load_train_config(opt.config_path);
  if (opt.iters >= 0) config.iterations = opt.iters;
  if (opt.seed >= 0) config.seed = uint64_t(opt.seed);
  if (opt.deterministic) config.deterministic = true;
  if (!opt.mapping_mode.empty())
    config.mapping.mode = mapping_mode_from_string(opt.mapping_mode);
  if (!opt.disable_mapping.empty()) config.mapping.disabled = opt.disable_mapping;
  if (opt.depth_weight >= 0) config.loss_weights.depth = opt.depth_weight;
  if (opt.threads >= 0) config.threads = opt.threads;
  config.validate();
  return config;
}

}  // namespace

CommandResult cmd_train(const TrainOptions& opt) {
  if (opt.data.empty()) return usage_error("train: --data is required");
  if (opt.out.empty()) return usage_error("train: --out is required");
  if (!fs::exists(fs::path(opt.data) / "meta.json"))
    return usage_error("train: missing dataset at " + opt.data);
  if (!opt.config_path.empty() && !fs::exists(opt.config_path))
    return usage_error("train: missing config file " + opt.config_path);

  const Dataset dataset = load_dataset(opt.data);
  CommandResult r;
  if (!opt.resume_checkpoint.empty()) {
    if (!fs::exists(opt.resume_checkpoint))
      return usage_error("train: missing checkpoint " + opt.resume_checkpoint);
    TrainState state = load_checkpoint(opt.resume_checkpoint);
    if (opt.iters >= 0) state.config.iterations = opt.iters;
    if (opt.deterministic) state.config.deterministic = true;
    if (opt.threads >= 0) state.config.threads = opt.threads;
    Trainer trainer(dataset, std::move(state));
    trainer.run(opt.out);
    r.summary = "resumed to iteration " + std::to_string(trainer.state().iteration);
  } else {
    const TrainConfig config = resolve_train_config(opt);
    save_train_config(config, (fs::path(opt.out).string() + "_config.json"));
    fs::create_directories(opt.out);
    fs::rename(opt.out + "_config.json", (fs::path(opt.out) / "config.json").string());
    Trainer trainer(dataset, config);
    trainer.run(opt.out);
    r.summary = "trained " + std::to_string(trainer.state().iteration) + " iterations (" +
                std::to_string(trainer.state().scene.size()) + " scene primitives, " +
                std::to_string(trainer.state().avatar.size()) + " avatar primitives)";
  }
  r.artifacts = {opt.out + "/checkpoint.ckpt", opt.out + "/metrics.csv"};
  return r;
}

CommandResult cmd_render(const RenderOptions& opt) {
  if (opt.checkpoint.empty() || opt.out.empty())
    return usage_error("render: --checkpoint and --out are required");
  if (!fs::exists(opt.checkpoint))
    return usage_error("render: missing checkpoint " + opt.checkpoint);
  if (opt.layer != "full" && opt.layer != "scene" && opt.layer != "avatar")
    return usage_error("render: --layer must be full, scene, or avatar");
  if (!opt.data.empty() && !fs::exists(fs::path(opt.data) / "meta.json"))
    return usage_error("render: missing dataset at " + opt.data);

  const TrainState state = load_checkpoint(opt.checkpoint);
  RasterConfig rcfg;
  rcfg.threads = opt.threads;
  rcfg.deterministic = opt.deterministic;

  std::vector<Camera> cameras;
  std::vector<Pose> poses;
  Vec3 background(0.1, 0.1, 0.12);
  if (!opt.data.empty()) {
    const Dataset ds = load_dataset(opt.data);
    background = ds.background;
    for (const auto& f : ds.frames) {
      cameras.push_back(f.camera);
      poses.push_back(f.pose);
    }
  } else {
    cameras = orbit_cameras(opt.frames, state.scene_extent, 64, 64);
    for (int i = 0; i < opt.frames; ++i)
      poses.push_back(Pose::identity(state.avatar.rig.joint_count()));
  }
  if (opt.frames > 0 && int(cameras.size()) > opt.frames) {
    cameras.resize(size_t(opt.frames));
    poses.resize(size_t(opt.frames));
  }

  fs::create_directories(opt.out);
  for (size_t i = 0; i < cameras.size(); ++i) {
    GaussianField field;
    if (opt.layer == "scene") {
      field = map_fields(state.mapping, state.scene,
                         GaussianField::empty(state.scene.sh_degree))
                  .scene;
    } else {
      const GaussianField posed = pose_avatar(state.avatar, poses[i]);
      if (opt.layer == "avatar")
        field = map_fields(state.mapping, state.scene, posed).avatar;
      else
        field = map_then_concat(state.mapping, state.scene, posed);
    }
    const Vec3 bg = opt.layer == "avatar" ? Vec3::Zero() : background;
    const RenderOutput out = render(field, cameras[i], bg, rcfg);
    save_png(out.color, (fs::path(opt.out) / (frame_name(int(i)) + ".png")).string());
    save_pfm(out.depth, (fs::path(opt.out) / (frame_name(int(i)) + "_depth.pfm")).string());
  }

  CommandResult r;
  r.summary = "rendered " + std::to_string(cameras.size()) + " " + opt.layer + " frames";
  r.artifacts = {opt.out};
  return r;
}

CommandResult cmd_eval(const EvalOptions& opt) {
  if (opt.checkpoint.empty() || opt.data.empty() || opt.out.empty())
    return usage_error("eval: --checkpoint, --data, and --out are required");
  if (!fs::exists(opt.checkpoint))
    return usage_error("eval: missing checkpoint " + opt.checkpoint);
  if (!fs::exists(fs::path(opt.data) / "meta.json"))
    return usage_error("eval: missing dataset at " + opt.data);
  if (opt.split != "test" && opt.split != "train" && opt.split != "all")
    return usage_error("eval: --split must be test, train, or all");

  const TrainState state = load_checkpoint(opt.checkpoint);
  const Dataset ds = load_dataset(opt.data);
  std::vector<int> indices;
  if (opt.split == "test") indices = ds.test_split;
  else if (opt.split == "train") indices = ds.train_split;
  else
    for (int i = 0; i < int(ds.frames.size()); ++i) indices.push_back(i);
  if (indices.empty()) return usage_error("eval: empty split " + opt.split);

  RasterConfig rcfg;
  rcfg.threads = opt.threads;
  const QualityReport report = evaluate(state.scene, state.avatar, state.mapping,
                                        ds.frames, indices, ds.background, rcfg);

  fs::create_directories(opt.out);
  const std::string json_path = (fs::path(opt.out) / "report.json").string();
  const std::string md_path = (fs::path(opt.out) / "report.md").string();
  {
    std::ofstream js(json_path);
    js << report_to_json(report).dump(1, '\t') << "\n";
    std::ofstream md(md_path);
    md << report_to_markdown(report, opt.split);
  }

  char buf[160];
  std::snprintf(buf, sizeof buf,
                "%s split: PSNR %.2f dB, SSIM %.4f, human PSNR %.2f dB, boundary %.2f dB",
                opt.split.c_str(), report.mean.psnr, report.mean.ssim,
                report.mean.mask_psnr, report.mean.band_psnr);
  CommandResult r;
  r.summary = buf;
  r.artifacts = {json_path, md_path};
  return r;
}

CommandResult cmd_animate(const AnimateOptions& opt) {
  if (opt.checkpoint.empty() || opt.out.empty())
    return usage_error("animate: --checkpoint and --out are required");
  if (!fs::exists(opt.checkpoint))
    return usage_error("animate: missing checkpoint " + opt.checkpoint);
  if (!opt.poses.empty() && !fs::exists(opt.poses))
    return usage_error("animate: missing pose sequence " + opt.poses);
  if (!opt.scene_checkpoint.empty() && !fs::exists(opt.scene_checkpoint))
    return usage_error("animate: missing scene checkpoint " + opt.scene_checkpoint);

  const TrainState state = load_checkpoint(opt.checkpoint);
  GaussianField scene = state.scene;
  if (opt.empty_scene)
    scene = GaussianField::empty(state.scene.sh_degree);
  else if (!opt.scene_checkpoint.empty())
    scene = load_checkpoint(opt.scene_checkpoint).scene;

  std::vector<Pose> poses;
  if (!opt.poses.empty())
    poses = load_pose_sequence(opt.poses);

  std::vector<Camera> cameras;
  Vec3 background(0.1, 0.1, 0.12);
  if (!opt.data.empty()) {
    if (!fs::exists(fs::path(opt.data) / "meta.json"))
      return usage_error("animate: missing dataset at " + opt.data);
    const Dataset ds = load_dataset(opt.data);
    background = ds.background;
    for (const auto& f : ds.frames) {
      cameras.push_back(f.camera);
      if (opt.poses.empty()) poses.push_back(f.pose);
    }
  }
  if (poses.empty())
    return usage_error("animate: need --poses or --data for the motion sequence");
  if (cameras.empty())
    cameras = orbit_cameras(int(poses.size()), std::max<Scalar>(state.scene_extent, 1.0),
                            64, 64);
  size_t n = std::min(cameras.size(), poses.size());
  if (opt.frames > 0) n = std::min(n, size_t(opt.frames));

  const Scalar yaw = opt.place_yaw_degrees * M_PI / 180.0;
  Mat3 place_rot;
  place_rot << std::cos(yaw), 0, std::sin(yaw), 0, 1, 0, -std::sin(yaw), 0, std::cos(yaw);

  RasterConfig rcfg;
  rcfg.threads = opt.threads;
  fs::create_directories(opt.out);
  for (size_t i = 0; i < n; ++i) {
    GaussianField posed = pose_avatar(state.avatar, poses[i]);
    if (opt.place_yaw_degrees != 0 || opt.place_translation.norm() > 0)
      posed = transform_field(posed, place_rot, opt.place_translation);
    const GaussianField field = map_then_concat(state.mapping, scene, posed);
    const RenderOutput out = render(field, cameras[i], background, rcfg);
    save_png(out.color, (fs::path(opt.out) / (frame_name(int(i)) + ".png")).string());
  }

  CommandResult r;
  r.summary = "animated " + std::to_string(n) + " frames";
  r.artifacts = {opt.out};
  return r;
}

namespace {

struct AblationRow {
  char id;
  std::string label;
  std::function<void(TrainConfig&)> configure;
};

std::vector<AblationRow> ablation_rows() {
  const Scalar depth_on = 0.02;
  return {
      {'a', "depth only (mapping off)",
       [=](TrainConfig& c) {
         c.mapping.mode = MappingMode::Off;
         c.loss_weights.depth = depth_on;
       }},
      {'b', "shared mapping (no depth)",
       [](TrainConfig& c) {
         c.mapping.mode = MappingMode::Shared;
         c.loss_weights.depth = 0;
       }},
      {'c', "separate MLPs (no depth)",
       [](TrainConfig& c) {
         c.mapping.mode = MappingMode::Separate;
         c.loss_weights.depth = 0;
       }},
      {'d', "full w/o position mapping",
       [=](TrainConfig& c) {
         c.mapping.mode = MappingMode::Shared;
         c.mapping.disabled = {"position"};
         c.loss_weights.depth = depth_on;
       }},
      {'e', "full w/o opacity mapping",
       [=](TrainConfig& c) {
         c.mapping.mode = MappingMode::Shared;
         c.mapping.disabled = {"opacity"};
         c.loss_weights.depth = depth_on;
       }},
      {'f', "full w/o color mapping",
       [=](TrainConfig& c) {
         c.mapping.mode = MappingMode::Shared;
         c.mapping.disabled = {"color"};
         c.loss_weights.depth = depth_on;
       }},
      {'g', "full (shared mapping + depth)",
       [=](TrainConfig& c) {
         c.mapping.mode = MappingMode::Shared;
         c.loss_weights.depth = depth_on;
       }},
  };
}

}  // namespace

CommandResult cmd_ablate(const AblateOptions& opt) {
  if (opt.data.empty() || opt.out.empty())
    return usage_error("ablate: --data and --out are required");
  if (!fs::exists(fs::path(opt.data) / "meta.json"))
    return usage_error("ablate: missing dataset at " + opt.data);
  for (char row : opt.rows)
    if (row < 'a' || row > 'g') return usage_error("ablate: rows must be within a..g");

  const Dataset dataset = load_dataset(opt.data);
  TrainConfig base;
  if (!opt.config_path.empty()) base = load_train_config(opt.config_path);
  base.iterations = opt.iters;
  base.deterministic = opt.deterministic;
  if (opt.threads >= 0) base.threads = opt.threads;

  fs::create_directories(opt.out);
  json table = json::array();
  std::ostringstream md;
  md << "| Row | Variant | Config hash | PSNR (dB) | SSIM | Human PSNR (dB) | "
        "Boundary PSNR (dB) |\n|---|---|---|---|---|---|---|\n";

  for (const AblationRow& row : ablation_rows()) {
    if (opt.rows.find(row.id) == std::string::npos) continue;
    TrainConfig config = base;
    row.configure(config);
    config.validate();
    const std::string config_json = train_config_to_json(config);
    const size_t config_hash = std::hash<std::string>{}(config_json);

    FrameScore mean;
    int mask_frames = 0;
    for (uint64_t seed : opt.seeds) {
      TrainConfig seeded = config;
      seeded.seed = seed;
      const std::string run_dir =
          (fs::path(opt.out) / (std::string("row_") + row.id + "_seed" +
                                std::to_string(seed))).string();
      Trainer trainer(dataset, seeded);
      trainer.run(run_dir);
      const QualityReport report =
          evaluate(trainer.state().scene, trainer.state().avatar,
                   trainer.state().mapping, dataset.frames, dataset.test_split,
                   dataset.background);
      mean.psnr += report.mean.psnr;
      mean.ssim += report.mean.ssim;
      if (report.mean.has_mask) {
        mean.mask_psnr += report.mean.mask_psnr;
        mean.band_psnr += report.mean.band_psnr;
        ++mask_frames;
      }
    }
    const int n = int(opt.seeds.size());
    mean.psnr /= n;
    mean.ssim /= n;
    if (mask_frames > 0) {
      mean.mask_psnr /= mask_frames;
      mean.band_psnr /= mask_frames;
    }

    json entry;
    entry["row"] = std::string(1, row.id);
    entry["label"] = row.label;
    entry["config_hash"] = config_hash;
    entry["config"] = json::parse(config_json);
    entry["psnr"] = mean.psnr;
    entry["ssim"] = mean.ssim;
    entry["mask_psnr"] = mean.mask_psnr;
    entry["band_psnr"] = mean.band_psnr;
    table.push_back(std::move(entry));

    char line[256];
    std::snprintf(line, sizeof line,
                  "| (%c) | %s | %016zx | %.2f | %.4f | %.2f | %.2f |\n", row.id,
                  row.label.c_str(), config_hash, mean.psnr, mean.ssim, mean.mask_psnr,
                  mean.band_psnr);
    md << line;
    std::cout << "row (" << row.id << ") " << row.label << ": PSNR " << mean.psnr
              << " dB, boundary " << mean.band_psnr << " dB\n";
  }

  const std::string json_path = (fs::path(opt.out) / "ablation.json").string();
  const std::string md_path = (fs::path(opt.out) / "ablation.md").string();
  {
    std::ofstream js(json_path);
    js << table.dump(1, '\t') << "\n";
    std::ofstream m(md_path);
    m << md.str();
  }

  CommandResult r;
  r.summary = "ablation grid finished (" + std::to_string(table.size()) + " rows x " +
              std::to_string(opt.seeds.size()) + " seeds)";
  r.artifacts = {json_path, md_path};
  return r;
}

}  // namespace stm::cli
