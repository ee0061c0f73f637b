#include "stm/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace stm {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (iterations < 0) throw ConfigError("config: iterations must be >= 0");
  if (densify.scene_interval < 1 || densify.avatar_interval < 1)
    throw ConfigError("config: densify intervals must be >= 1");
  auto check_lr = [](const LrSchedule& s, const char* name) {
    if (!(s.start >= s.end && s.end > 0))
      throw ConfigError(std::string("config: ") + name + " must satisfy start >= end > 0");
  };
  check_lr(position_lr, "position_lr");
  check_lr(mapping_lr, "mapping_lr");
  if (loss_weights.rgb < 0 || loss_weights.ssim < 0 || loss_weights.lpips < 0 ||
      loss_weights.lbs < 0 || loss_weights.depth < 0)
    throw ConfigError("config: loss weights must be nonnegative");
  if (knn_k < 1) throw ConfigError("config: knn_k must be >= 1");
  if (sh_degree < 0 || sh_degree > 3)
    throw ConfigError("config: sh_degree must be in [0, 3]");
  for (const std::string& name : mapping.disabled) {
    bool known = false;
    for (const char* attr : kAttributeNames) known = known || name == attr;
    if (!known) throw ConfigError("config: unknown mapping attribute " + name);
  }
}

namespace {

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void read_schedule(const json& j, const char* key, LrSchedule& s) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  s.start = v.at("start").get<Scalar>();
  s.end = v.at("end").get<Scalar>();
}

}  // namespace

TrainConfig train_config_from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  read_if(j, "iterations", c.iterations);
  read_if(j, "seed", c.seed);
  read_if(j, "deterministic", c.deterministic);
  read_if(j, "threads", c.threads);
  read_schedule(j, "position_lr", c.position_lr);
  read_schedule(j, "mapping_lr", c.mapping_lr);
  if (j.contains("lrs")) {
    const json& l = j["lrs"];
    read_if(l, "sh", c.sh_lr);
    read_if(l, "opacity", c.opacity_lr);
    read_if(l, "scale", c.scale_lr);
    read_if(l, "rotation", c.rotation_lr);
    read_if(l, "deform", c.deform_lr);
  }
  if (j.contains("densify")) {
    const json& d = j["densify"];
    read_if(d, "scene_interval", c.densify.scene_interval);
    read_if(d, "avatar_interval", c.densify.avatar_interval);
    read_if(d, "grad_threshold", c.densify.grad_threshold);
    read_if(d, "prune_opacity", c.densify.prune_opacity);
    read_if(d, "split_scale_factor", c.densify.split_scale_factor);
    read_if(d, "clone_scale_fraction", c.densify.clone_scale_fraction);
    read_if(d, "start_iteration", c.densify.start_iteration);
    read_if(d, "stop_iteration", c.densify.stop_iteration);
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    read_if(l, "rgb", c.loss_weights.rgb);
    read_if(l, "ssim", c.loss_weights.ssim);
    read_if(l, "lpips", c.loss_weights.lpips);
    read_if(l, "lbs", c.loss_weights.lbs);
    read_if(l, "depth", c.loss_weights.depth);
    read_if(l, "lbs_normalize", c.lbs_normalize);
    read_if(l, "knn_k", c.knn_k);
  }
  if (j.contains("mapping")) {
    const json& m = j["mapping"];
    if (m.contains("mode"))
      c.mapping.mode = mapping_mode_from_string(m.at("mode").get<std::string>());
    read_if(m, "hidden", c.mapping.hidden);
    read_if(m, "disabled", c.mapping.disabled);
  }
  read_if(j, "sh_degree", c.sh_degree);
  if (j.contains("avatar")) {
    const json& a = j["avatar"];
    read_if(a, "triplane_resolution", c.triplane_resolution);
    read_if(a, "triplane_features", c.triplane_features);
    read_if(a, "head_hidden", c.head_hidden);
  }
  read_if(j, "checkpoint_interval", c.checkpoint_interval);
  read_if(j, "scene_extent", c.scene_extent);
  c.validate();
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["iterations"] = c.iterations;
  j["seed"] = c.seed;
  j["deterministic"] = c.deterministic;
  j["threads"] = c.threads;
  j["position_lr"] = {{"start", c.position_lr.start}, {"end", c.position_lr.end}};
  j["mapping_lr"] = {{"start", c.mapping_lr.start}, {"end", c.mapping_lr.end}};
  j["lrs"] = {{"sh", c.sh_lr}, {"opacity", c.opacity_lr}, {"scale", c.scale_lr},
              {"rotation", c.rotation_lr}, {"deform", c.deform_lr}};
  j["densify"] = {{"scene_interval", c.densify.scene_interval},
                  {"avatar_interval", c.densify.avatar_interval},
                  {"grad_threshold", c.densify.grad_threshold},
                  {"prune_opacity", c.densify.prune_opacity},
                  {"split_scale_factor", c.densify.split_scale_factor},
                  {"clone_scale_fraction", c.densify.clone_scale_fraction},
                  {"start_iteration", c.densify.start_iteration},
                  {"stop_iteration", c.densify.stop_iteration}};
  j["loss"] = {{"rgb", c.loss_weights.rgb},     {"ssim", c.loss_weights.ssim},
               {"lpips", c.loss_weights.lpips}, {"lbs", c.loss_weights.lbs},
               {"depth", c.loss_weights.depth}, {"lbs_normalize", c.lbs_normalize},
               {"knn_k", c.knn_k}};
  j["mapping"] = {{"mode", mapping_mode_to_string(c.mapping.mode)},
                  {"hidden", c.mapping.hidden},
                  {"disabled", c.mapping.disabled}};
  j["sh_degree"] = c.sh_degree;
  j["avatar"] = {{"triplane_resolution", c.triplane_resolution},
                 {"triplane_features", c.triplane_features},
                 {"head_hidden", c.head_hidden}};
  j["checkpoint_interval"] = c.checkpoint_interval;
  j["scene_extent"] = c.scene_extent;
  return j.dump(1, '\t');
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return train_config_from_json(ss.str());
}

void save_train_config(const TrainConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << train_config_to_json(config) << "\n";
}

}  // namespace stm
