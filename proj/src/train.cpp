#include "stm/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "stm/field_io.hpp"

namespace stm {

namespace fs = std::filesystem;

MlpMoments MlpMoments::zeros_like(const Mlp& mlp) {
  MlpMoments m;
  m.w1 = AdamMoments::zeros_like(mlp.w1);
  m.b1 = AdamMoments::zeros(mlp.b1.size(), 1);
  m.w2 = AdamMoments::zeros_like(mlp.w2);
  m.b2 = AdamMoments::zeros(mlp.b2.size(), 1);
  return m;
}

namespace {

Scalar mean_knn_distance(const MatX3& points, int k) {
  const Eigen::Index n = points.rows();
  if (n < 2) return 0.1;
  Scalar total = 0;
  std::vector<Scalar> d;
  for (Eigen::Index i = 0; i < n; ++i) {
    d.clear();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) d.push_back((points.row(j) - points.row(i)).norm());
    const int kk = std::min<int>(k, int(d.size()));
    std::nth_element(d.begin(), d.begin() + (kk - 1), d.end());
    Scalar acc = 0;
    for (int j = 0; j < kk; ++j) acc += d[size_t(j)];
    total += acc / kk;
  }
  return total / Scalar(n);
}

void set_mapping_enabled(MappingStack& stack, const MappingConfig& cfg) {
  for (int a = 0; a < kAttributeCount; ++a) stack.enabled[size_t(a)] = true;
  for (const std::string& name : cfg.disabled)
    for (int a = 0; a < kAttributeCount; ++a)
      if (name == kAttributeNames[a]) stack.enabled[size_t(a)] = false;
}

}  // namespace

TrainState init_train_state(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  s.scene_extent = config.scene_extent > 0 ? config.scene_extent : dataset.extent;
  if (s.scene_extent <= 0)
    throw ConfigError("train: scene extent is unset (dataset meta or config)");

  // Scene from the provided initial point cloud: gray, translucent, scales
  // from the mean 3-NN spacing.
  s.scene = GaussianField::zeros(dataset.init_points.size(), config.sh_degree);
  s.scene.positions = dataset.init_points.positions;
  const Scalar nn = std::max(1e-3, mean_knn_distance(s.scene.positions, 3));
  s.scene.log_scales.setConstant(std::log(nn));
  s.scene.opacity_logits.setConstant(inverse_sigmoid(0.1));

  s.avatar = make_trainee_avatar(dataset.rig, dataset.prior, config.seed + 1,
                                 config.sh_degree, config.triplane_resolution,
                                 config.triplane_features, config.head_hidden);

  std::mt19937_64 map_rng(config.seed + 2);
  s.mapping = MappingStack::create(config.mapping.mode, config.sh_degree,
                                   config.mapping.hidden, map_rng);
  set_mapping_enabled(s.mapping, config.mapping);

  s.scene_m[0] = AdamMoments::zeros_like(s.scene.positions);
  s.scene_m[1] = AdamMoments::zeros_like(s.scene.rotations);
  s.scene_m[2] = AdamMoments::zeros_like(s.scene.log_scales);
  s.scene_m[3] = AdamMoments::zeros(s.scene.opacity_logits.size(), 1);
  s.scene_m[4] = AdamMoments::zeros_like(s.scene.sh);
  s.avatar_positions_m = AdamMoments::zeros_like(s.avatar.canonical_positions);
  for (int p = 0; p < 3; ++p)
    s.triplane_m[size_t(p)] = AdamMoments::zeros_like(s.avatar.triplane.planes[size_t(p)]);
  s.offset_m = MlpMoments::zeros_like(s.avatar.heads.offset);
  s.appearance_m = MlpMoments::zeros_like(s.avatar.heads.appearance);
  s.transform_m = MlpMoments::zeros_like(s.avatar.heads.transform);
  for (int a = 0; a < kAttributeCount; ++a) {
    s.map_shared_m[size_t(a)] = MlpMoments::zeros_like(s.mapping.shared[size_t(a)].mlp);
    s.map_scene_m[size_t(a)] = MlpMoments::zeros_like(s.mapping.scene[size_t(a)].mlp);
    s.map_avatar_m[size_t(a)] = MlpMoments::zeros_like(s.mapping.avatar[size_t(a)].mlp);
  }

  s.scene_grad_sum = MatX::Zero(s.scene.size(), 1);
  s.scene_grad_count = MatX::Zero(s.scene.size(), 1);
  s.avatar_grad_sum = MatX::Zero(s.avatar.size(), 1);
  s.avatar_grad_count = MatX::Zero(s.avatar.size(), 1);

  s.rng.seed(config.seed);
  return s;
}

Trainer::Trainer(const Dataset& dataset, const TrainConfig& config)
    : dataset_(dataset), state_(init_train_state(dataset, config)) {}

Trainer::Trainer(const Dataset& dataset, TrainState state)
    : dataset_(dataset), state_(std::move(state)) {}

std::vector<ParamGroupInfo> Trainer::parameter_groups() const {
  const TrainConfig& c = state_.config;
  std::vector<ParamGroupInfo> groups;
  auto constant = [](Scalar lr) { return LrSchedule{lr, lr}; };
  auto push = [&](const std::string& name, const LrSchedule& lr, Eigen::Index count) {
    groups.push_back({name, lr.start, lr.end, count});
  };
  push("scene.positions", c.position_lr, state_.scene.positions.size());
  push("avatar.canonical_positions", c.position_lr,
       state_.avatar.canonical_positions.size());
  push("scene.rotations", constant(c.rotation_lr), state_.scene.rotations.size());
  push("scene.log_scales", constant(c.scale_lr), state_.scene.log_scales.size());
  push("scene.opacity_logits", constant(c.opacity_lr),
       state_.scene.opacity_logits.size());
  push("scene.sh", constant(c.sh_lr), state_.scene.sh.size());
  Eigen::Index triplane_count = 0;
  for (const auto& p : state_.avatar.triplane.planes) triplane_count += p.size();
  push("avatar.triplane", constant(c.deform_lr), triplane_count);
  auto mlp_count = [](const Mlp& m) {
    return m.w1.size() + m.b1.size() + m.w2.size() + m.b2.size();
  };
  push("avatar.heads", constant(c.deform_lr),
       mlp_count(state_.avatar.heads.offset) + mlp_count(state_.avatar.heads.appearance) +
           mlp_count(state_.avatar.heads.transform));
  Eigen::Index map_count = 0;
  for (int a = 0; a < kAttributeCount; ++a) {
    map_count += mlp_count(state_.mapping.shared[size_t(a)].mlp);
    if (state_.mapping.mode == MappingMode::Separate) {
      map_count += mlp_count(state_.mapping.scene[size_t(a)].mlp);
      map_count += mlp_count(state_.mapping.avatar[size_t(a)].mlp);
    }
  }
  push("mapping", c.mapping_lr, map_count);
  return groups;
}

void Trainer::apply_adam(const RasterGradients& d_scene, const AvatarGrads& d_avatar,
                         const MappingGrads& d_mapping) {
  const TrainConfig& c = state_.config;
  const Scalar pos_lr =
      lr_at(state_.iteration, c.position_lr.start, c.position_lr.end, c.iterations);
  const Scalar map_lr =
      lr_at(state_.iteration, c.mapping_lr.start, c.mapping_lr.end, c.iterations);

  adam_step(state_.scene.positions, d_scene.d_positions, state_.scene_m[0], pos_lr);
  adam_step(state_.scene.rotations, d_scene.d_rotations, state_.scene_m[1], c.rotation_lr);
  adam_step(state_.scene.log_scales, d_scene.d_log_scales, state_.scene_m[2], c.scale_lr);
  adam_step(state_.scene.opacity_logits, d_scene.d_opacity_logits, state_.scene_m[3],
            c.opacity_lr);
  adam_step(state_.scene.sh, d_scene.d_sh, state_.scene_m[4], c.sh_lr);

  adam_step(state_.avatar.canonical_positions, d_avatar.d_canonical_positions,
            state_.avatar_positions_m, pos_lr);
  for (int p = 0; p < 3; ++p)
    adam_step(state_.avatar.triplane.planes[size_t(p)], d_avatar.triplane.planes[size_t(p)],
              state_.triplane_m[size_t(p)], c.deform_lr);
  auto step_mlp = [&](Mlp& mlp, const Mlp& g, MlpMoments& m, Scalar lr) {
    adam_step(mlp.w1, g.w1, m.w1, lr);
    adam_step(mlp.b1, g.b1, m.b1, lr);
    adam_step(mlp.w2, g.w2, m.w2, lr);
    adam_step(mlp.b2, g.b2, m.b2, lr);
  };
  step_mlp(state_.avatar.heads.offset, d_avatar.heads.offset, state_.offset_m, c.deform_lr);
  step_mlp(state_.avatar.heads.appearance, d_avatar.heads.appearance, state_.appearance_m,
           c.deform_lr);
  step_mlp(state_.avatar.heads.transform, d_avatar.heads.transform, state_.transform_m,
           c.deform_lr);

  if (state_.mapping.mode == MappingMode::Shared) {
    for (int a = 0; a < kAttributeCount; ++a)
      step_mlp(state_.mapping.shared[size_t(a)].mlp, d_mapping.shared[size_t(a)],
               state_.map_shared_m[size_t(a)], map_lr);
  } else if (state_.mapping.mode == MappingMode::Separate) {
    for (int a = 0; a < kAttributeCount; ++a) {
      step_mlp(state_.mapping.scene[size_t(a)].mlp, d_mapping.scene[size_t(a)],
               state_.map_scene_m[size_t(a)], map_lr);
      step_mlp(state_.mapping.avatar[size_t(a)].mlp, d_mapping.avatar[size_t(a)],
               state_.map_avatar_m[size_t(a)], map_lr);
    }
  }
}

void Trainer::maybe_densify(const PosedAvatar& posed) {
  const TrainConfig& c = state_.config;
  const int iter = state_.iteration;
  if (iter < c.densify.start_iteration || iter > c.densify.stop_iteration) return;

  if (iter % c.densify.scene_interval == 0) {
    VecX mean = VecX::Zero(state_.scene.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i)
      if (state_.scene_grad_count(i, 0) > 0)
        mean(i) = state_.scene_grad_sum(i, 0) / state_.scene_grad_count(i, 0);
    const DensifyPlan plan =
        plan_densify(state_.scene, mean, c.densify, state_.scene_extent, state_.rng);
    state_.scene = apply_densify(state_.scene, plan, c.densify);
    for (auto& m : state_.scene_m) m = remap_moments(m, plan);
    state_.scene_grad_sum = MatX::Zero(state_.scene.size(), 1);
    state_.scene_grad_count = MatX::Zero(state_.scene.size(), 1);
  }

  if (iter % c.densify.avatar_interval == 0) {
    VecX mean = VecX::Zero(state_.avatar.size());
    for (Eigen::Index i = 0; i < mean.size(); ++i)
      if (state_.avatar_grad_count(i, 0) > 0)
        mean(i) = state_.avatar_grad_sum(i, 0) / state_.avatar_grad_count(i, 0);
    const DensifyPlan plan =
        plan_densify(posed.field, mean, c.densify, state_.scene_extent, state_.rng);
    MatX3 canonical = apply_densify_positions(state_.avatar.canonical_positions,
                                              posed.field, plan, c.densify);
    // Keep canonical points inside the triplane box.
    for (Eigen::Index i = 0; i < canonical.rows(); ++i)
      for (int a = 0; a < 3; ++a)
        canonical(i, a) = std::clamp(canonical(i, a), state_.avatar.triplane.box_min[a],
                                     state_.avatar.triplane.box_max[a]);
    state_.avatar.canonical_positions = canonical;
    state_.avatar_positions_m = remap_moments(state_.avatar_positions_m, plan);
    state_.avatar_grad_sum = MatX::Zero(state_.avatar.size(), 1);
    state_.avatar_grad_count = MatX::Zero(state_.avatar.size(), 1);
  }
}

LossReport Trainer::step() {
  const TrainConfig& c = state_.config;
  if (dataset_.train_split.empty()) throw ConfigError("train: empty training split");
  std::uniform_int_distribution<size_t> pick(0, dataset_.train_split.size() - 1);
  const int frame_idx = dataset_.train_split[pick(state_.rng)];
  const SyntheticFrame& frame = dataset_.frames[size_t(frame_idx)];

  RasterConfig rcfg;
  rcfg.threads = c.threads;
  rcfg.deterministic = c.deterministic;

  const PosedAvatar posed = pose_avatar_fwd(state_.avatar, frame.pose);
  const MappedPair mapped = map_fields(state_.mapping, state_.scene, posed.field);
  const GaussianField full_field = concat_fields(mapped.scene, mapped.avatar);

  const RenderOutput full = render(full_field, frame.camera, dataset_.background, rcfg);
  const RenderOutput avatar_only = render(mapped.avatar, frame.camera, Vec3::Zero(), rcfg);

  Image avatar_target(frame.image.width, frame.image.height, 3);
  for (int y = 0; y < frame.image.height; ++y)
    for (int x = 0; x < frame.image.width; ++x) {
      const Scalar m = frame.mask.at(y, x);
      for (int ch = 0; ch < 3; ++ch)
        avatar_target.at(y, x, ch) = m > 0.5 ? frame.image.at(y, x, ch) : 0.0;
    }

  const MatX lbs_prior = knn_lbs_prior(posed.canonical_offset, dataset_.prior.vertices,
                                       dataset_.prior.weights, c.knn_k);

  TotalLossInputs inputs;
  inputs.full = &full;
  inputs.avatar = &avatar_only;
  inputs.target = &frame.image;
  inputs.avatar_target = &avatar_target;
  inputs.depth_est = &frame.depth_est;
  inputs.lbs_weights = &posed.lbs_weights;
  inputs.lbs_prior = &lbs_prior;
  const LossReport report = total_loss(inputs, c.loss_weights, nullptr, c.lbs_normalize);

  if (!std::isfinite(report.total)) {
    if (!out_dir_.empty())
      save_checkpoint(state_, (fs::path(out_dir_) / "checkpoint_abort.ckpt").string());
    throw Error("train: non-finite loss at iteration " + std::to_string(state_.iteration) +
                " (frame " + std::to_string(frame_idx) + ")");
  }

  // Upstream image gradients for both renders.
  Image d_full_color = rgb_l1_backward(full.color, frame.image, c.loss_weights.rgb);
  {
    const Image ssim_g = ssim_backward(full.color, frame.image, -c.loss_weights.ssim);
    for (size_t i = 0; i < d_full_color.data.size(); ++i)
      d_full_color.data[i] += ssim_g.data[i];
  }
  Image d_full_depth(full.depth.width, full.depth.height, 1);
  if (c.loss_weights.depth > 0 && !report.depth_skipped) {
    const Image valid = alpha_validity_mask(full.alpha);
    d_full_depth =
        pearson_depth_backward(full.depth, frame.depth_est, &valid, c.loss_weights.depth);
  }
  Image d_avatar_color = rgb_l1_backward(avatar_only.color, avatar_target, c.loss_weights.rgb);
  {
    const Image ssim_g = ssim_backward(avatar_only.color, avatar_target, -c.loss_weights.ssim);
    for (size_t i = 0; i < d_avatar_color.data.size(); ++i)
      d_avatar_color.data[i] += ssim_g.data[i];
  }
  const Image d_avatar_depth(avatar_only.depth.width, avatar_only.depth.height, 1);

  const RasterGradients full_grads =
      render_backward(full_field, frame.camera, dataset_.background, d_full_color,
                      d_full_depth, rcfg);
  const RasterGradients avatar_render_grads =
      render_backward(mapped.avatar, frame.camera, Vec3::Zero(), d_avatar_color,
                      d_avatar_depth, rcfg);

  // Split the concatenated gradients back into per-field blocks.
  const Eigen::Index ns = mapped.scene.size(), na = mapped.avatar.size();
  RasterGradients d_mapped_scene = RasterGradients::zeros(mapped.scene);
  RasterGradients d_mapped_avatar = RasterGradients::zeros(mapped.avatar);
  d_mapped_scene.d_positions = full_grads.d_positions.topRows(ns);
  d_mapped_scene.d_rotations = full_grads.d_rotations.topRows(ns);
  d_mapped_scene.d_log_scales = full_grads.d_log_scales.topRows(ns);
  d_mapped_scene.d_opacity_logits = full_grads.d_opacity_logits.head(ns);
  d_mapped_scene.d_sh = full_grads.d_sh.topRows(ns);
  d_mapped_scene.d_mean2d = full_grads.d_mean2d.topRows(ns);
  d_mapped_scene.visible = full_grads.visible.head(ns);
  d_mapped_avatar.d_positions = full_grads.d_positions.bottomRows(na);
  d_mapped_avatar.d_rotations = full_grads.d_rotations.bottomRows(na);
  d_mapped_avatar.d_log_scales = full_grads.d_log_scales.bottomRows(na);
  d_mapped_avatar.d_opacity_logits = full_grads.d_opacity_logits.tail(na);
  d_mapped_avatar.d_sh = full_grads.d_sh.bottomRows(na);
  d_mapped_avatar.d_mean2d = full_grads.d_mean2d.bottomRows(na);
  d_mapped_avatar.visible = full_grads.visible.tail(na);
  d_mapped_avatar.add(avatar_render_grads);

  RasterGradients d_scene = RasterGradients::zeros(state_.scene);
  RasterGradients d_posed = RasterGradients::zeros(posed.field);
  MappingGrads d_mapping = MappingGrads::zeros(state_.mapping);
  map_fields_backward(state_.mapping, state_.scene, posed.field, d_mapped_scene,
                      d_mapped_avatar, d_scene, d_posed, d_mapping);

  const MatX d_lbs = lbs_loss_backward(posed.lbs_weights, lbs_prior, c.lbs_normalize,
                                       c.loss_weights.lbs);
  const AvatarGrads d_avatar = pose_avatar_backward(state_.avatar, posed, d_posed, d_lbs);

  // Densification statistics, taken in screen space per backward pass.
  for (Eigen::Index i = 0; i < ns; ++i) {
    state_.scene_grad_sum(i, 0) += d_mapped_scene.d_mean2d.row(i).norm();
    state_.scene_grad_count(i, 0) += d_mapped_scene.visible(i);
  }
  for (Eigen::Index i = 0; i < na; ++i) {
    state_.avatar_grad_sum(i, 0) += d_mapped_avatar.d_mean2d.row(i).norm();
    state_.avatar_grad_count(i, 0) += d_mapped_avatar.visible(i);
  }

  apply_adam(d_scene, d_avatar, d_mapping);
  state_.iteration += 1;
  maybe_densify(posed);
  return report;
}

void Trainer::run(const std::string& out_dir) {
  out_dir_ = out_dir;
  fs::create_directories(out_dir);
  std::ofstream metrics((fs::path(out_dir) / "metrics.csv").string(),
                        state_.iteration == 0 ? std::ios::trunc : std::ios::app);
  if (!metrics) throw IoError("cannot write metrics.csv in " + out_dir);
  if (state_.iteration == 0)
    metrics << "iteration,rgb_full,ssim_full,lpips_full,rgb_avatar,ssim_avatar,"
               "lpips_avatar,lbs,depth,total\n";

  const int total = state_.config.iterations;
  while (state_.iteration < total) {
    const LossReport r = step();
    metrics << state_.iteration << ',' << r.rgb_full << ',' << r.ssim_full << ','
            << r.lpips_full << ',' << r.rgb_avatar << ',' << r.ssim_avatar << ','
            << r.lpips_avatar << ',' << r.lbs << ',' << r.depth << ',' << r.total
            << '\n';
    if (state_.config.checkpoint_interval > 0 &&
        state_.iteration % state_.config.checkpoint_interval == 0 &&
        state_.iteration < total) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06d.ckpt", state_.iteration);
      save_checkpoint(state_, (fs::path(out_dir) / name).string());
    }
  }
  save_checkpoint(state_, (fs::path(out_dir) / "checkpoint.ckpt").string());
}

}  // namespace stm
