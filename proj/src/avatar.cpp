#include "stm/avatar.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace stm {

using json = nlohmann::json;

void AvatarModel::validate() const {
  triplane.validate();
  rig.validate();
  heads.validate(triplane.feature_dim());
  if (heads.joint_count != rig.joint_count())
    throw ConfigError("avatar: head joint count does not match rig");
  if (prior.weights.rows() != prior.vertices.rows() ||
      prior.weights.cols() != rig.joint_count())
    throw ShapeMismatchError("avatar: prior mesh weight shape mismatch");
  for (Eigen::Index i = 0; i < canonical_positions.rows(); ++i) {
    const Vec3 p = canonical_positions.row(i).transpose();
    if ((p.array() < triplane.box_min.array() - 1e-9).any() ||
        (p.array() > triplane.box_max.array() + 1e-9).any())
      throw ConfigError("avatar: canonical position outside the triplane box");
  }
}

AvatarGrads AvatarGrads::zeros(const AvatarModel& model) {
  AvatarGrads g;
  g.d_canonical_positions = MatX3::Zero(model.size(), 3);
  g.triplane = TriplaneGrad::zeros(model.triplane);
  g.heads = HeadGrads::zeros(model.heads);
  return g;
}

void AvatarGrads::add(const AvatarGrads& other) {
  d_canonical_positions += other.d_canonical_positions;
  triplane.add(other.triplane);
  heads.add(other.heads);
}

PosedAvatar pose_avatar_fwd(const AvatarModel& model, const Pose& pose,
                            const VecX& shape) {
  const Eigen::Index n = model.size();
  PosedAvatar out;

  out.features.resize(n, model.triplane.feature_dim());
  for (Eigen::Index i = 0; i < n; ++i)
    out.features.row(i) =
        query_triplane(model.triplane, model.canonical_positions.row(i).transpose())
            .transpose();

  out.head_out = run_heads(model.heads, out.features);
  out.lbs_weights = softmax_rows(out.head_out.lbs_logits);
  out.canonical_offset = model.canonical_positions + out.head_out.delta_position;
  out.transforms = joint_transforms(model.rig, pose, shape);

  const int k_count = model.rig.joint_count();
  out.field = GaussianField::zeros(n, model.sh_degree);
  out.field.positions = forward_skinning(out.canonical_offset, out.lbs_weights,
                                         out.transforms);

  out.blend_quats.resize(n, 4);
  out.canonical_quats.resize(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec4 qs = Vec4::Zero();
    for (int k = 0; k < k_count; ++k)
      qs += out.lbs_weights(i, k) * out.transforms[size_t(k)].rotation_quat;
    out.blend_quats.row(i) = qs.transpose();
    const Vec4 qc = Vec4(1, 0, 0, 0) + out.head_out.rotation.row(i).transpose();
    out.canonical_quats.row(i) = qc.transpose();
    out.field.rotations.row(i) =
        quaternion_multiply(qs / qs.norm(), qc).transpose();
  }

  out.field.log_scales = out.head_out.log_scale;
  out.field.log_scales.rowwise() += model.base_log_scale.transpose();
  out.field.opacity_logits =
      out.head_out.opacity_logit.array() + model.base_opacity_logit;
  out.field.sh = out.head_out.sh;
  return out;
}

AvatarGrads pose_avatar_backward(const AvatarModel& model, const PosedAvatar& cache,
                                 const RasterGradients& d_field,
                                 const MatX& d_lbs_weights) {
  const Eigen::Index n = model.size();
  const int k_count = model.rig.joint_count();
  AvatarGrads grads = AvatarGrads::zeros(model);

  HeadOutputs d_head;
  d_head.delta_position = MatX3::Zero(n, 3);
  d_head.sh = d_field.d_sh;
  d_head.opacity_logit = d_field.d_opacity_logits;
  d_head.rotation = MatX4::Zero(n, 4);
  d_head.log_scale = d_field.d_log_scales;
  d_head.lbs_logits = MatX::Zero(n, k_count);

  MatX d_weights = d_lbs_weights.size() > 0 ? d_lbs_weights : MatX::Zero(n, k_count);
  if (d_weights.rows() != n || d_weights.cols() != k_count)
    throw ShapeMismatchError("pose_avatar_backward: d_lbs_weights shape mismatch");

  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 d_pos = d_field.d_positions.row(i).transpose();
    const Vec3 pc = cache.canonical_offset.row(i).transpose();

    // Positions, residual blend: p = pc + sum_k w_k ((B_k - I) pc + b_k).
    Mat3 blended_rot = Mat3::Identity();
    for (int k = 0; k < k_count; ++k) {
      const auto& t = cache.transforms[size_t(k)];
      blended_rot += cache.lbs_weights(i, k) * (t.rotation - Mat3::Identity());
      d_weights(i, k) +=
          d_pos.dot((t.rotation - Mat3::Identity()) * pc + t.translation);
    }
    const Vec3 d_pc = blended_rot.transpose() * d_pos;
    grads.d_canonical_positions.row(i) += d_pc.transpose();
    d_head.delta_position.row(i) += d_pc.transpose();

    // Rotations: q_out = normalize(qs) * q_can.
    const Vec4 d_qout = d_field.d_rotations.row(i).transpose();
    const Vec4 qs = cache.blend_quats.row(i).transpose();
    const Scalar qs_norm = qs.norm();
    const Vec4 qh = qs / qs_norm;
    const Vec4 qc = cache.canonical_quats.row(i).transpose();

    // Quaternion product partials: out = a*b with a=qh, b=qc.
    const Scalar aw = qh[0], bw = qc[0];
    const Vec3 av = qh.tail<3>(), bv = qc.tail<3>();
    const Vec3 d_outv = d_qout.tail<3>();
    Vec4 d_a, d_b;
    d_a[0] = d_qout[0] * bw + d_outv.dot(bv);
    d_a.tail<3>() = -d_qout[0] * bv + bw * d_outv + bv.cross(d_outv);
    d_b[0] = d_qout[0] * aw + d_outv.dot(av);
    d_b.tail<3>() = -d_qout[0] * av + aw * d_outv + d_outv.cross(av);

    d_head.rotation.row(i) += d_b.transpose();
    const Vec4 d_qs = (d_a - qh * qh.dot(d_a)) / qs_norm;
    for (int k = 0; k < k_count; ++k)
      d_weights(i, k) += d_qs.dot(cache.transforms[size_t(k)].rotation_quat);
  }

  d_head.lbs_logits = softmax_rows_backward(cache.lbs_weights, d_weights);

  const MatX d_features = run_heads_backward(model.heads, cache.features, d_head,
                                             grads.heads);
  Vec3 d_query;
  for (Eigen::Index i = 0; i < n; ++i) {
    query_triplane_backward(model.triplane, model.canonical_positions.row(i).transpose(),
                            d_features.row(i).transpose(), grads.triplane, d_query);
    grads.d_canonical_positions.row(i) += d_query.transpose();
  }
  return grads;
}

std::string rig_to_json_string(const SkeletonRig& rig, const PriorMesh& mesh) {
  json j;
  json joints = json::array();
  for (const auto& joint : rig.joints) {
    json item;
    item["parent"] = joint.parent;
    item["rest_offset"] = {joint.rest_offset.x(), joint.rest_offset.y(),
                           joint.rest_offset.z()};
    joints.push_back(std::move(item));
  }
  j["joints"] = std::move(joints);
  if (rig.shape_basis.size() > 0) {
    json basis = json::array();
    for (Eigen::Index i = 0; i < rig.shape_basis.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index c = 0; c < rig.shape_basis.cols(); ++c)
        row.push_back(rig.shape_basis(i, c));
      basis.push_back(std::move(row));
    }
    j["shape_basis"] = std::move(basis);
  }
  json verts = json::array(), weights = json::array();
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    verts.push_back({mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2)});
    json row = json::array();
    for (Eigen::Index k = 0; k < mesh.weights.cols(); ++k)
      row.push_back(mesh.weights(i, k));
    weights.push_back(std::move(row));
  }
  j["mesh_vertices"] = std::move(verts);
  j["mesh_weights"] = std::move(weights);
  return j.dump(1, '\t');
}

void save_rig_json(const SkeletonRig& rig, const PriorMesh& mesh,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << rig_to_json_string(rig, mesh) << "\n";
}

void rig_from_json_string(const std::string& text, SkeletonRig& rig, PriorMesh& mesh) {
  json j = json::parse(text);
  rig.joints.clear();
  for (const auto& item : j.at("joints")) {
    SkeletonRig::Joint joint;
    joint.parent = item.at("parent").get<int>();
    const auto& off = item.at("rest_offset");
    joint.rest_offset = Vec3(off[0].get<double>(), off[1].get<double>(),
                             off[2].get<double>());
    rig.joints.push_back(joint);
  }
  rig.shape_basis = MatX();
  if (j.contains("shape_basis")) {
    const auto& basis = j["shape_basis"];
    if (!basis.empty()) {
      rig.shape_basis.resize(basis.size(), basis[0].size());
      for (Eigen::Index i = 0; i < rig.shape_basis.rows(); ++i)
        for (Eigen::Index c = 0; c < rig.shape_basis.cols(); ++c)
          rig.shape_basis(i, c) = basis[i][c].get<double>();
    }
  }
  const auto& verts = j.at("mesh_vertices");
  const auto& weights = j.at("mesh_weights");
  if (verts.size() != weights.size())
    throw IoError("rig json: vertex and weight counts differ");
  mesh.vertices.resize(verts.size(), 3);
  mesh.weights.resize(weights.size(),
                      weights.empty() ? 0 : Eigen::Index(weights[0].size()));
  for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
    for (int c = 0; c < 3; ++c) mesh.vertices(i, c) = verts[i][c].get<double>();
    for (Eigen::Index k = 0; k < mesh.weights.cols(); ++k)
      mesh.weights(i, k) = weights[i][k].get<double>();
  }
  rig.validate();
}

void load_rig_json(const std::string& path, SkeletonRig& rig, PriorMesh& mesh) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  rig_from_json_string(ss.str(), rig, mesh);
}

void save_pose_sequence(const std::vector<Pose>& poses, const std::string& path) {
  json arr = json::array();
  for (const Pose& p : poses) {
    json item;
    json rows = json::array();
    for (Eigen::Index k = 0; k < p.joint_rotations.rows(); ++k)
      rows.push_back({p.joint_rotations(k, 0), p.joint_rotations(k, 1),
                      p.joint_rotations(k, 2)});
    item["joint_rotations"] = std::move(rows);
    item["root_translation"] = {p.root_translation.x(), p.root_translation.y(),
                                p.root_translation.z()};
    arr.push_back(std::move(item));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << arr.dump(1, '\t') << "\n";
}

std::vector<Pose> load_pose_sequence(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  json arr;
  in >> arr;
  std::vector<Pose> poses;
  for (const auto& item : arr) {
    Pose p;
    const auto& rows = item.at("joint_rotations");
    p.joint_rotations.resize(rows.size(), 3);
    for (Eigen::Index k = 0; k < p.joint_rotations.rows(); ++k)
      for (int c = 0; c < 3; ++c) p.joint_rotations(k, c) = rows[k][c].get<double>();
    const auto& t = item.at("root_translation");
    p.root_translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
    poses.push_back(std::move(p));
  }
  return poses;
}

}  // namespace stm
