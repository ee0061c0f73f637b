#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stm/field_io.hpp"
#include "stm/train.hpp"

namespace stm {

using json = nlohmann::json;

namespace {

constexpr char kMagic[] = "STMCKPT1\n";

// Flat little-endian double payload with a named index in the JSON header.
struct TensorWriter {
  json index = json::array();
  std::string payload;

  void add(const std::string& name, const MatX& m) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    const size_t bytes = size_t(m.size()) * sizeof(double);
    const size_t at = payload.size();
    payload.resize(at + bytes);
    if (m.size() > 0) std::memcpy(payload.data() + at, m.data(), bytes);
  }
  void add(const std::string& name, const VecX& v) { add(name, MatX(v)); }
  void add(const std::string& name, const MatX3& m) { add(name, MatX(m)); }
  void add(const std::string& name, const MatX4& m) { add(name, MatX(m)); }
};

struct TensorReader {
  const json* index = nullptr;
  const char* payload = nullptr;
  size_t payload_size = 0;
  size_t offset = 0;
  size_t cursor = 0;

  MatX next(const std::string& expected_name) {
    const json& entry = (*index)[cursor++];
    if (entry.at("name").get<std::string>() != expected_name)
      throw IoError("checkpoint: expected tensor " + expected_name + ", found " +
                    entry.at("name").get<std::string>());
    const Eigen::Index rows = entry.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = entry.at("cols").get<Eigen::Index>();
    MatX m(rows, cols);
    const size_t bytes = size_t(m.size()) * sizeof(double);
    if (offset + bytes > payload_size) throw IoError("checkpoint: truncated payload");
    if (m.size() > 0) std::memcpy(m.data(), payload + offset, bytes);
    offset += bytes;
    return m;
  }
};

void write_moments(TensorWriter& w, json& steps, const std::string& name,
                   const AdamMoments& m) {
  w.add(name + ".m", m.m);
  w.add(name + ".v", m.v);
  steps[name] = m.step;
}

AdamMoments read_moments(TensorReader& r, const json& steps, const std::string& name) {
  AdamMoments m;
  m.m = r.next(name + ".m");
  m.v = r.next(name + ".v");
  m.step = steps.at(name).get<int>();
  return m;
}

void write_mlp(TensorWriter& w, const std::string& name, const Mlp& mlp) {
  w.add(name + ".w1", mlp.w1);
  w.add(name + ".b1", mlp.b1);
  w.add(name + ".w2", mlp.w2);
  w.add(name + ".b2", mlp.b2);
}

Mlp read_mlp(TensorReader& r, const std::string& name) {
  Mlp mlp;
  mlp.w1 = r.next(name + ".w1");
  mlp.b1 = r.next(name + ".b1");
  mlp.w2 = r.next(name + ".w2");
  mlp.b2 = r.next(name + ".b2");
  return mlp;
}

void write_mlp_moments(TensorWriter& w, json& steps, const std::string& name,
                       const MlpMoments& m) {
  write_moments(w, steps, name + ".w1", m.w1);
  write_moments(w, steps, name + ".b1", m.b1);
  write_moments(w, steps, name + ".w2", m.w2);
  write_moments(w, steps, name + ".b2", m.b2);
}

MlpMoments read_mlp_moments(TensorReader& r, const json& steps, const std::string& name) {
  MlpMoments m;
  m.w1 = read_moments(r, steps, name + ".w1");
  m.b1 = read_moments(r, steps, name + ".b1");
  m.w2 = read_moments(r, steps, name + ".w2");
  m.b2 = read_moments(r, steps, name + ".b2");
  return m;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  TensorWriter w;
  json steps = json::object();

  w.add("avatar.canonical_positions", state.avatar.canonical_positions);
  for (int p = 0; p < 3; ++p)
    w.add("avatar.triplane." + std::to_string(p), state.avatar.triplane.planes[size_t(p)]);
  write_mlp(w, "avatar.heads.offset", state.avatar.heads.offset);
  write_mlp(w, "avatar.heads.appearance", state.avatar.heads.appearance);
  write_mlp(w, "avatar.heads.transform", state.avatar.heads.transform);
  for (int a = 0; a < kAttributeCount; ++a) {
    const std::string an = kAttributeNames[a];
    write_mlp(w, "mapping.shared." + an, state.mapping.shared[size_t(a)].mlp);
    write_mlp(w, "mapping.scene." + an, state.mapping.scene[size_t(a)].mlp);
    write_mlp(w, "mapping.avatar." + an, state.mapping.avatar[size_t(a)].mlp);
  }
  const char* scene_groups[5] = {"positions", "rotations", "log_scales",
                                 "opacity_logits", "sh"};
  for (int g = 0; g < 5; ++g)
    write_moments(w, steps, std::string("moments.scene.") + scene_groups[g],
                  state.scene_m[size_t(g)]);
  write_moments(w, steps, "moments.avatar.positions", state.avatar_positions_m);
  for (int p = 0; p < 3; ++p)
    write_moments(w, steps, "moments.avatar.triplane." + std::to_string(p),
                  state.triplane_m[size_t(p)]);
  write_mlp_moments(w, steps, "moments.avatar.heads.offset", state.offset_m);
  write_mlp_moments(w, steps, "moments.avatar.heads.appearance", state.appearance_m);
  write_mlp_moments(w, steps, "moments.avatar.heads.transform", state.transform_m);
  for (int a = 0; a < kAttributeCount; ++a) {
    const std::string an = kAttributeNames[a];
    write_mlp_moments(w, steps, "moments.mapping.shared." + an, state.map_shared_m[size_t(a)]);
    write_mlp_moments(w, steps, "moments.mapping.scene." + an, state.map_scene_m[size_t(a)]);
    write_mlp_moments(w, steps, "moments.mapping.avatar." + an, state.map_avatar_m[size_t(a)]);
  }
  w.add("accum.scene_grad_sum", state.scene_grad_sum);
  w.add("accum.scene_grad_count", state.scene_grad_count);
  w.add("accum.avatar_grad_sum", state.avatar_grad_sum);
  w.add("accum.avatar_grad_count", state.avatar_grad_count);

  const std::string scene_ply = field_to_ply_bytes(state.scene, /*double_precision=*/true);

  std::ostringstream rng_stream;
  rng_stream << state.rng;

  json header;
  header["version"] = 1;
  header["iteration"] = state.iteration;
  header["rng"] = rng_stream.str();
  header["config"] = json::parse(train_config_to_json(state.config));
  header["scene_extent"] = state.scene_extent;
  header["scene_ply_bytes"] = scene_ply.size();
  header["rig"] = json::parse(rig_to_json_string(state.avatar.rig, state.avatar.prior));
  header["avatar"] = {
      {"sh_degree", state.avatar.sh_degree},
      {"base_log_scale", {state.avatar.base_log_scale[0], state.avatar.base_log_scale[1],
                          state.avatar.base_log_scale[2]}},
      {"base_opacity_logit", state.avatar.base_opacity_logit},
      {"triplane",
       {{"resolution", state.avatar.triplane.resolution},
        {"features", state.avatar.triplane.features},
        {"box_min", {state.avatar.triplane.box_min[0], state.avatar.triplane.box_min[1],
                     state.avatar.triplane.box_min[2]}},
        {"box_max", {state.avatar.triplane.box_max[0], state.avatar.triplane.box_max[1],
                     state.avatar.triplane.box_max[2]}}}},
      {"head_sh_basis", state.avatar.heads.sh_basis},
      {"head_joint_count", state.avatar.heads.joint_count}};
  header["mapping"] = {{"mode", mapping_mode_to_string(state.mapping.mode)},
                       {"sh_degree", state.mapping.sh_degree},
                       {"enabled", state.mapping.enabled}};
  header["tensors"] = w.index;
  header["moment_steps"] = steps;

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out.write(kMagic, std::streamsize(std::strlen(kMagic)));
  const uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(header_text.data(), std::streamsize(header_text.size()));
  out.write(scene_ply.data(), std::streamsize(scene_ply.size()));
  out.write(w.payload.data(), std::streamsize(w.payload.size()));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();

  const size_t magic_len = std::strlen(kMagic);
  if (bytes.size() < magic_len + 8 || bytes.compare(0, magic_len, kMagic) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + magic_len, sizeof header_len);
  const size_t header_at = magic_len + sizeof header_len;
  if (bytes.size() < header_at + header_len) throw IoError("checkpoint: truncated header");
  const json header = json::parse(bytes.substr(header_at, header_len));
  if (header.at("version").get<int>() != 1)
    throw IoError("checkpoint: unsupported version");

  TrainState s;
  s.iteration = header.at("iteration").get<int>();
  s.config = train_config_from_json(header.at("config").dump());
  s.scene_extent = header.at("scene_extent").get<Scalar>();
  {
    std::istringstream rng_stream(header.at("rng").get<std::string>());
    rng_stream >> s.rng;
  }

  const size_t ply_at = header_at + header_len;
  const size_t ply_len = header.at("scene_ply_bytes").get<size_t>();
  if (bytes.size() < ply_at + ply_len) throw IoError("checkpoint: truncated field block");
  s.scene = field_from_ply_bytes(bytes.substr(ply_at, ply_len));

  TensorReader r;
  const json& index = header.at("tensors");
  r.index = &index;
  r.payload = bytes.data() + ply_at + ply_len;
  r.payload_size = bytes.size() - (ply_at + ply_len);

  rig_from_json_string(header.at("rig").dump(), s.avatar.rig, s.avatar.prior);
  const json& av = header.at("avatar");
  s.avatar.sh_degree = av.at("sh_degree").get<int>();
  const auto& bls = av.at("base_log_scale");
  s.avatar.base_log_scale =
      Vec3(bls[0].get<Scalar>(), bls[1].get<Scalar>(), bls[2].get<Scalar>());
  s.avatar.base_opacity_logit = av.at("base_opacity_logit").get<Scalar>();
  const json& tp = av.at("triplane");
  s.avatar.triplane.resolution = tp.at("resolution").get<int>();
  s.avatar.triplane.features = tp.at("features").get<int>();
  const auto& bmin = tp.at("box_min");
  const auto& bmax = tp.at("box_max");
  s.avatar.triplane.box_min =
      Vec3(bmin[0].get<Scalar>(), bmin[1].get<Scalar>(), bmin[2].get<Scalar>());
  s.avatar.triplane.box_max =
      Vec3(bmax[0].get<Scalar>(), bmax[1].get<Scalar>(), bmax[2].get<Scalar>());
  s.avatar.heads.sh_basis = av.at("head_sh_basis").get<int>();
  s.avatar.heads.joint_count = av.at("head_joint_count").get<int>();

  s.avatar.canonical_positions = r.next("avatar.canonical_positions");
  for (int p = 0; p < 3; ++p)
    s.avatar.triplane.planes[size_t(p)] = r.next("avatar.triplane." + std::to_string(p));
  s.avatar.heads.offset = read_mlp(r, "avatar.heads.offset");
  s.avatar.heads.appearance = read_mlp(r, "avatar.heads.appearance");
  s.avatar.heads.transform = read_mlp(r, "avatar.heads.transform");

  const json& mp = header.at("mapping");
  s.mapping.mode = mapping_mode_from_string(mp.at("mode").get<std::string>());
  s.mapping.sh_degree = mp.at("sh_degree").get<int>();
  const auto enabled = mp.at("enabled").get<std::vector<bool>>();
  for (int a = 0; a < kAttributeCount; ++a) s.mapping.enabled[size_t(a)] = enabled[size_t(a)];
  for (int a = 0; a < kAttributeCount; ++a) {
    const std::string an = kAttributeNames[a];
    s.mapping.shared[size_t(a)].mlp = read_mlp(r, "mapping.shared." + an);
    s.mapping.scene[size_t(a)].mlp = read_mlp(r, "mapping.scene." + an);
    s.mapping.avatar[size_t(a)].mlp = read_mlp(r, "mapping.avatar." + an);
  }

  const json& steps = header.at("moment_steps");
  const char* scene_groups[5] = {"positions", "rotations", "log_scales",
                                 "opacity_logits", "sh"};
  for (int g = 0; g < 5; ++g)
    s.scene_m[size_t(g)] = read_moments(r, steps, std::string("moments.scene.") + scene_groups[g]);
  s.avatar_positions_m = read_moments(r, steps, "moments.avatar.positions");
  for (int p = 0; p < 3; ++p)
    s.triplane_m[size_t(p)] =
        read_moments(r, steps, "moments.avatar.triplane." + std::to_string(p));
  s.offset_m = read_mlp_moments(r, steps, "moments.avatar.heads.offset");
  s.appearance_m = read_mlp_moments(r, steps, "moments.avatar.heads.appearance");
  s.transform_m = read_mlp_moments(r, steps, "moments.avatar.heads.transform");
  for (int a = 0; a < kAttributeCount; ++a) {
    const std::string an = kAttributeNames[a];
    s.map_shared_m[size_t(a)] = read_mlp_moments(r, steps, "moments.mapping.shared." + an);
    s.map_scene_m[size_t(a)] = read_mlp_moments(r, steps, "moments.mapping.scene." + an);
    s.map_avatar_m[size_t(a)] = read_mlp_moments(r, steps, "moments.mapping.avatar." + an);
  }
  s.scene_grad_sum = r.next("accum.scene_grad_sum");
  s.scene_grad_count = r.next("accum.scene_grad_count");
  s.avatar_grad_sum = r.next("accum.avatar_grad_sum");
  s.avatar_grad_count = r.next("accum.avatar_grad_count");
  return s;
}

}  // namespace stm
