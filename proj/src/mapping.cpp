#include "stm/mapping.hpp"

namespace stm {

const char* const kAttributeNames[kAttributeCount] = {
    "position", "rotation", "scale", "opacity", "color"};

MappingMode mapping_mode_from_string(const std::string& s) {
  if (s == "shared") return MappingMode::Shared;
  if (s == "separate") return MappingMode::Separate;
  if (s == "off") return MappingMode::Off;
  throw ConfigError("mapping.mode must be shared, separate, or off (got " + s + ")");
}

std::string mapping_mode_to_string(MappingMode m) {
  switch (m) {
    case MappingMode::Shared: return "shared";
    case MappingMode::Separate: return "separate";
    case MappingMode::Off: return "off";
  }
  return "shared";
}

MatX AttributeMapper::apply(const MatX& values) const {
  if (values.cols() != mlp.input_dim())
    throw ConfigError("map_attribute: value width does not match mapper");
  return values + mlp.forward(values);
}

MatX AttributeMapper::apply_backward(const MatX& values, const MatX& d_out,
                                     Mlp& grad) const {
  return d_out + mlp.backward(values, d_out, grad);
}

std::array<int, kAttributeCount> MappingStack::attribute_dims(int sh_degree) {
  const int b = (sh_degree + 1) * (sh_degree + 1);
  return {3, 4, 3, 1, 3 * b};
}

MappingStack MappingStack::create(MappingMode mode, int sh_degree, int hidden,
                                  std::mt19937_64& rng) {
  MappingStack s;
  s.mode = mode;
  s.sh_degree = sh_degree;
  const auto dims = attribute_dims(sh_degree);
  for (int a = 0; a < kAttributeCount; ++a) {
    s.shared[size_t(a)].mlp = Mlp::create(dims[size_t(a)], hidden, dims[size_t(a)], rng);
    s.scene[size_t(a)].mlp = Mlp::create(dims[size_t(a)], hidden, dims[size_t(a)], rng);
    s.avatar[size_t(a)].mlp = Mlp::create(dims[size_t(a)], hidden, dims[size_t(a)], rng);
  }
  return s;
}

void MappingStack::validate() const {
  const auto dims = attribute_dims(sh_degree);
  for (int a = 0; a < kAttributeCount; ++a) {
    if (shared[size_t(a)].mlp.input_dim() != dims[size_t(a)] ||
        shared[size_t(a)].mlp.output_dim() != dims[size_t(a)])
      throw ConfigError("mapping stack: mapper width mismatch");
  }
}

MappingGrads MappingGrads::zeros(const MappingStack& stack) {
  MappingGrads g;
  auto zero_like = [](const Mlp& m) {
    return Mlp::zeros(m.input_dim(), m.hidden_dim(), m.output_dim());
  };
  for (int a = 0; a < kAttributeCount; ++a) {
    g.shared[size_t(a)] = zero_like(stack.shared[size_t(a)].mlp);
    g.scene[size_t(a)] = zero_like(stack.scene[size_t(a)].mlp);
    g.avatar[size_t(a)] = zero_like(stack.avatar[size_t(a)].mlp);
  }
  return g;
}

void MappingGrads::add(const MappingGrads& other) {
  auto acc = [](Mlp& a, const Mlp& b) {
    a.w1 += b.w1; a.b1 += b.b1; a.w2 += b.w2; a.b2 += b.b2;
  };
  for (int a = 0; a < kAttributeCount; ++a) {
    acc(shared[size_t(a)], other.shared[size_t(a)]);
    acc(scene[size_t(a)], other.scene[size_t(a)]);
    acc(avatar[size_t(a)], other.avatar[size_t(a)]);
  }
}

MatX map_attribute(const AttributeMapper& mapper, const MatX& values) {
  return mapper.apply(values);
}

namespace {

MatX attribute_values(const GaussianField& f, int attr) {
  switch (attr) {
    case 0: return f.positions;
    case 1: return f.rotations;
    case 2: return f.log_scales;
    case 3: return f.opacity_logits;
    default: return f.sh;
  }
}

void set_attribute(GaussianField& f, int attr, const MatX& v) {
  switch (attr) {
    case 0: f.positions = v; break;
    case 1: f.rotations = v; break;
    case 2: f.log_scales = v; break;
    case 3: f.opacity_logits = v; break;
    default: f.sh = v; break;
  }
}

GaussianField map_one(const MappingStack& stack,
                      const std::array<AttributeMapper, kAttributeCount>& mappers,
                      const GaussianField& f) {
  GaussianField out = f;
  for (int a = 0; a < kAttributeCount; ++a) {
    if (!stack.enabled[size_t(a)]) continue;
    set_attribute(out, a, mappers[size_t(a)].apply(attribute_values(f, a)));
  }
  return out;
}

MatX attribute_grad(const RasterGradients& g, int attr) {
  switch (attr) {
    case 0: return g.d_positions;
    case 1: return g.d_rotations;
    case 2: return g.d_log_scales;
    case 3: return g.d_opacity_logits;
    default: return g.d_sh;
  }
}

void set_attribute_grad(RasterGradients& g, int attr, const MatX& v) {
  switch (attr) {
    case 0: g.d_positions = v; break;
    case 1: g.d_rotations = v; break;
    case 2: g.d_log_scales = v; break;
    case 3: g.d_opacity_logits = v; break;
    default: g.d_sh = v; break;
  }
}

void backward_one(const MappingStack& stack,
                  const std::array<AttributeMapper, kAttributeCount>& mappers,
                  std::array<Mlp, kAttributeCount>& grads, const GaussianField& in,
                  const RasterGradients& d_out, RasterGradients& d_in) {
  d_in = d_out;  // identity for disabled attributes and the screen-space aux
  for (int a = 0; a < kAttributeCount; ++a) {
    if (!stack.enabled[size_t(a)]) continue;
    set_attribute_grad(d_in, a,
                       mappers[size_t(a)].apply_backward(attribute_values(in, a),
                                                         attribute_grad(d_out, a),
                                                         grads[size_t(a)]));
  }
}

}  // namespace

MappedPair map_fields(const MappingStack& stack, const GaussianField& scene,
                      const GaussianField& avatar) {
  if (scene.sh_degree != avatar.sh_degree)
    throw IncompatibleFieldsError("map_fields: SH degrees differ");
  MappedPair out;
  switch (stack.mode) {
    case MappingMode::Off:
      out.scene = scene;
      out.avatar = avatar;
      break;
    case MappingMode::Shared:
      out.scene = map_one(stack, stack.shared, scene);
      out.avatar = map_one(stack, stack.shared, avatar);
      break;
    case MappingMode::Separate:
      out.scene = map_one(stack, stack.scene, scene);
      out.avatar = map_one(stack, stack.avatar, avatar);
      break;
  }
  return out;
}

GaussianField map_then_concat(const MappingStack& stack, const GaussianField& scene,
                              const GaussianField& avatar) {
  const MappedPair mapped = map_fields(stack, scene, avatar);
  return concat_fields(mapped.scene, mapped.avatar);
}

void map_fields_backward(const MappingStack& stack, const GaussianField& scene,
                         const GaussianField& avatar,
                         const RasterGradients& d_scene_out,
                         const RasterGradients& d_avatar_out,
                         RasterGradients& d_scene_in, RasterGradients& d_avatar_in,
                         MappingGrads& grads) {
  switch (stack.mode) {
    case MappingMode::Off:
      d_scene_in = d_scene_out;
      d_avatar_in = d_avatar_out;
      break;
    case MappingMode::Shared:
      backward_one(stack, stack.shared, grads.shared, scene, d_scene_out, d_scene_in);
      backward_one(stack, stack.shared, grads.shared, avatar, d_avatar_out, d_avatar_in);
      break;
    case MappingMode::Separate:
      backward_one(stack, stack.scene, grads.scene, scene, d_scene_out, d_scene_in);
      backward_one(stack, stack.avatar, grads.avatar, avatar, d_avatar_out, d_avatar_in);
      break;
  }
}

}  // namespace stm
