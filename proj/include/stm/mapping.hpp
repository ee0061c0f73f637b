#pragma once

#include <array>
#include <random>
#include <string>

#include "stm/gaussian.hpp"
#include "stm/heads.hpp"
#include "stm/raster.hpp"

namespace stm {

enum class MappingMode { Shared, Separate, Off };

MappingMode mapping_mode_from_string(const std::string& s);
std::string mapping_mode_to_string(MappingMode m);

// One residual transformation per Gaussian attribute. Operates on raw
// (pre-activation) attribute values; rows map independently:
// v' = v + Linear2(ReLU(Linear1(v))).
struct AttributeMapper {
  Mlp mlp;
  MatX apply(const MatX& values) const;
  // Residual backward: returns d_values, accumulates parameter grads.
  MatX apply_backward(const MatX& values, const MatX& d_out, Mlp& grad) const;
};

// Attribute order: position, rotation, log scale, opacity logit, SH (flat 3B).
constexpr int kAttributeCount = 5;
extern const char* const kAttributeNames[kAttributeCount];

struct MappingStack {
  MappingMode mode = MappingMode::Shared;
  int sh_degree = 3;
  std::array<AttributeMapper, kAttributeCount> shared;
  std::array<AttributeMapper, kAttributeCount> scene;   // separate mode only
  std::array<AttributeMapper, kAttributeCount> avatar;  // separate mode only
  std::array<bool, kAttributeCount> enabled = {true, true, true, true, true};

  // Initialization: first layer uniform +-1/sqrt(d_i), second layer zero, so
  // every mapper starts as the exact identity.
  static MappingStack create(MappingMode mode, int sh_degree, int hidden,
                             std::mt19937_64& rng);
  static std::array<int, kAttributeCount> attribute_dims(int sh_degree);
  void validate() const;
};

struct MappingGrads {
  std::array<Mlp, kAttributeCount> shared;
  std::array<Mlp, kAttributeCount> scene;
  std::array<Mlp, kAttributeCount> avatar;
  static MappingGrads zeros(const MappingStack& stack);
  void add(const MappingGrads& other);
};

MatX map_attribute(const AttributeMapper& mapper, const MatX& values);

struct MappedPair {
  GaussianField scene;
  GaussianField avatar;
};

// Shared mode runs the same mapper over the matching attribute of both
// fields; separate mode uses per-field mappers; off passes through.
MappedPair map_fields(const MappingStack& stack, const GaussianField& scene,
                      const GaussianField& avatar);

GaussianField map_then_concat(const MappingStack& stack, const GaussianField& scene,
                              const GaussianField& avatar);

// d_scene_out / d_avatar_out are gradients on the mapped fields; the inputs'
// gradients come back through the same struct shape.
void map_fields_backward(const MappingStack& stack, const GaussianField& scene,
                         const GaussianField& avatar,
                         const RasterGradients& d_scene_out,
                         const RasterGradients& d_avatar_out,
                         RasterGradients& d_scene_in, RasterGradients& d_avatar_in,
                         MappingGrads& grads);

}  // namespace stm
