#pragma once

#include <string>

#include "stm/gaussian.hpp"

namespace stm {

// De-facto splatting PLY layout, binary little-endian float32 properties:
// x,y,z, f_dc_0..2, f_rest_0..3(B-1)-1 (channel-major), opacity, scale_0..2,
// rot_0..3 (w,x,y,z). Values are stored raw (logits, log scales,
// unnormalized quaternions). float32 payloads round-trip bit-exactly.
void save_ply(const GaussianField& field, const std::string& path);
GaussianField load_ply(const std::string& path);

// double_precision emits the same layout with double properties (used inside
// checkpoints, where bit-exact resume matters). The reader accepts both.
std::string field_to_ply_bytes(const GaussianField& field,
                               bool double_precision = false);
GaussianField field_from_ply_bytes(const std::string& bytes);

// Lossless double-precision debug form.
void save_field_json(const GaussianField& field, const std::string& path);
GaussianField load_field_json(const std::string& path);

}  // namespace stm
