#pragma once

#include <string>

#include "stm/types.hpp"

namespace stm {

// 8-bit PNG. 3-channel images save as RGB, 1-channel as grayscale.
// Values are clamped to [0,1] and quantized with round(v * 255).
void save_png(const Image& image, const std::string& path);
Image load_png(const std::string& path);

// PFM, 32-bit float scanlines, little-endian, single channel.
void save_pfm(const Image& image, const std::string& path);
Image load_pfm(const std::string& path);

}  // namespace stm
