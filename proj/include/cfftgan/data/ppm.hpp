#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfftgan/numcore/tensor.hpp"

namespace cfftgan::data {

/// Quantizes a (3,H,W) tensor in [-1,1] to 8-bit, rounding half to even.
/// Values outside the range are clamped.
std::vector<std::uint8_t> encode_ppm(const num::Tensor& image);
/// Parses a binary P6 image with maxval 1..255 into a (3,H,W) tensor in [-1,1].
/// Throws FormatError on a malformed header, truncated payload or unsupported maxval.
num::Tensor decode_ppm(const std::vector<std::uint8_t>& bytes);

void save_image(const num::Tensor& image, const std::string& path);
num::Tensor load_image(const std::string& path);

/// Lays images out side by side (all must share a shape) with a 1 px gap of -1.
num::Tensor tile_images(const std::vector<num::Tensor>& images);

}  // namespace cfftgan::data
