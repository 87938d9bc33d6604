#pragma once

#include "metobench/hashing.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>

namespace metobench {

// 8-bit RGB raster, row-major, no padding.
struct RgbImage {
  int width = 0;
  int height = 0;
  Bytes pixels;
};

struct ImageDecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Bytes encode_png(const RgbImage& image);

// Throws ImageDecodeError if `data` is not a decodable PNG.
RgbImage decode_png(std::span<const std::uint8_t> data);

// Box-filter downscale so that max(width, height) <= max_side. Returns the
// input unchanged when it already fits.
RgbImage downscale_to_fit(const RgbImage& image, int max_side);

}  // namespace metobench
