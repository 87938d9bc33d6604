#include "metobench/png.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>

namespace metobench {

Bytes encode_png(const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw std::invalid_argument("encode_png: pixel buffer does not match dimensions");
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("encode_png: ") + png.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw std::runtime_error(std::string("encode_png: ") + png.message);
  }
  out.resize(size);
  return out;
}

RgbImage decode_png(std::span<const std::uint8_t> data) {
  if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0) {
    throw ImageDecodeError("not a PNG image");
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, data.data(), data.size())) {
    throw ImageDecodeError(std::string("PNG header: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(png.width);
  out.height = static_cast<int>(png.height);
  out.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw ImageDecodeError(std::string("PNG body: ") + png.message);
  }
  return out;
}

RgbImage downscale_to_fit(const RgbImage& image, int max_side) {
  if (max_side <= 0) throw std::invalid_argument("max_side must be positive");
  const int longest = std::max(image.width, image.height);
  if (longest <= max_side) return image;
  const double scale = static_cast<double>(max_side) / longest;
  RgbImage out;
  out.width = std::max(1, static_cast<int>(image.width * scale));
  out.height = std::max(1, static_cast<int>(image.height * scale));
  out.pixels.resize(static_cast<std::size_t>(out.width) * out.height * 3);
  for (int y = 0; y < out.height; ++y) {
    const int y0 = y * image.height / out.height;
    const int y1 = std::max(y0 + 1, (y + 1) * image.height / out.height);
    for (int x = 0; x < out.width; ++x) {
      const int x0 = x * image.width / out.width;
      const int x1 = std::max(x0 + 1, (x + 1) * image.width / out.width);
      for (int c = 0; c < 3; ++c) {
        unsigned sum = 0;
        for (int sy = y0; sy < y1; ++sy)
          for (int sx = x0; sx < x1; ++sx)
            sum += image.pixels[(static_cast<std::size_t>(sy) * image.width + sx) * 3 + c];
        const unsigned n = static_cast<unsigned>((y1 - y0) * (x1 - x0));
        out.pixels[(static_cast<std::size_t>(y) * out.width + x) * 3 + c] =
            static_cast<std::uint8_t>(sum / n);
      }
    }
  }
  return out;
}

}  // namespace metobench
