#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "esrgcnn/tensor.hpp"

namespace esrgcnn {

class ImageIoError : public std::runtime_error {
 public:
  explicit ImageIoError(const std::string& what) : std::runtime_error(what) {}
};

/// Decodes a PNG as 8-bit RGB (gray and alpha are converted by libpng) into
/// a (1, 3, H, W) tensor with values v / 255.
inline Tensor<float> read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw ImageIoError("cannot decode '" + path.string() + "': " + image.message);
  image.format = PNG_FORMAT_RGB;
  if (image.width == 0 || image.height == 0) {
    png_image_free(&image);
    throw ImageIoError("'" + path.string() + "' has zero size");
  }
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ImageIoError("cannot decode '" + path.string() + "': " + msg);
  }
  const std::size_t h = image.height, w = image.width;
  Tensor<float> out(1, 3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out(0, c, y, x) = static_cast<float>(buf[(y * w + x) * 3 + c]) / 255.0f;
  return out;
}

inline std::uint8_t to_byte(float v) {
  const float scaled = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  return static_cast<std::uint8_t>(scaled);
}

/// Writes sample 0 of a 3-channel tensor as an 8-bit RGB PNG, clamping to
/// [0, 1] and rounding to the nearest level.
inline void write_png(const std::filesystem::path& path, const Tensor<float>& img) {
  if (img.c() != 3 || img.n() < 1 || img.h() == 0 || img.w() == 0)
    throw ImageIoError("write_png: expected a non-empty 3-channel image");
  const std::size_t h = img.h(), w = img.w();
  std::vector<png_byte> buf(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) buf[(y * w + x) * 3 + c] = to_byte(img(0, c, y, x));

  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw ImageIoError("cannot write '" + path.string() + "': " + image.message);
}

}  // namespace esrgcnn
