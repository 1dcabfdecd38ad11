#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fsr/errors.hpp"
#include "fsr/image.hpp"

namespace fsr {

/// Reads an 8-bit PNG. Gray files load as one channel, everything else as RGB
/// (alpha is dropped, palettes are expanded). Byte b maps to b / 255.
inline Image load_image(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    const std::string why = img.message;
    png_image_free(&img);
    throw IoError("cannot read image '" + path.string() + "': " + why);
  }
  if ((img.format & PNG_FORMAT_FLAG_LINEAR) != 0) {
    png_image_free(&img);
    throw IoError("image '" + path.string() + "' has an unsupported bit depth (only 8-bit is read)");
  }
  const bool color = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr)) {
    const std::string why = img.message;
    png_image_free(&img);
    throw IoError("cannot decode image '" + path.string() + "': " + why);
  }
  std::vector<double> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / 255.0;
  return Image(static_cast<int>(img.height), static_cast<int>(img.width), channels, std::move(data));
}

inline std::uint8_t quantize_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
}

/// Writes an 8-bit PNG with round-half-up quantization.
inline void save_image(const Image& image, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize_byte(image.data()[i]);
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width());
  img.height = static_cast<png_uint_32>(image.height());
  img.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string why = img.message;
    png_image_free(&img);
    throw IoError("cannot write image '" + path.string() + "': " + why);
  }
}

}  // namespace fsr
