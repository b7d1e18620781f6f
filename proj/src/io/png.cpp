#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mmrf/io.hpp"

namespace mmrf {

namespace {

Tensor read_png_as(const std::filesystem::path& path, png_uint_32 format, int channels) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw FormatError(FormatError::Kind::io, path.string() + ": cannot open file");
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    const std::string why = image.message;
    png_image_free(&image);
    throw FormatError(FormatError::Kind::malformed, path.string() + ": cannot read PNG (" + why + ")");
  }
  image.format = format;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string why = image.message;
    png_image_free(&image);
    throw FormatError(FormatError::Kind::malformed, path.string() + ": cannot decode PNG (" + why + ")");
  }
  Tensor out(static_cast<int>(image.height), static_cast<int>(image.width), channels);
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(buffer[i]) / 255.0f;
  return out;
}

}  // namespace

std::uint8_t to_byte(float v) {
  const double scaled = std::floor(static_cast<double>(std::clamp(v, 0.0f, 1.0f)) * 255.0 + 0.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

Tensor read_png_rgb(const std::filesystem::path& path) { return read_png_as(path, PNG_FORMAT_RGB, 3); }

Tensor read_png_gray(const std::filesystem::path& path) { return read_png_as(path, PNG_FORMAT_GRAY, 1); }

void write_png(const std::filesystem::path& path, const Tensor& img) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw FormatError(FormatError::Kind::shape,
                      path.string() + ": PNG output needs 1 or 3 channels, got " + img.shape_string());
  }
  std::vector<png_byte> buffer(img.size());
  auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) buffer[i] = to_byte(data[i]);

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, buffer.data(), 0, nullptr)) {
    const std::string why = image.message;
    png_image_free(&image);
    throw FormatError(FormatError::Kind::io, path.string() + ": cannot write PNG (" + why + ")");
  }
}

}  // namespace mmrf
