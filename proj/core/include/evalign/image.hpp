#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace evalign {

/// Row-major luminance image with values in [0, 1].
struct ImageGray {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> data;

  ImageGray() = default;
  ImageGray(std::size_t w, std::size_t h, float fill = 0.0f)
      : width(w), height(h), data(w * h, fill) {}

  float& at(std::size_t x, std::size_t y) { return data[y * width + x]; }
  float at(std::size_t x, std::size_t y) const { return data[y * width + x]; }

  /// Checks geometry and that every value is finite and within [0, 1].
  bool valid() const;

  friend bool operator==(const ImageGray&, const ImageGray&) = default;
};

/// 8-bit interleaved RGB image.
struct ImageRGB {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> data;  // 3 * width * height

  ImageRGB() = default;
  ImageRGB(std::size_t w, std::size_t h) : width(w), height(h), data(3 * w * h, 0) {}

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return &data[3 * (y * width + x)]; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return &data[3 * (y * width + x)];
  }

  friend bool operator==(const ImageRGB&, const ImageRGB&) = default;
};

/// BT.601 luma of an 8-bit RGB triple, normalized to [0, 1].
float luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Loads a binary PGM (P5, maxval 255) or PNG (gray, gray+alpha, RGB, RGBA;
/// 8 or 16 bit). Color is reduced to luminance; alpha is ignored.
/// Throws IoError / FormatError.
ImageGray load_image(const std::filesystem::path& path);

/// True when the file extension is one `load_image` accepts.
bool is_supported_image(const std::filesystem::path& path);

void save_pgm(const ImageGray& img, const std::filesystem::path& path);
void save_png(const ImageGray& img, const std::filesystem::path& path);
void save_ppm(const ImageRGB& img, const std::filesystem::path& path);
void save_png(const ImageRGB& img, const std::filesystem::path& path);

/// Writes PNG for ".png" and PPM (P6) otherwise.
void save_rgb(const ImageRGB& img, const std::filesystem::path& path);

}  // namespace evalign
