#include "evalign/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include "evalign/error.hpp"

namespace evalign {

namespace fs = std::filesystem;

bool ImageGray::valid() const {
  if (width == 0 || height == 0 || data.size() != width * height) return false;
  return std::all_of(data.begin(), data.end(),
                     [](float v) { return std::isfinite(v) && v >= 0.0f && v <= 1.0f; });
}

float luminance(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  return static_cast<float>(std::clamp(y / 255.0, 0.0, 1.0));
}

namespace {

std::string lower_ext(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pnm_token(const std::vector<std::uint8_t>& buf, std::size_t& pos) {
  while (pos < buf.size()) {
    if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else if (std::isspace(buf[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') {
    tok.push_back(static_cast<char>(buf[pos++]));
  }
  return tok;
}

ImageGray decode_pgm(const std::vector<std::uint8_t>& buf) {
  std::size_t pos = 0;
  if (pnm_token(buf, pos) != "P5") throw FormatError("not a binary PGM (P5)", 0);
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(pnm_token(buf, pos));
    h = std::stoul(pnm_token(buf, pos));
    maxval = std::stoul(pnm_token(buf, pos));
  } catch (const std::exception&) {
    throw FormatError("malformed PGM header", pos);
  }
  if (w == 0 || h == 0) throw FormatError("PGM has zero extent", pos);
  if (maxval != 255) throw FormatError("only 8-bit PGM (maxval 255) is supported", pos);
  ++pos;  // single whitespace byte after maxval
  if (buf.size() < pos + w * h) throw FormatError("truncated PGM pixel data", buf.size());
  ImageGray img(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    img.data[i] = static_cast<float>(buf[pos + i] / 255.0);
  }
  return img;
}

ImageGray decode_png(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw FormatError("cannot decode PNG " + path.string() + ": " + image.message, 0);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg, 0);
  }
  ImageGray img(image.width, image.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    img.data[i] = luminance(rgb[3 * i], rgb[3 * i + 1], rgb[3 * i + 2]);
  }
  return img;
}

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_png(const fs::path& path, std::uint32_t w, std::uint32_t h, png_uint_32 format,
               const std::uint8_t* pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = w;
  image.height = h;
  image.format = format;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels, 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

void write_bytes(const fs::path& path, const std::string& header,
                 const std::vector<std::uint8_t>& payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

bool is_supported_image(const fs::path& path) {
  const std::string ext = lower_ext(path);
  return ext == ".pgm" || ext == ".png";
}

ImageGray load_image(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file " + path.string());
  const std::string ext = lower_ext(path);
  if (ext == ".png") return decode_png(path);
  return decode_pgm(read_all(path));
}

void save_pgm(const ImageGray& img, const fs::path& path) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
  write_bytes(path,
              "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n",
              bytes);
}

void save_png(const ImageGray& img, const fs::path& path) {
  std::vector<std::uint8_t> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), to_byte);
  write_png(path, static_cast<std::uint32_t>(img.width), static_cast<std::uint32_t>(img.height),
            PNG_FORMAT_GRAY, bytes.data());
}

void save_ppm(const ImageRGB& img, const fs::path& path) {
  write_bytes(path,
              "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n",
              img.data);
}

void save_png(const ImageRGB& img, const fs::path& path) {
  write_png(path, static_cast<std::uint32_t>(img.width), static_cast<std::uint32_t>(img.height),
            PNG_FORMAT_RGB, img.data.data());
}

void save_rgb(const ImageRGB& img, const fs::path& path) {
  if (lower_ext(path) == ".png") {
    save_png(img, path);
  } else {
    save_ppm(img, path);
  }
}

}  // namespace evalign
