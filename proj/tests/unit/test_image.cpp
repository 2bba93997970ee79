#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "evalign/error.hpp"
#include "evalign/image.hpp"
#include "test_support.hpp"

namespace evalign {
namespace {

using testing::TempDir;

TEST(Luminance, Bt601Weights) {
  EXPECT_NEAR(luminance(255, 0, 0), 0.299f, 1e-6);
  EXPECT_NEAR(luminance(0, 255, 0), 0.587f, 1e-6);
  EXPECT_NEAR(luminance(0, 0, 255), 0.114f, 1e-6);
  EXPECT_FLOAT_EQ(luminance(255, 255, 255), 1.0f);
  EXPECT_FLOAT_EQ(luminance(0, 0, 0), 0.0f);
}

TEST(ImageGray, ValidChecksRangeAndGeometry) {
  ImageGray img(3, 2, 0.5f);
  EXPECT_TRUE(img.valid());
  img.at(1, 1) = 1.5f;
  EXPECT_FALSE(img.valid());
  img.at(1, 1) = std::nanf("");
  EXPECT_FALSE(img.valid());
  ImageGray empty;
  EXPECT_FALSE(empty.valid());
}

TEST(ImageIo, PgmRoundTripAtEightBits) {
  TempDir dir("img");
  ImageGray img(5, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i * 17) / 255.0f;
  save_pgm(img, dir / "a.pgm");
  const auto back = load_image(dir / "a.pgm");
  ASSERT_EQ(back.width, 5u);
  ASSERT_EQ(back.height, 3u);
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 1e-6);
}

TEST(ImageIo, PngGrayRoundTrip) {
  TempDir dir("img");
  ImageGray img(4, 4);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i) / 15.0f;
  save_png(img, dir / "a.png");
  const auto back = load_image(dir / "a.png");
  ASSERT_EQ(back.data.size(), img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) EXPECT_NEAR(back.data[i], img.data[i], 0.5 / 255.0 + 1e-6);
}

TEST(ImageIo, RgbPngIsReducedToLuminance) {
  TempDir dir("img");
  ImageRGB rgb(2, 1);
  rgb.pixel(0, 0)[0] = 255;  // pure red
  rgb.pixel(1, 0)[2] = 255;  // pure blue
  save_png(rgb, dir / "c.png");
  const auto gray = load_image(dir / "c.png");
  EXPECT_NEAR(gray.at(0, 0), 0.299, 1e-6);
  EXPECT_NEAR(gray.at(1, 0), 0.114, 1e-6);
}

TEST(ImageIo, PpmWriterProducesP6) {
  TempDir dir("img");
  ImageRGB rgb(2, 2);
  save_rgb(rgb, dir / "x.ppm");
  const auto bytes = testing::read_bytes(dir / "x.ppm");
  ASSERT_GE(bytes.size(), 2u);
  EXPECT_EQ(bytes[0], 'P');
  EXPECT_EQ(bytes[1], '6');
  EXPECT_EQ(bytes.size(), std::string("P6\n2 2\n255\n").size() + 12);
}

TEST(ImageIo, Errors) {
  TempDir dir("img");
  EXPECT_THROW(load_image(dir / "missing.pgm"), IoError);
  {
    std::ofstream(dir / "bad.pgm") << "P2\n1 1\n255\n0\n";
  }
  EXPECT_THROW(load_image(dir / "bad.pgm"), FormatError);
  {
    std::ofstream(dir / "short.pgm", std::ios::binary) << "P5\n4 4\n255\nab";
  }
  EXPECT_THROW(load_image(dir / "short.pgm"), FormatError);
  {
    std::ofstream(dir / "bad.png", std::ios::binary) << "not a png";
  }
  EXPECT_THROW(load_image(dir / "bad.png"), FormatError);
}

TEST(ImageIo, SupportedExtensions) {
  EXPECT_TRUE(is_supported_image("a.png"));
  EXPECT_TRUE(is_supported_image("a.PGM"));
  EXPECT_FALSE(is_supported_image("a.jpg"));
  EXPECT_FALSE(is_supported_image("readme"));
}

}  // namespace
}  // namespace evalign
