#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace streamgrid {

// Linear RGB float image, row-major, 3 channels.
struct Image {
  int width = 0, height = 0;
  std::vector<float> rgb;  // width*height*3

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0.f) {}

  float* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const float* pixel(int x, int y) const { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }

  bool operator==(const Image&) const = default;
};

inline std::uint8_t quantize8(float v) {
  float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return static_cast<std::uint8_t>(std::lround(c * 255.f));
}

// 8-bit RGB PNG, linear values clamped and scaled (no gamma encoding).
inline void write_png(const std::string& path, const Image& img) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(img.width) * img.height * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = quantize8(img.rgb[i]);

  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(img.width);
  out.height = static_cast<png_uint_32>(img.height);
  out.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data(), 0, nullptr))
    throw std::runtime_error("failed to write PNG: " + path + " (" + out.message + ")");
}

inline Image read_png(const std::string& path) {
  png_image in{};
  in.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&in, path.c_str()))
    throw std::runtime_error("failed to read PNG: " + path + " (" + in.message + ")");
  in.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(in));
  if (!png_image_finish_read(&in, nullptr, bytes.data(), 0, nullptr))
    throw std::runtime_error("failed to decode PNG: " + path + " (" + in.message + ")");
  Image img(static_cast<int>(in.width), static_cast<int>(in.height));
  for (std::size_t i = 0; i < bytes.size(); ++i) img.rgb[i] = static_cast<float>(bytes[i]) / 255.f;
  return img;
}

// Raw float dump for tests: u32 width, u32 height, then width*height*3 f32,
// little-endian.
inline void write_raw_f32(const std::string& path, const Image& img) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  std::uint32_t wh[2] = {static_cast<std::uint32_t>(img.width), static_cast<std::uint32_t>(img.height)};
  std::fwrite(wh, sizeof(wh), 1, f);
  std::fwrite(img.rgb.data(), sizeof(float), img.rgb.size(), f);
  std::fclose(f);
}

// Mean squared error over all pixels and channels.
inline double image_mse(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("image dims mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) {
    double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.rgb.size());
}

// PSNR in dB against peak 1.0; +inf for identical images.
inline double image_psnr(const Image& a, const Image& b) {
  double mse = image_mse(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace streamgrid
