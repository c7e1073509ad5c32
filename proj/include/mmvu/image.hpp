#pragma once

// 8-bit RGB rasters and PNG encoding via libpng's simplified API.

#include <png.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "mmvu/error.hpp"

namespace mmvu {

struct RgbImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major

  RgbImage() = default;
  RgbImage(std::uint32_t w, std::uint32_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(std::size_t{w} * h * 3, fill) {}

  std::uint8_t& at(std::uint32_t x, std::uint32_t y, int channel) {
    return pixels[(std::size_t{y} * width + x) * 3 + channel];
  }
  std::uint8_t at(std::uint32_t x, std::uint32_t y, int channel) const {
    return pixels[(std::size_t{y} * width + x) * 3 + channel];
  }

  bool operator==(const RgbImage&) const = default;
};

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

// Decodes any PNG to 8-bit RGB. An alpha channel, if present, is dropped.
inline RgbImage decode_png(std::string_view bytes) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw ValidationError(std::string("png decode: ") + img.message);
  img.format = PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> rgba(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgba.data(), 0, nullptr)) {
    png_image_free(&img);
    throw ValidationError(std::string("png decode: ") + img.message);
  }
  RgbImage out(img.width, img.height);
  for (std::size_t i = 0, n = std::size_t{img.width} * img.height; i < n; ++i)
    for (int c = 0; c < 3; ++c) out.pixels[i * 3 + c] = rgba[i * 4 + c];
  return out;
}

inline std::string encode_png(const RgbImage& image) {
  if (image.pixels.size() != std::size_t{image.width} * image.height * 3)
    throw ValidationError("png encode: pixel buffer does not match dimensions");
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = image.width;
  img.height = image.height;
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.pixels.data(), 0, nullptr))
    throw Error(std::string("png encode: ") + img.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr))
    throw Error(std::string("png encode: ") + img.message);
  out.resize(size);
  return out;
}

inline RgbImage read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file_bytes(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void write_png(const RgbImage& image, const std::filesystem::path& path) {
  write_file_bytes(path, encode_png(image));
}

}  // namespace mmvu
