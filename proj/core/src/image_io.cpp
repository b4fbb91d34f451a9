// Copyright 2026 The FastProtect Authors
// SPDX-License-Identifier: Apache-2.0

#include <png.h>
// jpeglib.h needs size_t and FILE declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "fastprotect/errors.hpp"
#include "fastprotect/image.hpp"

namespace fastprotect {

Image::Image(Tensor pixels, std::string id) : pixels_(std::move(pixels)), id_(std::move(id)) {
  if (pixels_.channels() != 3) {
    throw ShapeError("image must have 3 channels, got " + pixels_.shape_string());
  }
  if (pixels_.height() < kMinImageSide || pixels_.width() < kMinImageSide) {
    throw InputError("image " + pixels_.shape_string() + " is smaller than the 64x64 minimum");
  }
  for (double v : pixels_.data()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InputError("image pixel " + std::to_string(v) + " outside [0,1]");
    }
  }
}

Image Image::clamped(Tensor t, std::string id) {
  for (double& v : t.data()) v = std::clamp(v, 0.0, 1.0);
  return Image(std::move(t), std::move(id));
}

void Budget::validate() const {
  if (eta <= 0) throw ConfigError("budget eta must be positive");
  if (!(pgd_step_len > 0.0)) throw ConfigError("pgd step length must be positive");
  if (pgd_steps < 0) throw ConfigError("pgd step count must be non-negative");
}

Perturbation Perturbation::zeros(std::size_t resolution, double bound) {
  return {Tensor(3, resolution, resolution, 0.0), bound};
}

bool Perturbation::within_bound() const { return max_abs(values.data()) <= bound; }

unsigned char quantize_unit(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image from_interleaved(const unsigned char* rgb, std::size_t height, std::size_t width,
                       std::size_t stride_channels, std::string id) {
  Tensor t(3, height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const unsigned char* px = rgb + (y * width + x) * stride_channels;
      for (std::size_t c = 0; c < 3; ++c) t(c, y, x) = px[c] / 255.0;
    }
  }
  return Image(std::move(t), std::move(id));
}

std::vector<unsigned char> to_interleaved(const Tensor& t) {
  std::vector<unsigned char> rgb(t.height() * t.width() * 3);
  for (std::size_t y = 0; y < t.height(); ++y) {
    for (std::size_t x = 0; x < t.width(); ++x) {
      for (std::size_t c = 0; c < 3; ++c) rgb[(y * t.width() + x) * 3 + c] = quantize_unit(t(c, y, x));
    }
  }
  return rgb;
}

Image decode_png(const std::vector<unsigned char>& bytes, std::string id) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw DecodeError("png decode failed for " + id + ": " + image.message);
  }
  // Gray, gray+alpha and palette are expanded by libpng; alpha is discarded below.
  image.format = PNG_FORMAT_RGBA;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DecodeError("png decode failed for " + id + ": " + image.message);
  }
  return from_interleaved(buffer.data(), image.height, image.width, 4, std::move(id));
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Decodes into interleaved RGB; returns false with `error` set on failure.
bool decode_jpeg_raw(const unsigned char* data, std::size_t size, std::vector<unsigned char>& rgb,
                     std::size_t& height, std::size_t& width, int& components,
                     std::string& error) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  if (setjmp(jerr.jump)) {
    error = jerr.message;
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  components = cinfo.num_components;
  if (components != 1 && components != 3) {
    jpeg_destroy_decompress(&cinfo);
    return true;
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  height = cinfo.output_height;
  width = cinfo.output_width;
  rgb.resize(height * width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = rgb.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Image decode_jpeg(const unsigned char* data, std::size_t size, std::string id) {
  std::vector<unsigned char> rgb;
  std::size_t height = 0;
  std::size_t width = 0;
  int components = 0;
  std::string error;
  if (!decode_jpeg_raw(data, size, rgb, height, width, components, error)) {
    throw DecodeError("jpeg decode failed for " + id + ": " + error);
  }
  if (components != 1 && components != 3) {
    throw FormatError("unsupported jpeg channel count " + std::to_string(components) + " in " + id);
  }
  return from_interleaved(rgb.data(), height, width, 3, std::move(id));
}

bool encode_jpeg_raw(const std::vector<unsigned char>& rgb, std::size_t height, std::size_t width,
                     int quality, std::vector<unsigned char>& out, std::string& error) {
  jpeg_compress_struct cinfo;
  JpegErrorManager jerr;
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = jpeg_error_exit;
  unsigned char* mem = nullptr;
  unsigned long mem_size = 0;
  if (setjmp(jerr.jump)) {
    error = jerr.message;
    jpeg_destroy_compress(&cinfo);
    std::free(mem);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &mem, &mem_size);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  out.assign(mem, mem + mem_size);
  jpeg_destroy_compress(&cinfo);
  std::free(mem);
  return true;
}

constexpr std::array<unsigned char, 8> kPngMagic = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

}  // namespace

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::string id = path.stem().string();
  if (bytes.size() >= kPngMagic.size() &&
      std::equal(kPngMagic.begin(), kPngMagic.end(), bytes.begin())) {
    return decode_png(bytes, std::move(id));
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return decode_jpeg(bytes.data(), bytes.size(), std::move(id));
  }
  throw DecodeError("unrecognized image format: " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path) {
  const auto rgb = to_interleaved(img.pixels());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, rgb.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + image.message);
  }
}

void save_grayscale(const Tensor& map, const std::filesystem::path& path) {
  if (map.channels() != 1) throw ShapeError("save_grayscale expects 1 channel, got " + map.shape_string());
  std::vector<unsigned char> gray(map.size());
  std::transform(map.data().begin(), map.data().end(), gray.begin(), quantize_unit);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(map.width());
  image.height = static_cast<png_uint_32>(map.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, gray.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + image.message);
  }
}

Image jpeg_roundtrip(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw ConfigError("jpeg quality must be in [1,100]");
  std::vector<unsigned char> encoded;
  std::string error;
  if (!encode_jpeg_raw(to_interleaved(img.pixels()), img.height(), img.width(), quality, encoded,
                       error)) {
    throw IoError("jpeg encode failed: " + error);
  }
  return decode_jpeg(encoded.data(), encoded.size(), img.id());
}

}  // namespace fastprotect
