// Copyright 2026 The Cloak Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cloak/image_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cctype>
#include <ctime>
#include <fstream>
#include <iterator>

#include <jpeglib.h>
#include <openssl/evp.h>
#include <png.h>

#include <json.hpp>

#include "cloak/errors.hpp"

namespace cloak {

PixelGrid quantize_8bit(const PixelGrid& grid) {
  PixelGrid out = grid;
  for (double& v : out.values()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return out;
}

std::vector<std::uint8_t> to_rgb8(const PixelGrid& grid) {
  std::vector<std::uint8_t> out(grid.size());
  const auto v = grid.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

PixelGrid from_rgb8(std::span<const std::uint8_t> rgb, int height, int width) {
  PixelGrid g(height, width);
  auto v = g.values();
  if (rgb.size() != v.size()) throw DataError("rgb8 buffer size mismatch");
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rgb[i] / 255.0;
  return g;
}

void write_png(const std::filesystem::path& path, const PixelGrid& grid) {
  const std::vector<std::uint8_t> rgb = to_rgb8(grid);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(grid.width());
  image.height = static_cast<png_uint_32>(grid.height());
  image.format = PNG_FORMAT_RGB;
  if (png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot write PNG " + path.string() + ": " + msg);
  }
}

PixelGrid read_png(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("image not found: " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    throw DataError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr) == 0) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw DataError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return from_rgb8(rgb, static_cast<int>(image.height), static_cast<int>(image.width));
}

namespace {

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

// Both helpers keep C++ objects with destructors out of the setjmp frame.
bool jpeg_encode(const std::uint8_t* rgb, int height, int width, int quality, unsigned char** buf,
                 unsigned long* size, char* message) {
  jpeg_compress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_compress(&cinfo);
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, buf, size);
  cinfo.image_width = static_cast<JDIMENSION>(width);
  cinfo.image_height = static_cast<JDIMENSION>(height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(rgb + static_cast<std::size_t>(cinfo.next_scanline) * width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

bool jpeg_decode(const unsigned char* buf, unsigned long size, std::vector<std::uint8_t>* rgb,
                 int* height, int* width, char* message) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager err{};
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::snprintf(message, JMSG_LENGTH_MAX, "%s", err.message);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, buf, size);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  *height = static_cast<int>(cinfo.output_height);
  *width = static_cast<int>(cinfo.output_width);
  rgb->resize(static_cast<std::size_t>(*height) * static_cast<std::size_t>(*width) * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = rgb->data() + static_cast<std::size_t>(cinfo.output_scanline) * *width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

}  // namespace

PixelGrid jpeg_roundtrip(const PixelGrid& grid, int quality) {
  if (quality < 1 || quality > 100) throw ConfigError("JPEG quality must be in [1,100]");
  const std::vector<std::uint8_t> rgb = to_rgb8(grid);
  unsigned char* buf = nullptr;
  unsigned long size = 0;
  char message[JMSG_LENGTH_MAX] = {};
  if (!jpeg_encode(rgb.data(), grid.height(), grid.width(), quality, &buf, &size, message)) {
    std::free(buf);
    throw DataError(std::string("JPEG encode failed: ") + message);
  }
  std::vector<std::uint8_t> decoded;
  int h = 0;
  int w = 0;
  const bool ok = jpeg_decode(buf, size, &decoded, &h, &w, message);
  std::free(buf);
  if (!ok) throw DataError(std::string("JPEG decode failed: ") + message);
  if (h != grid.height() || w != grid.width()) throw DataError("JPEG round trip changed the size");
  return from_rgb8(decoded, h, w);
}

PixelGrid read_jpeg(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("image not found: " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                         std::istreambuf_iterator<char>());
  std::vector<std::uint8_t> decoded;
  int h = 0;
  int w = 0;
  char message[JMSG_LENGTH_MAX] = {};
  if (!jpeg_decode(bytes.data(), bytes.size(), &decoded, &h, &w, message)) {
    throw DataError("cannot decode JPEG " + path.string() + ": " + message);
  }
  return from_rgb8(decoded, h, w);
}

PixelGrid read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg(path);
  return read_png(path);
}

void save_patch(const std::filesystem::path& png_path, const Patch& patch) {
  write_png(png_path, patch.pixels);
  nlohmann::json side;
  side["height"] = patch.height();
  side["width"] = patch.width();
  side["seed"] = patch.meta.seed;
  side["config_hash"] = patch.meta.config_hash;
  side["created_at"] = patch.meta.created_at;
  std::filesystem::path json_path = png_path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path);
  if (!out) throw DataError("cannot write patch sidecar " + json_path.string());
  out << side.dump(2) << '\n';
}

Patch load_patch(const std::filesystem::path& png_path) {
  Patch patch;
  patch.pixels = read_png(png_path);
  std::filesystem::path json_path = png_path;
  json_path.replace_extension(".json");
  if (std::filesystem::exists(json_path)) {
    std::ifstream in(json_path);
    try {
      const nlohmann::json side = nlohmann::json::parse(in);
      if (side.at("height").get<int>() != patch.height() ||
          side.at("width").get<int>() != patch.width()) {
        throw DataError("patch sidecar dimensions disagree with " + png_path.string());
      }
      patch.meta.seed = side.value("seed", std::uint64_t{0});
      patch.meta.config_hash = side.value("config_hash", "");
      patch.meta.created_at = side.value("created_at", "");
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed patch sidecar " + json_path.string() + ": " + e.what());
    }
  }
  return patch;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFileError("cannot hash missing file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace cloak
