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

#ifndef CLOAK_IMAGE_IO_HPP
#define CLOAK_IMAGE_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cloak/core.hpp"

namespace cloak {

/// Rounds every value to the nearest multiple of 1/255 (after clamping).
PixelGrid quantize_8bit(const PixelGrid& grid);

std::vector<std::uint8_t> to_rgb8(const PixelGrid& grid);
PixelGrid from_rgb8(std::span<const std::uint8_t> rgb, int height, int width);

/// 8-bit RGB PNG. Values are clamped and rounded.
void write_png(const std::filesystem::path& path, const PixelGrid& grid);
PixelGrid read_png(const std::filesystem::path& path);

PixelGrid read_jpeg(const std::filesystem::path& path);
/// PNG or JPEG by file extension.
PixelGrid read_image(const std::filesystem::path& path);

/// Encode to baseline JPEG at `quality` (1-100) and decode again.
PixelGrid jpeg_roundtrip(const PixelGrid& grid, int quality);

/// Writes `<stem>.png` and the sidecar `<stem>.json`
/// ({height, width, seed, config_hash, created_at}).
void save_patch(const std::filesystem::path& png_path, const Patch& patch);

/// Reads a patch PNG and, when present, its sidecar.
Patch load_patch(const std::filesystem::path& png_path);

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::filesystem::path& path);

/// UTC timestamp, ISO 8601.
std::string utc_timestamp();

}  // namespace cloak

#endif  // CLOAK_IMAGE_IO_HPP
