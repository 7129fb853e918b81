#pragma once

#include <filesystem>

#include "panostitch/image.hpp"

namespace panostitch::io {

/// Loads an 8-bit PNG as linear [0,1] values (no gamma transform). Gray and
/// gray+alpha become 1 channel, RGB/RGBA become 3 channels; alpha is dropped.
ImageF read_png(const std::filesystem::path& path);

/// Writes 1- or 3-channel data as 8-bit PNG; values are clamped to [0,1]
/// and rounded to the nearest code.
void write_png(const std::filesystem::path& path, const ImageF& image);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);
Mask read_mask_png(const std::filesystem::path& path);

/// WSSF1 float map: "WSSF1\n", u32le height, width, channels, then
/// height*width*channels f32le values, row-major, channel-interleaved.
void write_wssf(const std::filesystem::path& path, const ImageF& map);
ImageF read_wssf(const std::filesystem::path& path);

/// Dispatches on extension: ".wssf" reads WSSF1, anything else PNG.
ImageF read_image(const std::filesystem::path& path);

}  // namespace panostitch::io
