#pragma once

#include <string>

#include "deg/types.hpp"

namespace deg {

/// 8-bit RGB PNG, non-interlaced, filter type 0 on every row. Values are
/// clamped to [0,1] and scaled by 255; no gamma transform is applied.
void write_png(const std::string& path, const Image& img);

/// Reads 8-bit RGB or RGBA PNGs (alpha is dropped); other layouts are
/// rejected. Values are scaled by 1/255.
Image read_png(const std::string& path);

/// Full-precision renders: binary PFM, color, little-endian, bottom-up rows.
void write_pfm(const std::string& path, const Image& img);
Image read_pfm(const std::string& path);

}  // namespace deg
