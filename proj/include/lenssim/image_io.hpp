#pragma once

#include <filesystem>

#include "lenssim/types.hpp"

namespace lenssim {

/// Loads 8- or 16-bit PNG (color is reduced to luma) or binary PGM (P5),
/// normalized to [0, 1] by the format's full scale.
Image load_image(const std::filesystem::path& path);

/// 16-bit grayscale PNG, or PGM when the extension is .pgm. Values are
/// clamped to [0, 1] and rounded to the nearest code.
void save_image(const std::filesystem::path& path, const Image& image);

/// Headerless row-major 32-bit little-endian float plane.
void write_raw_f32(const std::filesystem::path& path, const Image& image);
Image read_raw_f32(const std::filesystem::path& path, int height, int width);

}  // namespace lenssim
