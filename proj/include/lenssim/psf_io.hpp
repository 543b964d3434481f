#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lenssim/optics.hpp"

namespace lenssim {

// Binary PSF grid layout, all little-endian:
//   "PSFG" | version u32 | rows u32 | cols u32 | d_psf u32 | pitch f64 (m)
//   | rows*cols*d_psf^2 samples f32, kernels row-major, samples row-major.
// Wavelengths and field coordinates live in a TOML sidecar (<file>.meta.toml).

inline constexpr std::uint32_t kPsfGridVersion = 1;

std::vector<std::uint8_t> encode_psf_grid(const PsfGrid& grid);

/// Samples are returned exactly as stored (float values widened to double),
/// without renormalization.
PsfGrid decode_psf_grid(std::span<const std::uint8_t> bytes);

std::filesystem::path psf_sidecar_path(const std::filesystem::path& grid_path);

void write_psf_grid(const std::filesystem::path& path, const PsfGrid& grid);

/// Reads the binary grid and, when present, its sidecar metadata.
PsfGrid read_psf_grid(const std::filesystem::path& path);

/// Stable content identifier of an encoded grid (16 hex digits).
std::string psf_grid_id(std::span<const std::uint8_t> encoded);
std::string psf_grid_id(const PsfGrid& grid);

}  // namespace lenssim
