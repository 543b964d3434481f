#include "lenssim/psf_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include <toml.hpp>

#include "binary.hpp"
#include "lenssim/error.hpp"

namespace lenssim {

namespace {

constexpr std::string_view kMagic = "PSFG";
constexpr std::string_view kSwappedMagic = "GFSP";
// Upper bound on stored samples (4 GiB of payload).
constexpr std::uint64_t kMaxSamples = std::uint64_t{1} << 30;

}  // namespace

std::vector<std::uint8_t> encode_psf_grid(const PsfGrid& grid) {
  require(grid.rows >= 1 && grid.cols >= 1, ErrorKind::dimension, "empty PSF grid");
  require(grid.kernels.size() == static_cast<std::size_t>(grid.rows) * grid.cols,
          ErrorKind::dimension, "PSF grid kernel count does not match rows x cols");
  const auto d = static_cast<std::uint32_t>(grid.psf_size());
  std::vector<std::uint8_t> out;
  out.reserve(28 + grid.kernels.size() * d * d * 4);
  binary::put_bytes(out, kMagic);
  binary::put_u32(out, kPsfGridVersion);
  binary::put_u32(out, static_cast<std::uint32_t>(grid.rows));
  binary::put_u32(out, static_cast<std::uint32_t>(grid.cols));
  binary::put_u32(out, d);
  binary::put_f64(out, grid.pixel_pitch());
  for (const auto& k : grid.kernels) {
    require(k.size() == d && k.samples.cols() == d, ErrorKind::dimension,
            "PSF grid kernels must share size");
    for (Eigen::Index y = 0; y < k.samples.rows(); ++y)
      for (Eigen::Index x = 0; x < k.samples.cols(); ++x)
        binary::put_f32(out, static_cast<float>(k.samples(y, x)));
  }
  return out;
}

PsfGrid decode_psf_grid(std::span<const std::uint8_t> bytes) {
  binary::Reader in(bytes);
  const std::string magic = in.str(4);
  if (magic == kSwappedMagic)
    fail(ErrorKind::bad_magic, "PSF grid has byte-swapped magic (foreign-endian file)");
  require(magic == kMagic, ErrorKind::bad_magic, "not a PSF grid file");
  const std::uint32_t version = in.u32();
  require(version == kPsfGridVersion, ErrorKind::unsupported_version,
          "unsupported PSF grid version " + std::to_string(version));
  const std::uint32_t rows = in.u32();
  const std::uint32_t cols = in.u32();
  const std::uint32_t d = in.u32();
  const double pitch = in.f64();
  require(rows >= 1 && cols >= 1 && d >= 1 && d % 2 == 1, ErrorKind::dimension_overflow,
          "invalid PSF grid dimensions");
  const std::uint64_t samples = std::uint64_t{rows} * cols * d * d;
  require(rows <= 1u << 16 && cols <= 1u << 16 && d <= 1u << 15 && samples <= kMaxSamples,
          ErrorKind::dimension_overflow, "PSF grid dimensions overflow");
  require(in.remaining() >= samples * 4, ErrorKind::truncated, "PSF grid payload truncated");

  PsfGrid grid;
  grid.rows = static_cast<int>(rows);
  grid.cols = static_cast<int>(cols);
  grid.kernels.reserve(std::size_t{rows} * cols);
  for (std::uint64_t k = 0; k < std::uint64_t{rows} * cols; ++k) {
    PsfKernel kernel{Image(d, d), pitch};
    for (std::uint32_t y = 0; y < d; ++y)
      for (std::uint32_t x = 0; x < d; ++x) kernel.samples(y, x) = in.f32();
    grid.kernels.push_back(std::move(kernel));
  }
  grid.field_coords = field_grid_positions(grid.rows, grid.cols);
  return grid;
}

std::filesystem::path psf_sidecar_path(const std::filesystem::path& grid_path) {
  auto p = grid_path;
  p += ".meta.toml";
  return p;
}

std::string psf_grid_id(std::span<const std::uint8_t> encoded) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(binary::fnv1a(encoded)));
  return buf;
}

std::string psf_grid_id(const PsfGrid& grid) { return psf_grid_id(encode_psf_grid(grid)); }

void write_psf_grid(const std::filesystem::path& path, const PsfGrid& grid) {
  const auto bytes = encode_psf_grid(grid);
  binary::write_file(path, bytes);

  toml::array wavelengths;
  for (double l : grid.wavelengths_um) wavelengths.push_back(l);
  toml::array coords;
  for (const auto& [fx, fy] : grid.field_coords) coords.push_back(toml::array{fx, fy});
  toml::table meta{
      {"grid_id", psf_grid_id(bytes)},
      {"rows", grid.rows},
      {"cols", grid.cols},
      {"psf_size", grid.psf_size()},
      {"pixel_pitch", grid.pixel_pitch()},
      {"wavelengths_um", std::move(wavelengths)},
      {"field_coords", std::move(coords)},
  };
  std::ofstream out(psf_sidecar_path(path), std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write PSF sidecar");
  out << meta << '\n';
}

PsfGrid read_psf_grid(const std::filesystem::path& path) {
  PsfGrid grid = decode_psf_grid(binary::read_file(path));
  const auto sidecar = psf_sidecar_path(path);
  if (!std::filesystem::exists(sidecar)) return grid;

  toml::table meta;
  try {
    meta = toml::parse_file(sidecar.string());
  } catch (const toml::parse_error& e) {
    fail(ErrorKind::io, "PSF sidecar: " + std::string(e.description()));
  }
  require(meta["rows"].value_or(-1) == grid.rows && meta["cols"].value_or(-1) == grid.cols,
          ErrorKind::dimension, "PSF sidecar does not match grid dimensions");
  if (const auto* arr = meta["wavelengths_um"].as_array()) {
    for (const auto& v : *arr) grid.wavelengths_um.push_back(v.value_or(0.0));
  }
  if (const auto* arr = meta["field_coords"].as_array()) {
    require(arr->size() == grid.kernels.size(), ErrorKind::dimension,
            "PSF sidecar field count does not match grid");
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* pair = (*arr)[i].as_array();
      require(pair && pair->size() == 2, ErrorKind::io, "PSF sidecar field_coords malformed");
      grid.field_coords[i] = {(*pair)[0].value_or(0.0), (*pair)[1].value_or(0.0)};
    }
  }
  return grid;
}

}  // namespace lenssim
