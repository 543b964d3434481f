#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lenssim/blurmap.hpp"
#include "lenssim/degrade.hpp"
#include "lenssim/optics.hpp"

namespace lenssim {

struct OpticsConfig {
  PupilSpec pupil;
  int rows = 6;
  int cols = 8;
  std::vector<double> wavelengths_um{8.0, 9.0, 10.0, 11.0, 12.0};
  std::vector<double> spectral_weights;
  double detector_pitch = 12e-6;
  int psf_size = 31;
  double reference_wavelength_um = 10.0;
  bool remove_piston_tilt = false;
  /// Field-dependent aberration model used when synthesizing the grid.
  SeidelCoefficients seidel{0.25, 0.5, 0.75, 1.0, 0.0};
  std::vector<ZernikeTerm> zernike;

  friend bool operator==(const OpticsConfig&, const OpticsConfig&) = default;
};

struct BlurmapConfig {
  int height = 480;
  int width = 640;

  friend bool operator==(const BlurmapConfig&, const BlurmapConfig&) = default;
};

struct BridgeConfig {
  std::string weights;
  int channels = 16;
  int groups = 4;
  int se_ratio = 4;
  int large_kernel = 15;

  friend bool operator==(const BridgeConfig&, const BridgeConfig&) = default;
};

struct DatasetConfig {
  std::string manifest;
  std::string output_dir;
  std::string psf_grid;
  int width = 640;
  int height = 480;
  bool write_raw = false;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

struct PipelineConfig {
  OpticsConfig optics;
  DegradationConfig degrade;
  BlurmapConfig blurmap;
  GateParams gates;
  BridgeConfig bridge;
  DatasetConfig dataset;

  /// Range checks; throws a config error naming the field and its bound.
  void validate() const;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

PipelineConfig parse_config_string(const std::string& text);

/// Relative dataset/bridge paths resolve against the config file's directory.
PipelineConfig parse_config(const std::filesystem::path& path);

std::string to_toml(const PipelineConfig& config);

/// Row-major field list for the optics grid.
std::vector<WavefrontField> make_fields(const OpticsConfig& optics);

}  // namespace lenssim
