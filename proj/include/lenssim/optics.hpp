#pragma once

#include <array>
#include <utility>
#include <vector>

#include "lenssim/types.hpp"

namespace lenssim {

/// Square pupil sampling of an annular aperture. The grid spans exactly one
/// aperture diameter; rows run along pupil y, columns along pupil x.
struct PupilSpec {
  int grid_size = 128;
  double aperture_diameter = 0.07;  // m
  double focal_length = 0.07;       // m
  double obstruction_ratio = 0.0;
  int pad_factor = 4;

  void validate() const;
  double f_number() const { return focal_length / aperture_diameter; }

  /// PSF-plane sample spacing (m) of the padded transform at `wavelength` (m).
  double psf_sample_pitch(double wavelength) const;

  /// Aperture transmission A(x, y): 1 inside the annulus, 0 outside.
  Image aperture() const;

  friend bool operator==(const PupilSpec&, const PupilSpec&) = default;
};

struct ZernikeTerm {
  int noll = 1;
  double coefficient = 0.0;  // waves

  friend bool operator==(const ZernikeTerm&, const ZernikeTerm&) = default;
};

/// Wavefront aberration for one field point, in waves at the reference
/// wavelength. Raster mode carries a grid_size x grid_size OPD map.
struct WavefrontField {
  enum class Mode { zernike, raster };

  Mode mode = Mode::zernike;
  std::vector<ZernikeTerm> zernike;
  Image raster;
  double fx = 0.0;
  double fy = 0.0;
};

struct PsfKernel {
  Image samples;
  double pixel_pitch = 0.0;  // m

  Eigen::Index size() const { return samples.rows(); }
  /// Throws unless square, odd, nonnegative and unit-sum within `tolerance`.
  void validate(double tolerance = 1e-9) const;
};

/// Row-major rows x cols set of field-dependent kernels.
struct PsfGrid {
  int rows = 0;
  int cols = 0;
  std::vector<PsfKernel> kernels;
  std::vector<std::array<double, 2>> field_coords;  // (fx, fy) per kernel
  std::vector<double> wavelengths_um;

  const PsfKernel& at(int row, int col) const { return kernels[static_cast<std::size_t>(row) * cols + col]; }
  int psf_size() const { return kernels.empty() ? 0 : static_cast<int>(kernels.front().size()); }
  double pixel_pitch() const { return kernels.empty() ? 0.0 : kernels.front().pixel_pitch; }

  void validate(double tolerance = 1e-9) const;
};

/// Noll index j >= 1 to radial order n and signed azimuthal order m
/// (m < 0 selects the sine term).
std::pair<int, int> noll_to_nm(int j);

/// Unit-RMS normalized Zernike polynomial on the unit disk.
double zernike(int noll, double rho, double theta);

/// Evaluates the field's wavefront on the pupil grid (waves). Zernike mode
/// is zero outside the aperture; raster mode is returned unchanged.
Image zernike_wavefront(const PupilSpec& spec, const WavefrontField& field);

/// Least-squares piston and tilt removed over the clear aperture.
Image remove_piston_tilt(const PupilSpec& spec, const Image& wavefront);

/// U = A * exp(i 2 pi W), W in waves at the evaluation wavelength.
ComplexPlane build_pupil(const PupilSpec& spec, const Image& wavefront, double wavelength);

/// |F{U}|^2 on a pad_factor-times zero-padded grid, centered, cropped to an
/// odd `crop_size` (0 keeps the largest odd crop) and normalized to unit sum.
PsfKernel psf_from_pupil(const ComplexPlane& pupil, int pad_factor, int crop_size,
                         double sample_pitch);

/// Area-weighted rebinning from source_pitch to detector_pitch, renormalized.
/// Odd inputs keep a pixel centered on the kernel center; even inputs keep a
/// pixel boundary there and gain one trailing zero row and column.
PsfKernel resample_psf_to_detector(const PsfKernel& psf, double source_pitch,
                                   double detector_pitch);

/// Centered crop or zero-pad to an odd size, renormalized.
PsfKernel fit_kernel_size(const PsfKernel& psf, int size);

struct PsfGridOptions {
  int psf_size = 31;
  double detector_pitch = 12e-6;          // m
  double reference_wavelength_um = 10.0;  // wavefront waves are quoted here
  std::vector<double> spectral_weights;   // empty: uniform
  bool remove_piston_tilt = false;
  unsigned threads = 1;
};

/// Broadband field-dependent kernels. `fields` is row-major rows x cols.
/// Each wavelength is resampled to the detector before the spectral average,
/// which is summed pairwise over wavelengths sorted ascending.
PsfGrid build_psf_grid(const PupilSpec& spec, const std::vector<WavefrontField>& fields,
                       int rows, int cols, const std::vector<double>& wavelengths_um,
                       const PsfGridOptions& options = {});

/// Primary (third-order) aberration coefficients in waves at the reference
/// wavelength, scaled with normalized field height.
struct SeidelCoefficients {
  double spherical = 0.0;        // W040 rho^4
  double coma = 0.0;             // W131 h rho^3 cos(phi)
  double astigmatism = 0.0;      // W222 h^2 rho^2 cos^2(phi)
  double field_curvature = 0.0;  // W220 h^2 rho^2
  double distortion = 0.0;       // W311 h^3 rho cos(phi)

  friend bool operator==(const SeidelCoefficients&, const SeidelCoefficients&) = default;
};

/// Region-center field coordinates in [-1, 1]^2, row-major.
std::vector<std::array<double, 2>> field_grid_positions(int rows, int cols);

/// Raster wavefront for field point (fx, fy): base Zernike terms plus the
/// Seidel terms at field height |(fx, fy)| / sqrt(2).
WavefrontField seidel_field(const PupilSpec& spec, const SeidelCoefficients& seidel,
                            const std::vector<ZernikeTerm>& base, double fx, double fy);

}  // namespace lenssim
