#include "lenssim/optics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "lenssim/error.hpp"
#include "lenssim/fft.hpp"
#include "lenssim/parallel.hpp"

namespace lenssim {

namespace {

constexpr double kPi = std::numbers::pi;

/// Normalized pupil coordinate of sample i: the grid spans [-1, 1].
double pupil_coord(int i, int n) { return (i + 0.5 - 0.5 * n) / (0.5 * n); }

double factorial(int n) { return std::tgamma(n + 1.0); }

double zernike_radial(int n, int m, double rho) {
  double sum = 0.0;
  for (int k = 0; k <= (n - m) / 2; ++k) {
    const double c = ((k % 2) ? -1.0 : 1.0) * factorial(n - k) /
                     (factorial(k) * factorial((n + m) / 2 - k) * factorial((n - m) / 2 - k));
    sum += c * std::pow(rho, n - 2 * k);
  }
  return sum;
}

/// Pairwise sum of kernels in index order [lo, hi).
Image pairwise_sum(const std::vector<Image>& terms, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return terms[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(terms, lo, mid) + pairwise_sum(terms, mid, hi);
}

/// Overlap of output bins with source bins along one axis, as a fraction of
/// each source bin. Columns sum to 1 when the output covers the source.
Eigen::MatrixXd rebin_matrix(Eigen::Index n_in, Eigen::Index n_out, double ratio) {
  const double c_in = 0.5 * static_cast<double>(n_in - 1);
  const double c_out = 0.5 * static_cast<double>(n_out - 1);
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n_out, n_in);
  for (Eigen::Index j = 0; j < n_out; ++j) {
    const double center = (static_cast<double>(j) - c_out) * ratio;
    const double lo = center - 0.5 * ratio;
    const double hi = center + 0.5 * ratio;
    for (Eigen::Index i = 0; i < n_in; ++i) {
      const double s = static_cast<double>(i) - c_in;
      const double overlap = std::min(hi, s + 0.5) - std::max(lo, s - 0.5);
      if (overlap > 0.0) r(j, i) = overlap;
    }
  }
  return r;
}

void normalize_in_place(Image& k, const char* what) {
  const double total = k.sum();
  require(total > 0.0 && std::isfinite(total), ErrorKind::degenerate,
          std::string(what) + ": kernel has no energy");
  k /= total;
}

}  // namespace

void PupilSpec::validate() const {
  require(grid_size >= 32 && grid_size % 2 == 0, ErrorKind::parameter,
          "grid_size must be even and >= 32");
  require(aperture_diameter > 0.0, ErrorKind::parameter, "aperture_diameter must be > 0");
  require(focal_length > 0.0, ErrorKind::parameter, "focal_length must be > 0");
  require(obstruction_ratio >= 0.0 && obstruction_ratio < 1.0, ErrorKind::parameter,
          "obstruction_ratio must be in [0, 1)");
  require(pad_factor >= 1, ErrorKind::parameter, "pad_factor must be >= 1");
}

double PupilSpec::psf_sample_pitch(double wavelength) const {
  // Pupil spacing dx = D / N; transform length pad * N.
  return wavelength * focal_length / (pad_factor * aperture_diameter);
}

Image PupilSpec::aperture() const {
  validate();
  Image a(grid_size, grid_size);
  for (int y = 0; y < grid_size; ++y)
    for (int x = 0; x < grid_size; ++x) {
      const double rho = std::hypot(pupil_coord(x, grid_size), pupil_coord(y, grid_size));
      a(y, x) = (rho <= 1.0 && rho >= obstruction_ratio) ? 1.0 : 0.0;
    }
  return a;
}

void PsfKernel::validate(double tolerance) const {
  require(samples.rows() == samples.cols(), ErrorKind::dimension, "PSF kernel must be square");
  require(samples.rows() % 2 == 1, ErrorKind::dimension, "PSF kernel size must be odd");
  require(pixel_pitch > 0.0, ErrorKind::parameter, "PSF pixel pitch must be > 0");
  require((samples >= 0.0).all() && samples.allFinite(), ErrorKind::parameter,
          "PSF samples must be finite and nonnegative");
  require(std::abs(samples.sum() - 1.0) <= tolerance, ErrorKind::parameter,
          "PSF kernel must sum to 1");
}

void PsfGrid::validate(double tolerance) const {
  require(rows >= 1 && cols >= 1, ErrorKind::dimension, "PSF grid must have at least one region");
  require(kernels.size() == static_cast<std::size_t>(rows) * cols, ErrorKind::dimension,
          "PSF grid kernel count does not match rows x cols");
  for (const auto& k : kernels) {
    k.validate(tolerance);
    require(k.size() == kernels.front().size() && k.pixel_pitch == kernels.front().pixel_pitch,
            ErrorKind::dimension, "PSF grid kernels must share size and pitch");
  }
}

std::pair<int, int> noll_to_nm(int j) {
  require(j >= 1, ErrorKind::parameter, "Noll index must be >= 1");
  int n = 0;
  int j1 = j - 1;
  while (j1 > n) {
    ++n;
    j1 -= n;
  }
  const int m = (n % 2) + 2 * ((j1 + ((n + 1) % 2)) / 2);
  return {n, (j % 2 == 0) ? m : -m};
}

double zernike(int noll, double rho, double theta) {
  const auto [n, m] = noll_to_nm(noll);
  const int am = std::abs(m);
  const double radial = zernike_radial(n, am, rho);
  if (m == 0) return std::sqrt(n + 1.0) * radial;
  const double norm = std::sqrt(2.0 * (n + 1.0));
  return norm * radial * (m > 0 ? std::cos(am * theta) : std::sin(am * theta));
}

Image zernike_wavefront(const PupilSpec& spec, const WavefrontField& field) {
  spec.validate();
  const int n = spec.grid_size;
  if (field.mode == WavefrontField::Mode::raster) {
    require(field.raster.rows() == n && field.raster.cols() == n, ErrorKind::dimension,
            "wavefront raster does not match pupil grid_size");
    require(field.raster.allFinite(), ErrorKind::parameter, "wavefront raster not finite");
    return field.raster;
  }
  for (const auto& t : field.zernike) {
    require(std::isfinite(t.coefficient), ErrorKind::parameter, "Zernike coefficient not finite");
    noll_to_nm(t.noll);
  }
  const Image mask = spec.aperture();
  Image w = Image::Zero(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (mask(y, x) == 0.0) continue;
      const double px = pupil_coord(x, n);
      const double py = pupil_coord(y, n);
      const double rho = std::hypot(px, py);
      const double theta = std::atan2(py, px);
      double v = 0.0;
      for (const auto& t : field.zernike) v += t.coefficient * zernike(t.noll, rho, theta);
      w(y, x) = v;
    }
  return w;
}

Image remove_piston_tilt(const PupilSpec& spec, const Image& wavefront) {
  const Image mask = spec.aperture();
  require(wavefront.rows() == mask.rows() && wavefront.cols() == mask.cols(),
          ErrorKind::dimension, "wavefront does not match pupil grid_size");
  const int n = spec.grid_size;
  const auto count = static_cast<Eigen::Index>(mask.sum());
  Eigen::MatrixXd design(count, 3);
  Eigen::VectorXd values(count);
  Eigen::Index row = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (mask(y, x) != 0.0) {
        design.row(row) << 1.0, pupil_coord(x, n), pupil_coord(y, n);
        values(row++) = wavefront(y, x);
      }
  const Eigen::Vector3d fit = design.colPivHouseholderQr().solve(values);
  Image out = wavefront;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (mask(y, x) != 0.0)
        out(y, x) -= fit(0) + fit(1) * pupil_coord(x, n) + fit(2) * pupil_coord(y, n);
  return out;
}

ComplexPlane build_pupil(const PupilSpec& spec, const Image& wavefront, double wavelength) {
  require(wavelength > 0.0 && std::isfinite(wavelength), ErrorKind::parameter,
          "wavelength must be > 0");
  const Image a = spec.aperture();
  require(wavefront.rows() == a.rows() && wavefront.cols() == a.cols(), ErrorKind::dimension,
          "wavefront does not match pupil grid_size");
  ComplexPlane u(a.rows(), a.cols());
  for (Eigen::Index y = 0; y < a.rows(); ++y)
    for (Eigen::Index x = 0; x < a.cols(); ++x)
      u(y, x) = a(y, x) == 0.0 ? std::complex<double>(0.0, 0.0)
                               : a(y, x) * std::polar(1.0, 2.0 * kPi * wavefront(y, x));
  return u;
}

PsfKernel psf_from_pupil(const ComplexPlane& pupil, int pad_factor, int crop_size,
                         double sample_pitch) {
  require(pupil.rows() == pupil.cols() && pupil.rows() >= 32, ErrorKind::dimension,
          "pupil grid must be square with side >= 32");
  require(pad_factor >= 1, ErrorKind::parameter, "pad_factor must be >= 1");
  require(crop_size >= 0, ErrorKind::parameter, "crop_size must be >= 0");
  require((pupil.abs2() > 0.0).any(), ErrorKind::degenerate, "pupil has no energy");

  const Eigen::Index n = pupil.rows() * pad_factor;
  ComplexPlane field = ComplexPlane::Zero(n, n);
  field.topLeftCorner(pupil.rows(), pupil.cols()) = pupil;
  fft2(field);
  const Image intensity = fftshift(field.abs2());

  Eigen::Index crop = crop_size == 0 ? n - 1 : std::min<Eigen::Index>(crop_size, n - 1);
  if (crop % 2 == 0) --crop;
  const Eigen::Index start = n / 2 - crop / 2;
  PsfKernel k{intensity.block(start, start, crop, crop), sample_pitch};
  normalize_in_place(k.samples, "psf_from_pupil");
  return k;
}

PsfKernel resample_psf_to_detector(const PsfKernel& psf, double source_pitch,
                                   double detector_pitch) {
  require(source_pitch > 0.0 && detector_pitch > 0.0, ErrorKind::parameter,
          "pitches must be > 0");
  require(psf.samples.rows() == psf.samples.cols(), ErrorKind::dimension,
          "PSF kernel must be square");
  const Eigen::Index n_in = psf.samples.rows();
  require(n_in >= 1, ErrorKind::resolution, "empty PSF kernel");

  const double ratio = detector_pitch / source_pitch;
  const bool odd = n_in % 2 == 1;
  const double half_extent = 0.5 * static_cast<double>(n_in) / ratio;
  // Guard against round-off pushing an exact fit into an extra ring.
  const double slack = 1e-9;
  const Eigen::Index n_out = odd
      ? 2 * static_cast<Eigen::Index>(std::ceil(half_extent - 0.5 - slack)) + 1
      : 2 * static_cast<Eigen::Index>(std::ceil(half_extent - slack));
  require(n_out >= 1, ErrorKind::resolution, "resampled PSF smaller than 1x1");
  require(n_out <= 1 << 15, ErrorKind::resolution, "resampled PSF too large");

  const Eigen::MatrixXd r = rebin_matrix(n_in, n_out, ratio);
  const Eigen::MatrixXd rebinned = r * psf.samples.matrix() * r.transpose();

  PsfKernel out;
  out.pixel_pitch = detector_pitch;
  if (odd) {
    out.samples = rebinned.array();
  } else {
    out.samples = Image::Zero(n_out + 1, n_out + 1);
    out.samples.topLeftCorner(n_out, n_out) = rebinned.array();
  }
  out.samples = out.samples.max(0.0);
  normalize_in_place(out.samples, "resample_psf_to_detector");
  return out;
}

PsfKernel fit_kernel_size(const PsfKernel& psf, int size) {
  require(size >= 1 && size % 2 == 1, ErrorKind::parameter, "kernel size must be odd");
  const Eigen::Index n = psf.samples.rows();
  require(n % 2 == 1 && psf.samples.cols() == n, ErrorKind::dimension,
          "kernel must be square and odd");
  PsfKernel out{Image::Zero(size, size), psf.pixel_pitch};
  const Eigen::Index half = std::min<Eigen::Index>(size, n) / 2;
  const Eigen::Index len = 2 * half + 1;
  out.samples.block(size / 2 - half, size / 2 - half, len, len) =
      psf.samples.block(n / 2 - half, n / 2 - half, len, len);
  normalize_in_place(out.samples, "fit_kernel_size");
  return out;
}

PsfGrid build_psf_grid(const PupilSpec& spec, const std::vector<WavefrontField>& fields,
                       int rows, int cols, const std::vector<double>& wavelengths_um,
                       const PsfGridOptions& options) {
  spec.validate();
  require(rows >= 1 && cols >= 1, ErrorKind::dimension, "grid must have at least one region");
  require(fields.size() == static_cast<std::size_t>(rows) * cols, ErrorKind::dimension,
          "field count does not match rows x cols");
  require(!wavelengths_um.empty(), ErrorKind::parameter, "wavelength list is empty");
  require(options.psf_size >= 1 && options.psf_size % 2 == 1, ErrorKind::parameter,
          "psf_size must be odd");
  require(options.detector_pitch > 0.0, ErrorKind::parameter, "detector_pitch must be > 0");
  require(options.reference_wavelength_um > 0.0, ErrorKind::parameter,
          "reference wavelength must be > 0");
  require(options.spectral_weights.empty() ||
              options.spectral_weights.size() == wavelengths_um.size(),
          ErrorKind::parameter, "spectral_weights length must match wavelengths");
  for (double l : wavelengths_um)
    require(l > 0.0 && std::isfinite(l), ErrorKind::parameter, "wavelengths must be > 0");

  // Sort (wavelength, weight) pairs so the spectral sum order is canonical.
  std::vector<std::pair<double, double>> band;
  for (std::size_t i = 0; i < wavelengths_um.size(); ++i)
    band.emplace_back(wavelengths_um[i],
                      options.spectral_weights.empty() ? 1.0 : options.spectral_weights[i]);
  std::sort(band.begin(), band.end());
  double weight_total = 0.0;
  for (const auto& [l, w] : band) {
    require(w >= 0.0 && std::isfinite(w), ErrorKind::parameter, "spectral weights must be >= 0");
    weight_total += w;
  }
  require(weight_total > 0.0, ErrorKind::parameter, "spectral weights sum to zero");

  std::vector<Image> wavefronts(fields.size());
  for (std::size_t f = 0; f < fields.size(); ++f) {
    wavefronts[f] = zernike_wavefront(spec, fields[f]);
    if (options.remove_piston_tilt) wavefronts[f] = remove_piston_tilt(spec, wavefronts[f]);
  }

  const std::size_t nl = band.size();
  std::vector<Image> mono(fields.size() * nl);
  parallel_for(mono.size(), options.threads, [&](std::size_t job) {
    const std::size_t f = job / nl;
    const auto [lambda_um, weight] = band[job % nl];
    const double lambda = lambda_um * 1e-6;
    const Image w = wavefronts[f] * (options.reference_wavelength_um / lambda_um);
    const double pitch = spec.psf_sample_pitch(lambda);
    int crop = static_cast<int>(std::ceil((options.psf_size + 2) * options.detector_pitch / pitch));
    crop |= 1;
    const PsfKernel fine = psf_from_pupil(build_pupil(spec, w, lambda), spec.pad_factor, crop, pitch);
    const PsfKernel det = resample_psf_to_detector(fine, pitch, options.detector_pitch);
    mono[job] = fit_kernel_size(det, options.psf_size).samples * (weight / weight_total);
  });

  PsfGrid grid;
  grid.rows = rows;
  grid.cols = cols;
  grid.kernels.reserve(fields.size());
  for (std::size_t f = 0; f < fields.size(); ++f) {
    std::vector<Image> terms(mono.begin() + f * nl, mono.begin() + (f + 1) * nl);
    PsfKernel k{pairwise_sum(terms, 0, nl), options.detector_pitch};
    normalize_in_place(k.samples, "build_psf_grid");
    grid.kernels.push_back(std::move(k));
    grid.field_coords.push_back({fields[f].fx, fields[f].fy});
  }
  for (const auto& [l, w] : band) grid.wavelengths_um.push_back(l);
  grid.validate();
  return grid;
}

std::vector<std::array<double, 2>> field_grid_positions(int rows, int cols) {
  require(rows >= 1 && cols >= 1, ErrorKind::dimension, "grid must have at least one region");
  std::vector<std::array<double, 2>> out;
  out.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.push_back({2.0 * (c + 0.5) / cols - 1.0, 2.0 * (r + 0.5) / rows - 1.0});
  return out;
}

WavefrontField seidel_field(const PupilSpec& spec, const SeidelCoefficients& seidel,
                            const std::vector<ZernikeTerm>& base, double fx, double fy) {
  WavefrontField zf;
  zf.zernike = base;
  Image w = zernike_wavefront(spec, zf);

  const double h = std::hypot(fx, fy) / std::sqrt(2.0);
  const double ux = h > 0.0 ? fx / std::hypot(fx, fy) : 1.0;
  const double uy = h > 0.0 ? fy / std::hypot(fx, fy) : 0.0;
  const Image mask = spec.aperture();
  const int n = spec.grid_size;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (mask(y, x) == 0.0) continue;
      const double px = pupil_coord(x, n);
      const double py = pupil_coord(y, n);
      const double rho2 = px * px + py * py;
      const double along = px * ux + py * uy;  // rho cos(phi)
      w(y, x) += seidel.spherical * rho2 * rho2 + seidel.coma * h * rho2 * along +
                 seidel.astigmatism * h * h * along * along +
                 seidel.field_curvature * h * h * rho2 + seidel.distortion * h * h * h * along;
    }

  WavefrontField out;
  out.mode = WavefrontField::Mode::raster;
  out.raster = std::move(w);
  out.fx = fx;
  out.fy = fy;
  return out;
}

}  // namespace lenssim
