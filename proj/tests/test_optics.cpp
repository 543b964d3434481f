#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lenssim/error.hpp"
#include "lenssim/optics.hpp"
#include "oracles.hpp"

using namespace lenssim;

namespace {

PupilSpec small_spec(int n = 64) {
  PupilSpec s;
  s.grid_size = n;
  return s;
}

Image to_image(const oracle::Grid& g) {
  Image out(g.rows, g.cols);
  for (int y = 0; y < g.rows; ++y)
    for (int x = 0; x < g.cols; ++x) out(y, x) = g(y, x);
  return out;
}

oracle::Grid to_grid(const Image& im) {
  oracle::Grid g(static_cast<int>(im.rows()), static_cast<int>(im.cols()));
  for (int y = 0; y < g.rows; ++y)
    for (int x = 0; x < g.cols; ++x) g(y, x) = im(y, x);
  return g;
}

template <typename Fn>
ErrorKind error_kind(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::io;
}

PsfKernel airy_like(const PupilSpec& spec, double lambda, const Image& w) {
  return psf_from_pupil(build_pupil(spec, w, lambda), spec.pad_factor, 41, spec.psf_sample_pitch(lambda));
}

}  // namespace

TEST_CASE("pupil spec validation") {
  PupilSpec s;
  CHECK_NOTHROW(s.validate());
  s.grid_size = 30;
  CHECK(error_kind([&] { s.validate(); }) == ErrorKind::parameter);
  s.grid_size = 33;
  CHECK(error_kind([&] { s.validate(); }) == ErrorKind::parameter);
  s = {};
  s.aperture_diameter = 0;
  CHECK(error_kind([&] { s.validate(); }) == ErrorKind::parameter);
  s = {};
  s.obstruction_ratio = 1.0;
  CHECK(error_kind([&] { s.validate(); }) == ErrorKind::parameter);
  CHECK(PupilSpec{}.f_number() == doctest::Approx(1.0));
}

TEST_CASE("annular aperture removes the central obstruction") {
  PupilSpec s = small_spec();
  s.obstruction_ratio = 0.5;
  const Image a = s.aperture();
  CHECK(a(32, 32) == 0.0);
  CHECK(a(32, 50) == 1.0);
  CHECK(a(0, 0) == 0.0);
}

TEST_CASE("noll index mapping") {
  const std::pair<int, int> expected[] = {{0, 0}, {1, 1}, {1, -1}, {2, 0}, {2, -2}, {2, 2},
                                          {3, -1}, {3, 1}, {3, -3}, {3, 3}, {4, 0}};
  for (int j = 1; j <= 11; ++j) CHECK(noll_to_nm(j) == expected[j - 1]);
  CHECK(error_kind([] { noll_to_nm(0); }) == ErrorKind::parameter);
}

TEST_CASE("zernike wavefront evaluation") {
  const PupilSpec spec = small_spec();
  const Image mask = spec.aperture();

  SUBCASE("no coefficients gives a zero raster") {
    WavefrontField f;
    CHECK((zernike_wavefront(spec, f) == 0.0).all());
  }
  SUBCASE("piston is constant inside the aperture") {
    WavefrontField f;
    f.zernike = {{1, 0.5}};
    const Image w = zernike_wavefront(spec, f);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) CHECK(w(y, x) == (mask(y, x) > 0 ? 0.5 : 0.0));
  }
  SUBCASE("defocus matches the radial formula") {
    WavefrontField f;
    f.zernike = {{4, 0.3}};
    const Image w = zernike_wavefront(spec, f);
    int checked = 0;
    for (int y = 0; y < 64; y += 3)
      for (int x = 0; x < 64; x += 5) {
        const double px = (x + 0.5 - 32) / 32, py = (y + 0.5 - 32) / 32;
        const double rho = std::sqrt(px * px + py * py);
        if (rho > 1) {
          CHECK(w(y, x) == 0.0);
          continue;
        }
        CHECK(w(y, x) == doctest::Approx(0.3 * oracle::defocus(rho)).epsilon(1e-12));
        ++checked;
      }
    CHECK(checked > 50);
  }
  SUBCASE("raster mode passes through") {
    WavefrontField f;
    f.mode = WavefrontField::Mode::raster;
    f.raster = Image::Random(64, 64);
    CHECK((zernike_wavefront(spec, f) == f.raster).all());
    f.raster = Image::Zero(32, 32);
    CHECK(error_kind([&] { zernike_wavefront(spec, f); }) == ErrorKind::dimension);
  }
  SUBCASE("non-finite coefficients are rejected") {
    WavefrontField f;
    f.zernike = {{4, NAN}};
    CHECK(error_kind([&] { zernike_wavefront(spec, f); }) == ErrorKind::parameter);
  }
}

TEST_CASE("piston and tilt removal") {
  const PupilSpec spec = small_spec();
  WavefrontField f;
  f.zernike = {{1, 0.4}, {2, 0.2}, {3, -0.1}, {4, 0.25}};
  const Image cleaned = remove_piston_tilt(spec, zernike_wavefront(spec, f));
  WavefrontField d;
  d.zernike = {{4, 0.25}};
  const Image defocus = remove_piston_tilt(spec, zernike_wavefront(spec, d));
  CHECK((cleaned - defocus).abs().maxCoeff() < 1e-10);
}

TEST_CASE("build pupil") {
  const PupilSpec spec = small_spec();
  const Image a = spec.aperture();
  SUBCASE("zero phase gives the aperture") {
    const ComplexPlane u = build_pupil(spec, Image::Zero(64, 64), 10e-6);
    CHECK((u.real() == a).all());
    CHECK((u.imag() == 0.0).all());
  }
  SUBCASE("half a wave flips the sign") {
    const ComplexPlane u = build_pupil(spec, Image::Constant(64, 64, 0.5), 10e-6);
    CHECK((u.real() + a).abs().maxCoeff() < 1e-12);
    CHECK(u.imag().abs().maxCoeff() < 1e-12);
  }
  SUBCASE("the 8-12 um band is accepted") {
    for (double l : {8.0, 9.0, 10.0, 11.0, 12.0}) CHECK_NOTHROW(build_pupil(spec, Image::Zero(64, 64), l * 1e-6));
  }
  SUBCASE("nonpositive wavelength is a parameter error") {
    CHECK(error_kind([&] { build_pupil(spec, Image::Zero(64, 64), 0.0); }) == ErrorKind::parameter);
    CHECK(error_kind([&] { build_pupil(spec, Image::Zero(64, 64), -1e-6); }) == ErrorKind::parameter);
  }
  SUBCASE("wavefront size must match") {
    CHECK(error_kind([&] { build_pupil(spec, Image::Zero(32, 32), 1e-5); }) == ErrorKind::dimension);
  }
}

TEST_CASE("psf from pupil") {
  SUBCASE("first null of the unaberrated pupil matches the Airy radius") {
    PupilSpec spec;
    spec.grid_size = 256;
    const double lambda = 10e-6;
    const double pitch = spec.psf_sample_pitch(lambda);
    CHECK(pitch == doctest::Approx(2.5e-6));
    const PsfKernel k = psf_from_pupil(build_pupil(spec, Image::Zero(256, 256), lambda), 4, 41, pitch);
    std::vector<double> row;
    for (int r = 0; r <= 20; ++r) row.push_back(k.samples(20, 20 + r));
    const double null = oracle::first_null_radius(row) * pitch;
    const double expected = 1.22 * lambda * spec.f_number();
    CHECK(std::abs(null - expected) / expected < 0.02);
    CHECK(std::abs(null - oracle::airy_null_factor() * lambda) / expected < 0.02);
  }
  SUBCASE("a single nonzero pupil sample gives a flat PSF") {
    ComplexPlane u = ComplexPlane::Zero(32, 32);
    u(5, 9) = {0.3, -0.7};
    const PsfKernel k = psf_from_pupil(u, 4, 0, 1.0);
    CHECK(k.size() == 127);
    CHECK((k.samples - k.samples(0, 0)).abs().maxCoeff() < 1e-15);
    CHECK(k.samples.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("unit sum, nonnegative and odd") {
    const PupilSpec spec = small_spec();
    WavefrontField f;
    f.zernike = {{4, 0.7}, {7, 0.3}, {11, -0.2}};
    const PsfKernel k = airy_like(spec, 9e-6, zernike_wavefront(spec, f));
    CHECK(std::abs(k.samples.sum() - 1.0) < 1e-9);
    CHECK(k.size() % 2 == 1);
    CHECK_NOTHROW(k.validate());
  }
  SUBCASE("unaberrated PSF is symmetric under 90 degree rotation") {
    const PupilSpec spec = small_spec();
    const PsfKernel k = airy_like(spec, 10e-6, Image::Zero(64, 64));
    const Image rotated = k.samples.transpose().colwise().reverse();
    CHECK((k.samples - rotated).abs().maxCoeff() < 1e-6);
  }
  SUBCASE("piston does not change the PSF") {
    const PupilSpec spec = small_spec();
    WavefrontField f;
    f.zernike = {{5, 0.4}, {8, 0.2}};
    const Image w = zernike_wavefront(spec, f);
    const Image shifted = w + spec.aperture() * 0.37;
    const Image a = airy_like(spec, 10e-6, w).samples;
    const Image b = airy_like(spec, 10e-6, shifted).samples;
    CHECK((a - b).abs().maxCoeff() < 1e-9);
  }
  SUBCASE("all-zero pupil is degenerate") {
    CHECK(error_kind([] { psf_from_pupil(ComplexPlane::Zero(32, 32), 4, 0, 1.0); }) == ErrorKind::degenerate);
  }
  SUBCASE("pupil side below 32 is rejected") {
    CHECK(error_kind([] { psf_from_pupil(ComplexPlane::Ones(16, 16), 4, 0, 1.0); }) == ErrorKind::dimension);
  }
}

TEST_CASE("resample to detector") {
  SUBCASE("equal pitches are an identity") {
    const Image g = to_image(oracle::gaussian(15, 2.0));
    const PsfKernel out = resample_psf_to_detector({g, 12e-6}, 12e-6, 12e-6);
    REQUIRE(out.size() == 15);
    CHECK((out.samples - g).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("2:1 on a uniform 4x4 block") {
    const PsfKernel out = resample_psf_to_detector({Image::Constant(4, 4, 1.0 / 16), 1.0}, 1.0, 2.0);
    REQUIRE(out.size() == 3);
    CHECK(out.samples.sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK((out.samples.topLeftCorner(2, 2) - 0.25).abs().maxCoeff() < 1e-15);
    CHECK((out.samples.row(2) == 0.0).all());
    CHECK((out.samples.col(2) == 0.0).all());
  }
  SUBCASE("3:1 Gaussian keeps its second moment") {
    const oracle::Grid src = oracle::gaussian(91, 9.0);
    const PsfKernel out = resample_psf_to_detector({to_image(src), 1.0}, 1.0, 3.0);
    CHECK(out.size() % 2 == 1);
    CHECK(std::abs(out.samples.sum() - 1.0) < 1e-12);
    // Physical units: source pixels of pitch 1, detector pixels of pitch 3.
    const double before = oracle::rms_radius_dense(src, 8);
    const double after = 3.0 * oracle::rms_radius_dense(to_grid(out.samples), 8);
    CHECK(std::abs(after * after - before * before) / (before * before) < 0.03);
  }
  SUBCASE("the kernel center stays centered for odd inputs") {
    Image delta = Image::Zero(9, 9);
    delta(4, 4) = 1.0;
    const PsfKernel out = resample_psf_to_detector({delta, 1.0}, 1.0, 2.5);
    REQUIRE(out.size() % 2 == 1);
    CHECK(out.samples(out.size() / 2, out.size() / 2) == doctest::Approx(1.0));
  }
  SUBCASE("errors") {
    CHECK(error_kind([] { resample_psf_to_detector({Image(0, 0), 1.0}, 1.0, 2.0); }) == ErrorKind::resolution);
    CHECK(error_kind([] { resample_psf_to_detector({Image::Ones(3, 3), 1.0}, 0.0, 2.0); }) ==
          ErrorKind::parameter);
  }
}

TEST_CASE("fit kernel size") {
  const Image g = to_image(oracle::gaussian(11, 1.5));
  const PsfKernel big = fit_kernel_size({g, 1.0}, 21);
  CHECK(big.size() == 21);
  CHECK((big.samples.block(5, 5, 11, 11) - g).abs().maxCoeff() < 1e-15);
  const PsfKernel small = fit_kernel_size({g, 1.0}, 5);
  CHECK(small.size() == 5);
  CHECK(small.samples.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(error_kind([&] { fit_kernel_size({g, 1.0}, 4); }) == ErrorKind::parameter);
}

TEST_CASE("psf grid") {
  const PupilSpec spec = small_spec();
  PsfGridOptions opt;
  opt.psf_size = 15;

  SUBCASE("single field and wavelength") {
    const PsfGrid grid = build_psf_grid(spec, {WavefrontField{}}, 1, 1, {10.0}, opt);
    REQUIRE(grid.kernels.size() == 1);
    CHECK(grid.psf_size() == 15);
    CHECK(grid.pixel_pitch() == 12e-6);
    const Image& k = grid.kernels[0].samples;
    CHECK(k(7, 7) == k.maxCoeff());
    CHECK((k - k.transpose()).abs().maxCoeff() < 1e-12);
  }
  SUBCASE("two wavelengths keep unit sum") {
    const PsfGrid grid = build_psf_grid(spec, {WavefrontField{}}, 1, 1, {8.0, 12.0}, opt);
    CHECK(std::abs(grid.kernels[0].samples.sum() - 1.0) < 1e-9);
    CHECK(grid.wavelengths_um == std::vector<double>{8.0, 12.0});
  }
  SUBCASE("6x8 fields at five wavelengths give 48 valid kernels") {
    const SeidelCoefficients seidel{0.25, 0.5, 0.75, 1.0, 0.0};
    std::vector<WavefrontField> fields;
    for (const auto& [fx, fy] : field_grid_positions(6, 8)) fields.push_back(seidel_field(spec, seidel, {}, fx, fy));
    const PsfGrid grid = build_psf_grid(spec, fields, 6, 8, {8, 9, 10, 11, 12}, opt);
    CHECK(grid.kernels.size() == 48);
    CHECK(grid.field_coords.size() == 48);
    for (const auto& k : grid.kernels) {
      CHECK((k.samples >= 0.0).all());
      CHECK(std::abs(k.samples.sum() - 1.0) < 1e-9);
      CHECK(k.size() == 15);
    }
    CHECK(grid.field_coords[0][0] == doctest::Approx(-0.875));
    CHECK(grid.field_coords[0][1] == doctest::Approx(-5.0 / 6.0));
  }
  SUBCASE("wavelength order does not change the grid bits") {
    WavefrontField f;
    f.zernike = {{4, 0.5}, {8, 0.2}};
    opt.spectral_weights = {1.0, 2.0, 3.0, 4.0, 5.0};
    const PsfGrid a = build_psf_grid(spec, {f}, 1, 1, {8, 9, 10, 11, 12}, opt);
    opt.spectral_weights = {3.0, 5.0, 1.0, 4.0, 2.0};
    const PsfGrid b = build_psf_grid(spec, {f}, 1, 1, {10, 12, 8, 11, 9}, opt);
    CHECK((a.kernels[0].samples == b.kernels[0].samples).all());
  }
  SUBCASE("thread count does not change the grid bits") {
    WavefrontField f;
    f.zernike = {{4, 0.5}};
    const std::vector<WavefrontField> fields(4, f);
    opt.threads = 1;
    const PsfGrid a = build_psf_grid(spec, fields, 2, 2, {8, 10, 12}, opt);
    opt.threads = 4;
    const PsfGrid b = build_psf_grid(spec, fields, 2, 2, {8, 10, 12}, opt);
    for (std::size_t i = 0; i < 4; ++i) CHECK((a.kernels[i].samples == b.kernels[i].samples).all());
  }
  SUBCASE("errors") {
    WavefrontField bad;
    bad.mode = WavefrontField::Mode::raster;
    bad.raster = Image::Zero(32, 32);
    CHECK(error_kind([&] { build_psf_grid(spec, {WavefrontField{}, bad}, 1, 2, {10.0}, opt); }) ==
          ErrorKind::dimension);
    CHECK(error_kind([&] { build_psf_grid(spec, {WavefrontField{}}, 1, 2, {10.0}, opt); }) ==
          ErrorKind::dimension);
    CHECK(error_kind([&] { build_psf_grid(spec, {WavefrontField{}}, 1, 1, {}, opt); }) == ErrorKind::parameter);
  }
}

TEST_CASE("seidel field") {
  const PupilSpec spec = small_spec();
  const SeidelCoefficients seidel{0.0, 0.0, 0.0, 1.0, 0.0};
  const WavefrontField center = seidel_field(spec, seidel, {}, 0.0, 0.0);
  CHECK(center.mode == WavefrontField::Mode::raster);
  CHECK(center.raster.abs().maxCoeff() == 0.0);
  // Field curvature at the corner (h = 1): W = rho^2.
  const WavefrontField corner = seidel_field(spec, seidel, {}, 1.0, 1.0);
  const double px = (40 + 0.5 - 32) / 32.0, py = (20 + 0.5 - 32) / 32.0;
  CHECK(corner.raster(20, 40) == doctest::Approx(px * px + py * py));
}
