#include "lenssim/fft.hpp"

#include <unsupported/Eigen/FFT>
#include <vector>

#include "lenssim/error.hpp"

namespace lenssim {

namespace {

bool is_fast(std::size_t n) {
  for (std::size_t f : {2u, 3u, 5u})
    while (n % f == 0) n /= f;
  return n == 1;
}

Eigen::FFT<double>& thread_fft() {
  thread_local Eigen::FFT<double> fft = [] {
    Eigen::FFT<double> f;
    f.SetFlag(Eigen::FFT<double>::Unscaled);
    return f;
  }();
  return fft;
}

}  // namespace

std::size_t next_fast_size(std::size_t n) {
  if (n <= 1) return 1;
  while (!is_fast(n)) ++n;
  return n;
}

void fft2(ComplexPlane& data, bool inverse) {
  using C = std::complex<double>;
  auto& fft = thread_fft();
  const int rows = static_cast<int>(data.rows());
  const int cols = static_cast<int>(data.cols());
  std::vector<C> in(std::max(rows, cols)), out(std::max(rows, cols));

  for (int y = 0; y < rows; ++y) {
    C* row = data.data() + static_cast<std::ptrdiff_t>(y) * cols;
    std::copy(row, row + cols, in.begin());
    if (inverse)
      fft.inv(out.data(), in.data(), cols);
    else
      fft.fwd(out.data(), in.data(), cols);
    std::copy(out.begin(), out.begin() + cols, row);
  }
  for (int x = 0; x < cols; ++x) {
    for (int y = 0; y < rows; ++y) in[y] = data(y, x);
    if (inverse)
      fft.inv(out.data(), in.data(), rows);
    else
      fft.fwd(out.data(), in.data(), rows);
    for (int y = 0; y < rows; ++y) data(y, x) = out[y];
  }
  if (inverse) data /= static_cast<double>(rows) * cols;
}

Image convolve_valid_fft(const Image& region, const Image& kernel) {
  const Eigen::Index out_rows = region.rows() - kernel.rows() + 1;
  const Eigen::Index out_cols = region.cols() - kernel.cols() + 1;
  require(out_rows > 0 && out_cols > 0, ErrorKind::dimension,
          "convolution region smaller than kernel");

  const auto ly = static_cast<Eigen::Index>(next_fast_size(region.rows()));
  const auto lx = static_cast<Eigen::Index>(next_fast_size(region.cols()));

  // Two real transforms packed into one complex transform: region in the
  // real part, kernel in the imaginary part.
  ComplexPlane packed = ComplexPlane::Zero(ly, lx);
  packed.topLeftCorner(region.rows(), region.cols()).real() = region;
  packed.topLeftCorner(kernel.rows(), kernel.cols()).imag() = kernel;
  fft2(packed);

  ComplexPlane product(ly, lx);
  const std::complex<double> half_i(0.0, 0.5);
  for (Eigen::Index y = 0; y < ly; ++y) {
    const Eigen::Index ny = (ly - y) % ly;
    for (Eigen::Index x = 0; x < lx; ++x) {
      const Eigen::Index nx = (lx - x) % lx;
      const auto z = packed(y, x);
      const auto zc = std::conj(packed(ny, nx));
      const auto r = 0.5 * (z + zc);
      const auto k = -half_i * (z - zc);
      product(y, x) = r * k;
    }
  }
  fft2(product, true);

  // Circular wrap only touches the first kernel-1 samples along each axis.
  return product.block(kernel.rows() - 1, kernel.cols() - 1, out_rows, out_cols).real();
}

Image convolve_valid_direct(const Image& region, const Image& kernel) {
  const Eigen::Index kr = kernel.rows();
  const Eigen::Index kc = kernel.cols();
  const Eigen::Index out_rows = region.rows() - kr + 1;
  const Eigen::Index out_cols = region.cols() - kc + 1;
  require(out_rows > 0 && out_cols > 0, ErrorKind::dimension,
          "convolution region smaller than kernel");

  Image out = Image::Zero(out_rows, out_cols);
  for (Eigen::Index i = 0; i < kr; ++i)
    for (Eigen::Index j = 0; j < kc; ++j) {
      const double w = kernel(i, j);
      if (w == 0.0) continue;
      out += w * region.block(kr - 1 - i, kc - 1 - j, out_rows, out_cols);
    }
  return out;
}

}  // namespace lenssim
