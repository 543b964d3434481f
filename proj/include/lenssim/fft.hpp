#pragma once

#include <cstddef>

#include "lenssim/types.hpp"

namespace lenssim {

/// Smallest n' >= n whose only prime factors are 2, 3 and 5.
std::size_t next_fast_size(std::size_t n);

/// In-place 2D DFT. The inverse is scaled by 1/(rows*cols).
void fft2(ComplexPlane& data, bool inverse = false);

/// Moves the zero-frequency sample from (0,0) to (rows/2, cols/2).
template <typename Derived>
Plane<typename Derived::Scalar> fftshift(const Eigen::DenseBase<Derived>& in) {
  const Eigen::Index rows = in.rows();
  const Eigen::Index cols = in.cols();
  Plane<typename Derived::Scalar> out(rows, cols);
  for (Eigen::Index y = 0; y < rows; ++y)
    for (Eigen::Index x = 0; x < cols; ++x)
      out((y + rows / 2) % rows, (x + cols / 2) % cols) = in(y, x);
  return out;
}

/// Linear convolution of `region` with `kernel`, keeping only the samples
/// that see a full kernel footprint: (rows - kr + 1) x (cols - kc + 1).
Image convolve_valid_fft(const Image& region, const Image& kernel);

/// Same contract as convolve_valid_fft, evaluated by sliding window.
Image convolve_valid_direct(const Image& region, const Image& kernel);

}  // namespace lenssim
