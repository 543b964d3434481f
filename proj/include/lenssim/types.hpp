#pragma once

#include <Eigen/Dense>

namespace lenssim {

/// Row-major dense 2D plane. Images, kernels and maps are all planes.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Image = Plane<double>;
using ComplexPlane = Plane<std::complex<double>>;

}  // namespace lenssim
