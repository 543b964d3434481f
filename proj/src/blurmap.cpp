#include "lenssim/blurmap.hpp"

#include <algorithm>

namespace lenssim {

void GateParams::validate() const {
  require(std::isfinite(theta_s) && std::isfinite(theta_l) && std::isfinite(theta_lambda),
          ErrorKind::parameter, "gate logits must be finite");
  require(alpha_s >= 0.0 && alpha_l >= 0.0 && alpha_lambda >= 0.0, ErrorKind::parameter,
          "alpha must be >= 0");
  require(eta >= 0.0 && eta < 1.0, ErrorKind::parameter, "eta must be in [0, 1)");
}

Image normalized_blur_factors(const PsfGrid& grid) {
  require(grid.rows >= 1 && grid.cols >= 1 &&
              grid.kernels.size() == static_cast<std::size_t>(grid.rows) * grid.cols,
          ErrorKind::dimension, "PSF grid is empty or inconsistent");
  Image factors(grid.rows, grid.cols);
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c) factors(r, c) = psf_blur_factor(grid.at(r, c));
  const double lo = factors.minCoeff();
  const double hi = factors.maxCoeff();
  if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) return Image::Constant(grid.rows, grid.cols, 0.5);
  return (factors - lo) / (hi - lo);
}

Image upsample_bilinear(const Image& coarse, int height, int width) {
  require(coarse.size() > 0, ErrorKind::dimension, "empty coarse grid");
  require(height >= 1 && width >= 1, ErrorKind::dimension, "output size must be positive");
  const auto rows = coarse.rows();
  const auto cols = coarse.cols();
  // Source coordinate of output sample i: (i + 0.5) * n / size - 0.5, clamped.
  auto axis = [](int size, Eigen::Index n, int i, Eigen::Index& i0, Eigen::Index& i1, double& t) {
    double u = (i + 0.5) * static_cast<double>(n) / size - 0.5;
    u = std::clamp(u, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<Eigen::Index>(std::floor(u));
    i1 = std::min<Eigen::Index>(i0 + 1, n - 1);
    t = u - static_cast<double>(i0);
  };
  Image out(height, width);
  for (int y = 0; y < height; ++y) {
    Eigen::Index y0, y1;
    double ty;
    axis(height, rows, y, y0, y1, ty);
    for (int x = 0; x < width; ++x) {
      Eigen::Index x0, x1;
      double tx;
      axis(width, cols, x, x0, x1, tx);
      // a + t (b - a) reproduces constant grids exactly.
      const double top = coarse(y0, x0) + tx * (coarse(y0, x1) - coarse(y0, x0));
      const double bottom = coarse(y1, x0) + tx * (coarse(y1, x1) - coarse(y1, x0));
      out(y, x) = top + ty * (bottom - top);
    }
  }
  return out;
}

Image build_blur_index_map(const PsfGrid& grid, int height, int width) {
  return upsample_bilinear(normalized_blur_factors(grid), height, width).max(0.0).min(1.0);
}

}  // namespace lenssim
