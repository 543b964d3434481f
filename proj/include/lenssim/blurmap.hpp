#pragma once

#include <cmath>

#include "lenssim/error.hpp"
#include "lenssim/optics.hpp"
#include "lenssim/types.hpp"

namespace lenssim {

/// RMS radius (pixels) of a kernel's energy about its energy centroid. The
/// centroid offset itself does not enter the scalar.
template <typename Derived>
double psf_blur_factor(const Eigen::DenseBase<Derived>& kernel) {
  const auto& p = kernel.derived();
  const double total = static_cast<double>(p.sum());
  require(total > 0.0 && std::isfinite(total), ErrorKind::degenerate,
          "blur factor of a kernel with no energy");
  double cy = 0.0, cx = 0.0;
  for (Eigen::Index y = 0; y < p.rows(); ++y)
    for (Eigen::Index x = 0; x < p.cols(); ++x) {
      cy += static_cast<double>(p(y, x)) * y;
      cx += static_cast<double>(p(y, x)) * x;
    }
  cy /= total;
  cx /= total;
  double second = 0.0;
  for (Eigen::Index y = 0; y < p.rows(); ++y)
    for (Eigen::Index x = 0; x < p.cols(); ++x) {
      const double dy = y - cy;
      const double dx = x - cx;
      second += static_cast<double>(p(y, x)) * (dy * dy + dx * dx);
    }
  return std::sqrt(second / total);
}

inline double psf_blur_factor(const PsfKernel& kernel) { return psf_blur_factor(kernel.samples); }

/// Min-max normalized per-region blur factors (rows x cols); 0.5 everywhere
/// when all regions are equal.
Image normalized_blur_factors(const PsfGrid& grid);

/// Bilinear upsampling with region-center anchoring and edge clamping.
Image upsample_bilinear(const Image& coarse, int height, int width);

/// k(h, w) in [0, 1] over a height x width plane.
Image build_blur_index_map(const PsfGrid& grid, int height, int width);

struct GateParams {
  double theta_s = -3.0;
  double theta_l = -2.0;
  double theta_lambda = -4.0;
  double alpha_s = 0.5;
  double alpha_l = 0.5;
  double alpha_lambda = 0.5;
  double eta = 0.2;

  void validate() const;

  friend bool operator==(const GateParams&, const GateParams&) = default;
};

struct GateMaps {
  Image small;
  Image large;
  Image laplacian;
};

inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// g_s = clip(sig(theta_s) + alpha_s (1 - k)), g_l = clip(sig(theta_l) + alpha_l k),
/// g_lambda = clip(sig(theta_lambda) + alpha_lambda (1 - k)); clip to [0, 1].
template <typename Derived>
GateMaps compute_gate_maps(const Eigen::ArrayBase<Derived>& k, const GateParams& params) {
  params.validate();
  const auto clip = [](const auto& v) { return v.max(0.0).min(1.0); };
  const Image kk = k.template cast<double>();
  return {clip(logistic(params.theta_s) + params.alpha_s * (1.0 - kk)),
          clip(logistic(params.theta_l) + params.alpha_l * kk),
          clip(logistic(params.theta_lambda) + params.alpha_lambda * (1.0 - kk))};
}

}  // namespace lenssim
