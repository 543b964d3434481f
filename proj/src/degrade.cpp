#include "lenssim/degrade.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "lenssim/error.hpp"
#include "lenssim/fft.hpp"
#include "lenssim/parallel.hpp"

namespace lenssim {

namespace {

AxisBlend make_axis_blend(int length, int patch, int overlap) {
  const int tiles = length / patch;
  const int lo = overlap / 2;
  const int hi = overlap - lo;
  const double half_pi = 0.5 * std::numbers::pi;
  AxisBlend axis;
  for (int t = 0; t < tiles; ++t) {
    const int begin = t * patch - (t > 0 ? lo : 0);
    const int end = (t + 1) * patch + (t < tiles - 1 ? hi : 0);
    Eigen::VectorXd w(end - begin);
    for (int x = begin; x < end; ++x) {
      double v = 1.0;
      if (t > 0 && x < t * patch + hi) {
        const double u = (x - (t * patch - lo) + 0.5) / overlap;
        v = std::sin(half_pi * u);
        v *= v;
      } else if (t < tiles - 1 && x >= (t + 1) * patch - lo) {
        const double u = (x - ((t + 1) * patch - lo) + 0.5) / overlap;
        v = std::cos(half_pi * u);
        v *= v;
      }
      w(x - begin) = v;
    }
    axis.start.push_back(begin);
    axis.weights.push_back(std::move(w));
  }
  return axis;
}

Eigen::ArrayXi clamped_range(int begin, int count, int limit) {
  return Eigen::ArrayXi::LinSpaced(count, begin, begin + count - 1).max(0).min(limit - 1);
}

}  // namespace

void DegradationConfig::validate() const {
  require(patch_size >= 1, ErrorKind::parameter, "patch_size must be >= 1");
  require(overlap >= 0 && overlap < patch_size, ErrorKind::parameter,
          "overlap must be in [0, patch_size)");
  require(q >= 0.0 && std::isfinite(q), ErrorKind::parameter, "q must be >= 0");
  require(q_full > 0.0 && std::isfinite(q_full), ErrorKind::parameter, "q_full must be > 0");
  require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::parameter, "sigma must be >= 0");
  require(clamp_lo < clamp_hi, ErrorKind::parameter, "clamp_lo must be < clamp_hi");
}

Image BlendWeights::raster(int m, int n) const {
  Image w = Image::Zero(height, width);
  const auto& wy = rows.weights.at(m);
  const auto& wx = cols.weights.at(n);
  w.block(rows.start[m], cols.start[n], wy.size(), wx.size()) = (wy * wx.transpose()).array();
  return w;
}

BlendWeights make_blend_weights(int height, int width, int patch_size, int overlap) {
  require(patch_size >= 1, ErrorKind::parameter, "patch_size must be >= 1");
  require(overlap >= 0 && overlap < patch_size, ErrorKind::parameter,
          "overlap must be in [0, patch_size)");
  require(height >= 1 && width >= 1 && height % patch_size == 0 && width % patch_size == 0,
          ErrorKind::dimension, "image dimensions must be multiples of patch_size");
  return {height, width, make_axis_blend(height, patch_size, overlap),
          make_axis_blend(width, patch_size, overlap)};
}

Image degrade_image(const Image& clean, const PsfGrid& grid, const DegradationConfig& cfg) {
  cfg.validate();
  require(clean.size() > 0 && clean.allFinite(), ErrorKind::parameter,
          "input image must be nonempty and finite");
  const int height = static_cast<int>(clean.rows());
  const int width = static_cast<int>(clean.cols());
  const BlendWeights blend = make_blend_weights(height, width, cfg.patch_size, cfg.overlap);
  require(grid.rows == blend.tiles_y() && grid.cols == blend.tiles_x(), ErrorKind::dimension,
          "PSF grid " + std::to_string(grid.rows) + "x" + std::to_string(grid.cols) +
              " does not match patch lattice " + std::to_string(blend.tiles_y()) + "x" +
              std::to_string(blend.tiles_x()));
  require(grid.kernels.size() == static_cast<std::size_t>(grid.rows) * grid.cols,
          ErrorKind::dimension, "PSF grid kernel count does not match rows x cols");

  const std::size_t tiles = grid.kernels.size();
  std::vector<Image> contributions(tiles);
  parallel_for(tiles, cfg.threads, [&](std::size_t t) {
    const int m = static_cast<int>(t) / grid.cols;
    const int n = static_cast<int>(t) % grid.cols;
    const Image& kernel = grid.kernels[t].samples;
    require(kernel.rows() % 2 == 1 && kernel.rows() == kernel.cols(), ErrorKind::dimension,
            "PSF kernels must be square and odd");
    const int radius = static_cast<int>(kernel.rows()) / 2;
    const auto& wy = blend.rows.weights[m];
    const auto& wx = blend.cols.weights[n];
    const int y0 = blend.rows.start[m];
    const int x0 = blend.cols.start[n];

    const Eigen::ArrayXi ry = clamped_range(y0 - radius, static_cast<int>(wy.size()) + 2 * radius, height);
    const Eigen::ArrayXi rx = clamped_range(x0 - radius, static_cast<int>(wx.size()) + 2 * radius, width);
    const Image region = clean(ry, rx);
    const Image blurred = cfg.method == DegradationConfig::Convolution::fft
                              ? convolve_valid_fft(region, kernel)
                              : convolve_valid_direct(region, kernel);
    contributions[t] = blurred * (wy * wx.transpose()).array();
  });

  // Fixed accumulation order keeps the result independent of thread count.
  Image out = Image::Zero(height, width);
  for (std::size_t t = 0; t < tiles; ++t) {
    const int m = static_cast<int>(t) / grid.cols;
    const int n = static_cast<int>(t) % grid.cols;
    out.block(blend.rows.start[m], blend.cols.start[n], contributions[t].rows(),
              contributions[t].cols()) += contributions[t];
  }
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double standard_normal(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t key = splitmix64(seed);
  const std::uint64_t a = splitmix64(key ^ (2 * index));
  const std::uint64_t b = splitmix64(key ^ (2 * index + 1));
  // 53-bit uniforms; u1 in (0, 1] keeps the log finite.
  const double u1 = (static_cast<double>(a >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Image apply_noise(const Image& degraded, const DegradationConfig& cfg) {
  cfg.validate();
  const double step = cfg.q_step();
  Image out(degraded.rows(), degraded.cols());
  const Eigen::Index n = degraded.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eps = cfg.sigma > 0.0
                           ? cfg.sigma * standard_normal(cfg.seed, static_cast<std::uint64_t>(i))
                           : 0.0;
    const double v = degraded.data()[i];
    const double raw = step > 0.0 ? (std::floor(v / step) + eps) * step : v + eps;
    out.data()[i] = std::min(std::max(raw, cfg.clamp_lo), cfg.clamp_hi);
  }
  return out;
}

}  // namespace lenssim
