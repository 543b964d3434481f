#pragma once

#include <cstdint>
#include <vector>

#include "lenssim/optics.hpp"
#include "lenssim/types.hpp"

namespace lenssim {

struct DegradationConfig {
  enum class Quantization { scaled, literal };
  enum class Convolution { fft, direct };

  int patch_size = 80;
  int overlap = 16;
  /// Quantization scale. In scaled mode the step is q / q_full (q counted in
  /// ADC codes of a q_full full scale); in literal mode the step is q itself.
  double q = 90.0;
  double q_full = 16384.0;
  Quantization quantization = Quantization::scaled;
  double sigma = 0.0003;
  double clamp_lo = 1e-20;
  double clamp_hi = 1.0;
  std::uint64_t seed = 0;
  Convolution method = Convolution::fft;
  unsigned threads = 1;

  double q_step() const { return quantization == Quantization::scaled ? q / q_full : q; }
  void validate() const;

  friend bool operator==(const DegradationConfig&, const DegradationConfig&) = default;
};

/// Per-tile weights along one axis: tile t covers [start[t], start[t] + weights[t].size()).
struct AxisBlend {
  std::vector<int> start;
  std::vector<Eigen::VectorXd> weights;
};

/// Separable partition of unity: W_{m,n}(y, x) = rows.weights[m](y) * cols.weights[n](x).
struct BlendWeights {
  int height = 0;
  int width = 0;
  AxisBlend rows;
  AxisBlend cols;

  int tiles_y() const { return static_cast<int>(rows.start.size()); }
  int tiles_x() const { return static_cast<int>(cols.start.size()); }

  /// Full-plane weight raster of tile (m, n).
  Image raster(int m, int n) const;
};

/// Hann-ramp blending: flat in tile interiors, cos^2/sin^2 crossfade over
/// `overlap` pixels straddling each interior tile boundary.
BlendWeights make_blend_weights(int height, int width, int patch_size, int overlap);

/// Patchwise spatially varying blur: each tile's blend support is extended by
/// the kernel radius (edge-replicated at the image border), convolved with
/// its field kernel and accumulated under its blend weights.
Image degrade_image(const Image& clean, const PsfGrid& grid, const DegradationConfig& cfg);

/// clamp((floor(I / q_step) + eps) * q_step, clamp_lo, clamp_hi), eps ~ N(0, sigma^2)
/// keyed by (seed, pixel index). q_step = 0 skips quantization: clamp(I + eps).
Image apply_noise(const Image& degraded, const DegradationConfig& cfg);

/// Counter-based standard normal draw; a pure function of (seed, index).
double standard_normal(std::uint64_t seed, std::uint64_t index);

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace lenssim
