#pragma once

// Reference forward pass of the physics-gated multi-branch bridge block:
//   s = SiLU(Norm_s(GroupedConv3x3(x)))
//   l = Norm_l(PW(DW_kxk(x)))
//   lambda = Norm_lambda(x * K_lambda)
//   y = Norm_out(SE(x + eta * (g_s s + g_l l + g_lambda lambda)))
// All spatial convolutions are cross-correlations with "same" output size
// and edge-replicated borders. Norms run in inference form.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include <unsupported/Eigen/CXX11/Tensor>

#include "lenssim/blurmap.hpp"
#include "lenssim/error.hpp"

namespace lenssim {

/// B x C x H x W, row-major.
template <typename Scalar>
using FeatureTensor = Eigen::Tensor<Scalar, 4, Eigen::RowMajor>;

template <typename Scalar>
using Kernel4 = Eigen::Tensor<Scalar, 4, Eigen::RowMajor>;  // out x in x kh x kw

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNormEpsilon = 1e-5;

template <typename Scalar>
struct NormParams {
  VectorX<Scalar> gamma, beta, mean, var;

  static NormParams identity(int channels) {
    // var = 1 - eps makes the inference transform exactly v -> v.
    return {VectorX<Scalar>::Ones(channels), VectorX<Scalar>::Zero(channels),
            VectorX<Scalar>::Zero(channels),
            VectorX<Scalar>::Constant(channels, Scalar(1.0 - kNormEpsilon))};
  }

  Scalar apply(Scalar v, Eigen::Index c) const {
    return gamma(c) * (v - mean(c)) / std::sqrt(var(c) + Scalar(kNormEpsilon)) + beta(c);
  }

  void validate(Eigen::Index channels, const std::string& name) const {
    require(gamma.size() == channels && beta.size() == channels && mean.size() == channels &&
                var.size() == channels,
            ErrorKind::dimension, name + ": norm parameter length must equal channels");
    require((var.array() > Scalar(0)).all(), ErrorKind::parameter,
            name + ": norm variances must be > 0");
  }
};

template <typename Scalar>
struct BridgeWeights {
  int channels = 0;
  int groups = 4;

  Kernel4<Scalar> small_conv;  // C x C/groups x 3 x 3
  VectorX<Scalar> small_bias;
  NormParams<Scalar> small_norm;

  Kernel4<Scalar> large_dw;  // C x 1 x k x k
  VectorX<Scalar> large_dw_bias;
  MatrixX<Scalar> large_pw;  // C x C
  VectorX<Scalar> large_pw_bias;
  NormParams<Scalar> large_norm;

  MatrixX<Scalar> laplacian;  // 3 x 3, shared by all channels
  NormParams<Scalar> laplacian_norm;

  MatrixX<Scalar> se_fc1;  // hidden x C
  VectorX<Scalar> se_fc1_bias;
  MatrixX<Scalar> se_fc2;  // C x hidden
  VectorX<Scalar> se_fc2_bias;

  NormParams<Scalar> out_norm;

  static MatrixX<Scalar> four_neighbor_laplacian() {
    MatrixX<Scalar> k(3, 3);
    k << 0, 1, 0, 1, -4, 1, 0, 1, 0;
    return k;
  }

  /// Reduced SE width: channels / ratio, at least 1.
  static int se_hidden(int channels, int ratio) { return std::max(1, channels / std::max(1, ratio)); }

  void validate() const {
    const Eigen::Index c = channels;
    require(channels >= 1, ErrorKind::dimension, "bridge channels must be >= 1");
    require(groups >= 1 && channels % groups == 0, ErrorKind::dimension,
            "group count must divide channels");
    const auto& sd = small_conv.dimensions();
    require(sd[0] == c && sd[1] == c / groups && sd[2] == 3 && sd[3] == 3, ErrorKind::dimension,
            "small conv must be C x C/groups x 3 x 3");
    require(small_bias.size() == c, ErrorKind::dimension, "small conv bias length");
    const auto& dd = large_dw.dimensions();
    require(dd[0] == c && dd[1] == 1 && dd[2] == dd[3] && dd[2] % 2 == 1, ErrorKind::dimension,
            "depthwise kernel must be C x 1 x k x k with odd k");
    require(large_dw_bias.size() == c, ErrorKind::dimension, "depthwise bias length");
    require(large_pw.rows() == c && large_pw.cols() == c, ErrorKind::dimension,
            "pointwise kernel must be C x C");
    require(large_pw_bias.size() == c, ErrorKind::dimension, "pointwise bias length");
    require(laplacian.rows() == 3 && laplacian.cols() == 3, ErrorKind::dimension,
            "Laplacian kernel must be 3 x 3");
    require(std::abs(static_cast<double>(laplacian.sum())) < 1e-12, ErrorKind::parameter,
            "Laplacian kernel entries must sum to 0");
    require(se_fc1.cols() == c && se_fc1.rows() >= 1 && se_fc1_bias.size() == se_fc1.rows(),
            ErrorKind::dimension, "SE fc1 must be hidden x C");
    require(se_fc2.rows() == c && se_fc2.cols() == se_fc1.rows() && se_fc2_bias.size() == c,
            ErrorKind::dimension, "SE fc2 must be C x hidden");
    small_norm.validate(c, "small_norm");
    large_norm.validate(c, "large_norm");
    laplacian_norm.validate(c, "laplacian_norm");
    out_norm.validate(c, "out_norm");
  }

  /// Center-tap convolutions, identity channel mix, identity norms, and an
  /// SE block saturated to scale 1 (within 1e-9).
  static BridgeWeights identity(int channels, int groups = 4, int se_ratio = 4,
                                int large_kernel = 15) {
    BridgeWeights w;
    w.channels = channels;
    w.groups = groups;
    require(groups >= 1 && channels % groups == 0, ErrorKind::dimension,
            "group count must divide channels");
    const int per_group = channels / groups;
    w.small_conv = Kernel4<Scalar>(channels, per_group, 3, 3);
    w.small_conv.setZero();
    for (int c = 0; c < channels; ++c) w.small_conv(c, c % per_group, 1, 1) = Scalar(1);
    w.small_bias = VectorX<Scalar>::Zero(channels);
    w.small_norm = NormParams<Scalar>::identity(channels);
    w.large_dw = Kernel4<Scalar>(channels, 1, large_kernel, large_kernel);
    w.large_dw.setZero();
    for (int c = 0; c < channels; ++c) w.large_dw(c, 0, large_kernel / 2, large_kernel / 2) = Scalar(1);
    w.large_dw_bias = VectorX<Scalar>::Zero(channels);
    w.large_pw = MatrixX<Scalar>::Identity(channels, channels);
    w.large_pw_bias = VectorX<Scalar>::Zero(channels);
    w.large_norm = NormParams<Scalar>::identity(channels);
    w.laplacian = four_neighbor_laplacian();
    w.laplacian_norm = NormParams<Scalar>::identity(channels);
    const int hidden = se_hidden(channels, se_ratio);
    w.se_fc1 = MatrixX<Scalar>::Zero(hidden, channels);
    w.se_fc1_bias = VectorX<Scalar>::Zero(hidden);
    w.se_fc2 = MatrixX<Scalar>::Zero(channels, hidden);
    w.se_fc2_bias = VectorX<Scalar>::Constant(channels, Scalar(40));
    w.out_norm = NormParams<Scalar>::identity(channels);
    return w;
  }

  /// Seeded random weights with plausible magnitudes, for verification runs.
  static BridgeWeights random(int channels, std::uint64_t seed, int groups = 4, int se_ratio = 4,
                              int large_kernel = 15) {
    std::mt19937_64 gen(seed);
    auto uniform = [&](double lo, double hi) {
      return Scalar(lo + (hi - lo) * static_cast<double>(gen() >> 11) * 0x1.0p-53);
    };
    auto fill = [&](auto& t, double lo, double hi) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = uniform(lo, hi);
    };
    auto norm = [&] {
      NormParams<Scalar> n;
      n.gamma.resize(channels), n.beta.resize(channels), n.mean.resize(channels), n.var.resize(channels);
      fill(n.gamma, 0.5, 1.5), fill(n.beta, -0.2, 0.2), fill(n.mean, -0.2, 0.2), fill(n.var, 0.5, 2.0);
      return n;
    };
    BridgeWeights w = identity(channels, groups, se_ratio, large_kernel);
    fill(w.small_conv, -0.3, 0.3);
    fill(w.small_bias, -0.1, 0.1);
    w.small_norm = norm();
    fill(w.large_dw, -0.05, 0.05);
    fill(w.large_dw_bias, -0.1, 0.1);
    fill(w.large_pw, -0.5, 0.5);
    fill(w.large_pw_bias, -0.1, 0.1);
    w.large_norm = norm();
    w.laplacian_norm = norm();
    fill(w.se_fc1, -0.5, 0.5);
    fill(w.se_fc1_bias, -0.1, 0.1);
    fill(w.se_fc2, -0.5, 0.5);
    fill(w.se_fc2_bias, -0.1, 0.1);
    w.out_norm = norm();
    return w;
  }
};

template <typename Scalar>
struct BranchOutputs {
  FeatureTensor<Scalar> small, large, laplacian;
};

template <typename Scalar>
struct BridgeTrace {
  BranchOutputs<Scalar> branches;
  FeatureTensor<Scalar> fused;    // x + eta * gated sum
  FeatureTensor<Scalar> excited;  // SE(fused)
  FeatureTensor<Scalar> output;   // Norm_out(excited)
};

namespace detail {

inline Eigen::Index clamp_index(Eigen::Index i, Eigen::Index n) {
  return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

/// sum_{i,j} k(i,j) x(b, c, h + i - r, w + j - r) with edge replication.
template <typename Scalar, typename KernelAt>
Scalar correlate_at(const FeatureTensor<Scalar>& x, Eigen::Index b, Eigen::Index c,
                    Eigen::Index h, Eigen::Index w, Eigen::Index size, KernelAt&& k) {
  const Eigen::Index height = x.dimension(2);
  const Eigen::Index width = x.dimension(3);
  const Eigen::Index r = size / 2;
  Scalar acc(0);
  for (Eigen::Index i = 0; i < size; ++i) {
    const Eigen::Index yy = clamp_index(h + i - r, height);
    for (Eigen::Index j = 0; j < size; ++j)
      acc += k(i, j) * x(b, c, yy, clamp_index(w + j - r, width));
  }
  return acc;
}

template <typename Scalar>
void require_dims(const FeatureTensor<Scalar>& x, const BridgeWeights<Scalar>& w) {
  w.validate();
  require(x.dimension(0) >= 1 && x.dimension(2) >= 1 && x.dimension(3) >= 1,
          ErrorKind::dimension, "feature tensor dimensions must be positive");
  require(x.dimension(1) == w.channels, ErrorKind::dimension,
          "feature channels do not match bridge weights");
}

}  // namespace detail

/// Pre-norm Laplacian response x * K_lambda.
template <typename Scalar>
FeatureTensor<Scalar> laplacian_response(const FeatureTensor<Scalar>& x, const BridgeWeights<Scalar>& w) {
  detail::require_dims(x, w);
  FeatureTensor<Scalar> out(x.dimensions());
  for (Eigen::Index b = 0; b < x.dimension(0); ++b)
    for (Eigen::Index c = 0; c < x.dimension(1); ++c)
      for (Eigen::Index h = 0; h < x.dimension(2); ++h)
        for (Eigen::Index v = 0; v < x.dimension(3); ++v)
          out(b, c, h, v) = detail::correlate_at(x, b, c, h, v, 3, [&](auto i, auto j) {
            return w.laplacian(i, j);
          });
  return out;
}

template <typename Scalar>
BranchOutputs<Scalar> pals_branches(const FeatureTensor<Scalar>& x, const BridgeWeights<Scalar>& w) {
  detail::require_dims(x, w);
  const Eigen::Index batch = x.dimension(0), channels = x.dimension(1);
  const Eigen::Index height = x.dimension(2), width = x.dimension(3);
  const Eigen::Index per_group = channels / w.groups;
  const Eigen::Index k = w.large_dw.dimension(2);

  BranchOutputs<Scalar> out{FeatureTensor<Scalar>(x.dimensions()), FeatureTensor<Scalar>(x.dimensions()),
                            laplacian_response(x, w)};
  FeatureTensor<Scalar> depthwise(x.dimensions());

  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index c = 0; c < channels; ++c) {
      const Eigen::Index first = (c / per_group) * per_group;
      for (Eigen::Index h = 0; h < height; ++h)
        for (Eigen::Index v = 0; v < width; ++v) {
          Scalar acc = w.small_bias(c);
          for (Eigen::Index ci = 0; ci < per_group; ++ci)
            acc += detail::correlate_at(x, b, first + ci, h, v, 3,
                                        [&](auto i, auto j) { return w.small_conv(c, ci, i, j); });
          const Scalar normed = w.small_norm.apply(acc, c);
          out.small(b, c, h, v) = normed / (Scalar(1) + std::exp(-normed));

          depthwise(b, c, h, v) =
              w.large_dw_bias(c) +
              detail::correlate_at(x, b, c, h, v, k, [&](auto i, auto j) { return w.large_dw(c, 0, i, j); });
          out.laplacian(b, c, h, v) = w.laplacian_norm.apply(out.laplacian(b, c, h, v), c);
        }
    }

  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index h = 0; h < height; ++h)
      for (Eigen::Index v = 0; v < width; ++v) {
        VectorX<Scalar> in(channels);
        for (Eigen::Index c = 0; c < channels; ++c) in(c) = depthwise(b, c, h, v);
        const VectorX<Scalar> mixed = w.large_pw * in + w.large_pw_bias;
        for (Eigen::Index c = 0; c < channels; ++c) out.large(b, c, h, v) = w.large_norm.apply(mixed(c), c);
      }
  return out;
}

/// Per-(batch, channel) SE scales in (0, 1), as a B x C matrix.
template <typename Scalar>
MatrixX<Scalar> se_scales(const FeatureTensor<Scalar>& x, const BridgeWeights<Scalar>& w) {
  detail::require_dims(x, w);
  const Eigen::Index batch = x.dimension(0), channels = x.dimension(1);
  const Eigen::Index plane = x.dimension(2) * x.dimension(3);
  MatrixX<Scalar> scales(batch, channels);
  for (Eigen::Index b = 0; b < batch; ++b) {
    VectorX<Scalar> pooled(channels);
    for (Eigen::Index c = 0; c < channels; ++c) {
      Scalar sum(0);
      const Scalar* p = x.data() + (b * channels + c) * plane;
      for (Eigen::Index i = 0; i < plane; ++i) sum += p[i];
      pooled(c) = sum / Scalar(plane);
    }
    const VectorX<Scalar> hidden = (w.se_fc1 * pooled + w.se_fc1_bias).cwiseMax(Scalar(0));
    const VectorX<Scalar> logits = w.se_fc2 * hidden + w.se_fc2_bias;
    scales.row(b) = logits.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); }).transpose();
  }
  return scales;
}

template <typename Scalar>
FeatureTensor<Scalar> se_reweight(const FeatureTensor<Scalar>& x, const BridgeWeights<Scalar>& w) {
  const MatrixX<Scalar> scales = se_scales(x, w);
  FeatureTensor<Scalar> out(x.dimensions());
  const Eigen::Index plane = x.dimension(2) * x.dimension(3);
  for (Eigen::Index b = 0; b < x.dimension(0); ++b)
    for (Eigen::Index c = 0; c < x.dimension(1); ++c) {
      const Eigen::Index offset = (b * x.dimension(1) + c) * plane;
      for (Eigen::Index i = 0; i < plane; ++i) out.data()[offset + i] = x.data()[offset + i] * scales(b, c);
    }
  return out;
}

template <typename Scalar>
BridgeTrace<Scalar> bridge_forward_trace(const FeatureTensor<Scalar>& x, const Image& blur_index,
                                         const GateParams& params, const BridgeWeights<Scalar>& w) {
  detail::require_dims(x, w);
  require(blur_index.rows() == x.dimension(2) && blur_index.cols() == x.dimension(3),
          ErrorKind::dimension, "blur index map must match feature H x W");
  const GateMaps gates = compute_gate_maps(blur_index, params);

  BridgeTrace<Scalar> trace;
  trace.branches = pals_branches(x, w);
  trace.fused = FeatureTensor<Scalar>(x.dimensions());
  const Scalar eta = static_cast<Scalar>(params.eta);
  for (Eigen::Index b = 0; b < x.dimension(0); ++b)
    for (Eigen::Index c = 0; c < x.dimension(1); ++c)
      for (Eigen::Index h = 0; h < x.dimension(2); ++h)
        for (Eigen::Index v = 0; v < x.dimension(3); ++v) {
          const Scalar gated = static_cast<Scalar>(gates.small(h, v)) * trace.branches.small(b, c, h, v) +
                               static_cast<Scalar>(gates.large(h, v)) * trace.branches.large(b, c, h, v) +
                               static_cast<Scalar>(gates.laplacian(h, v)) * trace.branches.laplacian(b, c, h, v);
          trace.fused(b, c, h, v) = x(b, c, h, v) + eta * gated;
        }
  trace.excited = se_reweight(trace.fused, w);
  trace.output = FeatureTensor<Scalar>(x.dimensions());
  for (Eigen::Index b = 0; b < x.dimension(0); ++b)
    for (Eigen::Index c = 0; c < x.dimension(1); ++c)
      for (Eigen::Index h = 0; h < x.dimension(2); ++h)
        for (Eigen::Index v = 0; v < x.dimension(3); ++v)
          trace.output(b, c, h, v) = w.out_norm.apply(trace.excited(b, c, h, v), c);
  return trace;
}

template <typename Scalar>
FeatureTensor<Scalar> bridge_forward(const FeatureTensor<Scalar>& x, const Image& blur_index,
                                     const GateParams& params, const BridgeWeights<Scalar>& w) {
  return bridge_forward_trace(x, blur_index, params, w).output;
}

}  // namespace lenssim
