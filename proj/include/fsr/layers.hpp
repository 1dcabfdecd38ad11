#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "fsr/errors.hpp"
#include "fsr/image.hpp"
#include "fsr/tensor.hpp"

// Differentiable building blocks of the correction network. Every backward
// routine accumulates (+=) into its gradient outputs.
namespace fsr::layers {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// Unfolds k x k neighbourhoods (zero padding, "same" output) into a
// (C*k*k) x (H*W) matrix.
template <typename T>
void im2col(const Tensor<T>& in, int k, AlignedVector<T>& cols) {
  const int pad = k / 2;
  const int h = in.height;
  const int w = in.width;
  const std::size_t hw = in.plane_size();
  cols.assign(static_cast<std::size_t>(in.channels) * k * k * hw, T(0));
  for (int c = 0; c < in.channels; ++c) {
    const T* src = in.plane(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h || x1 <= x0) continue;
          std::copy(src + static_cast<std::size_t>(sy) * w + x0 + dx,
                    src + static_cast<std::size_t>(sy) * w + x1 + dx,
                    dst + static_cast<std::size_t>(y) * w + x0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const AlignedVector<T>& cols, int k, Tensor<T>& grad) {
  const int pad = k / 2;
  const int h = grad.height;
  const int w = grad.width;
  const std::size_t hw = grad.plane_size();
  for (int c = 0; c < grad.channels; ++c) {
    T* dst = grad.plane(c);
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          T* drow = dst + static_cast<std::size_t>(sy) * w + dx;
          const T* srow = src + static_cast<std::size_t>(y) * w;
          for (int x = x0; x < x1; ++x) drow[x] += srow[x];
        }
      }
    }
  }
}

/// Same-padded k x k convolution. Weight layout [out][in][k][k]; bias may be null.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, const T* weight, const T* bias, int out_channels, int k) {
  Tensor<T> out(out_channels, in.height, in.width);
  const auto hw = static_cast<Eigen::Index>(in.plane_size());
  const auto depth = static_cast<Eigen::Index>(in.channels) * k * k;
  ConstMatMap<T> wmat(weight, out_channels, depth);
  MatMap<T> omat(out.data.data(), out_channels, hw);
  if (k == 1) {
    omat.noalias() = wmat * ConstMatMap<T>(in.data.data(), depth, hw);
  } else {
    AlignedVector<T> cols;
    im2col(in, k, cols);
    omat.noalias() = wmat * ConstMatMap<T>(cols.data(), depth, hw);
  }
  if (bias != nullptr) {
    for (int o = 0; o < out_channels; ++o) omat.row(o).array() += bias[o];
  }
  return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& in, const T* weight, const Tensor<T>& d_out, int k,
                     T* d_weight, T* d_bias, Tensor<T>* d_in) {
  const int out_channels = d_out.channels;
  const auto hw = static_cast<Eigen::Index>(in.plane_size());
  const auto depth = static_cast<Eigen::Index>(in.channels) * k * k;
  ConstMatMap<T> wmat(weight, out_channels, depth);
  ConstMatMap<T> dmat(d_out.data.data(), out_channels, hw);
  AlignedVector<T> cols;
  const T* cols_ptr = in.data.data();
  if (k != 1) {
    im2col(in, k, cols);
    cols_ptr = cols.data();
  }
  ConstMatMap<T> cmat(cols_ptr, depth, hw);
  if (d_weight != nullptr) {
    MatMap<T>(d_weight, out_channels, depth).noalias() += dmat * cmat.transpose();
  }
  if (d_bias != nullptr) {
    for (int o = 0; o < out_channels; ++o) d_bias[o] += dmat.row(o).sum();
  }
  if (d_in != nullptr) {
    if (k == 1) {
      MatMap<T>(d_in->data.data(), depth, hw).noalias() += wmat.transpose() * dmat;
    } else {
      AlignedVector<T> dcols(static_cast<std::size_t>(depth * hw));
      MatMap<T>(dcols.data(), depth, hw).noalias() = wmat.transpose() * dmat;
      col2im_add(dcols, k, *d_in);
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (T& v : t.data) v = v > T(0) ? v : T(0);
}

/// Masks `grad` by the positive support of a ReLU output.
template <typename T>
void relu_backward_inplace(const Tensor<T>& relu_out, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(relu_out.data[i] > T(0))) grad.data[i] = T(0);
  }
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// 2x2 max pooling; `argmax` records the winning offset (0..3) per output.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& in, std::vector<std::uint8_t>* argmax) {
  Tensor<T> out(in.channels, in.height / 2, in.width / 2);
  if (argmax != nullptr) argmax->assign(out.size(), 0);
  std::size_t idx = 0;
  for (int c = 0; c < in.channels; ++c) {
    for (int r = 0; r < out.height; ++r) {
      for (int col = 0; col < out.width; ++col, ++idx) {
        T best = in(c, 2 * r, 2 * col);
        std::uint8_t which = 0;
        for (std::uint8_t q = 1; q < 4; ++q) {
          const T v = in(c, 2 * r + q / 2, 2 * col + q % 2);
          if (v > best) {
            best = v;
            which = q;
          }
        }
        out.data[idx] = best;
        if (argmax != nullptr) (*argmax)[idx] = which;
      }
    }
  }
  return out;
}

template <typename T>
void maxpool2_backward(const std::vector<std::uint8_t>& argmax, const Tensor<T>& d_out, Tensor<T>& d_in) {
  std::size_t idx = 0;
  for (int c = 0; c < d_out.channels; ++c) {
    for (int r = 0; r < d_out.height; ++r) {
      for (int col = 0; col < d_out.width; ++col, ++idx) {
        const int q = argmax[idx];
        d_in(c, 2 * r + q / 2, 2 * col + q % 2) += d_out.data[idx];
      }
    }
  }
}

/// Bilinear upsampling of every channel (half-pixel centers, edge clamp).
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& in, int scale) {
  Tensor<T> out(in.channels, in.height * scale, in.width * scale);
  const auto rows = bilinear_taps(in.height, scale);
  const auto cols = bilinear_taps(in.width, scale);
  for (int c = 0; c < in.channels; ++c) {
    resample_plane(in.plane(c), in.height, in.width, 1, rows, cols, out.plane(c), 1);
  }
  return out;
}

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& d_out, int scale, Tensor<T>& d_in) {
  const auto rows = bilinear_taps(d_in.height, scale);
  const auto cols = bilinear_taps(d_in.width, scale);
  for (int c = 0; c < d_out.channels; ++c) {
    resample_plane_adjoint(d_out.plane(c), rows, cols, d_in.height, d_in.width, d_in.plane(c));
  }
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height != b.height || a.width != b.width) throw ShapeError("concat: spatial dims differ");
  Tensor<T> out(a.channels + b.channels, a.height, a.width);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.size()));
  return out;
}

inline constexpr double kInstanceNormEps = 1e-5;

/// Per-channel normalization over the spatial extent with affine scale/shift.
/// Fills `normalized` and `inv_std` for the backward pass.
template <typename T>
void instance_norm_inplace(Tensor<T>& t, const T* scale, const T* shift, Tensor<T>& normalized,
                           std::vector<T>& inv_std) {
  const std::size_t n = t.plane_size();
  normalized = Tensor<T>(t.channels, t.height, t.width);
  inv_std.assign(static_cast<std::size_t>(t.channels), T(0));
  for (int c = 0; c < t.channels; ++c) {
    T* p = t.plane(c);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += p[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (p[i] - mean) * (p[i] - mean);
    var /= static_cast<double>(n);
    const T is = static_cast<T>(1.0 / std::sqrt(var + kInstanceNormEps));
    inv_std[c] = is;
    T* xh = normalized.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = (p[i] - static_cast<T>(mean)) * is;
      p[i] = scale[c] * xh[i] + shift[c];
    }
  }
}

/// Converts dL/dy into dL/dx in place and accumulates scale/shift gradients.
template <typename T>
void instance_norm_backward_inplace(Tensor<T>& grad, const Tensor<T>& normalized,
                                    const std::vector<T>& inv_std, const T* scale, T* d_scale,
                                    T* d_shift) {
  const std::size_t n = grad.plane_size();
  const T inv_n = T(1) / static_cast<T>(n);
  for (int c = 0; c < grad.channels; ++c) {
    T* g = grad.plane(c);
    const T* xh = normalized.plane(c);
    T sum_g = 0, sum_gx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += g[i];
      sum_gx += g[i] * xh[i];
    }
    d_scale[c] += sum_gx;
    d_shift[c] += sum_g;
    // dx = inv_std * gamma * (g - mean(g) - xhat * mean(g * xhat))
    const T factor = inv_std[c] * scale[c];
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = factor * (g[i] - sum_g * inv_n - xh[i] * sum_gx * inv_n);
    }
  }
}

}  // namespace fsr::layers
