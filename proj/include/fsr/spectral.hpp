#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "fsr/errors.hpp"
#include "fsr/image.hpp"

namespace fsr {

using Complex = std::complex<double>;

/// Unnormalized forward DFT of one real channel, stored row-major.
struct Spectrum {
  int height = 0;
  int width = 0;
  std::vector<Complex> values;

  const Complex& operator()(int u, int v) const {
    return values[static_cast<std::size_t>(u) * width + v];
  }
};

namespace detail {

// Unscaled 2D transform: rows then columns. `inverse` conjugates the kernel
// without applying 1 / (H W).
inline void transform2d(std::vector<Complex>& grid, int height, int width, bool inverse) {
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::Unscaled);
  auto run = [&](std::vector<Complex>& line, std::vector<Complex>& out) {
    if (inverse) {
      fft.inv(out, line);
    } else {
      fft.fwd(out, line);
    }
  };
  std::vector<Complex> line, out;
  line.resize(static_cast<std::size_t>(width));
  for (int r = 0; r < height; ++r) {
    Complex* row = grid.data() + static_cast<std::ptrdiff_t>(r) * width;
    std::copy(row, row + width, line.begin());
    run(line, out);
    std::copy(out.begin(), out.end(), row);
  }
  line.resize(static_cast<std::size_t>(height));
  for (int c = 0; c < width; ++c) {
    for (int r = 0; r < height; ++r) line[r] = grid[static_cast<std::size_t>(r) * width + c];
    run(line, out);
    for (int r = 0; r < height; ++r) grid[static_cast<std::size_t>(r) * width + c] = out[r];
  }
}

}  // namespace detail

/// S[u,v] = sum_{m,n} x[m,n] exp(-2 pi i (u m / H + v n / W)).
template <typename T>
Spectrum dft2(std::span<const T> channel, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("dft2: dims must be >= 1");
  if (channel.size() != static_cast<std::size_t>(height) * width) {
    throw ShapeError("dft2: channel length does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  Spectrum s{height, width, std::vector<Complex>(channel.size())};
  for (std::size_t i = 0; i < channel.size(); ++i) s.values[i] = Complex(static_cast<double>(channel[i]), 0.0);
  detail::transform2d(s.values, height, width, false);
  return s;
}

inline Spectrum dft2(const std::vector<double>& channel, int height, int width) {
  return dft2(std::span<const double>(channel), height, width);
}

/// Inverse transform carrying the 1 / (H W) factor.
inline std::vector<Complex> idft2(const Spectrum& s) {
  std::vector<Complex> grid = s.values;
  detail::transform2d(grid, s.height, s.width, true);
  const double inv = 1.0 / (static_cast<double>(s.height) * s.width);
  for (Complex& z : grid) z *= inv;
  return grid;
}

inline std::vector<double> idft2_real(const Spectrum& s) {
  const auto grid = idft2(s);
  std::vector<double> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out[i] = grid[i].real();
  return out;
}

// ---------------------------------------------------------------------------
// Frequency weights

struct WeightMap {
  int height = 0;
  int width = 0;
  double alpha = 0.0;
  std::vector<double> weights;

  double operator()(int i, int j) const { return weights[static_cast<std::size_t>(i) * width + j]; }
};

/// w[i,j] = 1 + alpha * r / r_max with r the aliasing-aware radial frequency
/// sqrt(min(i, H-i)^2 + min(j, W-j)^2). DC always weighs exactly 1.
inline WeightMap build_weight_map(int height, int width, double alpha) {
  if (height < 1 || width < 1) throw ParameterError("weight map dims must be >= 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ParameterError("weight map alpha must be a finite nonnegative number, got " +
                         std::to_string(alpha));
  }
  WeightMap m{height, width, alpha, std::vector<double>(static_cast<std::size_t>(height) * width, 1.0)};
  const double hh = height / 2;
  const double hw = width / 2;
  const double r_max = std::sqrt(hh * hh + hw * hw);
  if (r_max == 0.0) return m;
  for (int i = 0; i < height; ++i) {
    const double fi = std::min(i, height - i);
    for (int j = 0; j < width; ++j) {
      const double fj = std::min(j, width - j);
      m.weights[static_cast<std::size_t>(i) * width + j] =
          1.0 + alpha * std::sqrt(fi * fi + fj * fj) / r_max;
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Weighted frequency error

/// |z| is used as is above delta = sqrt(eps) and replaced below it by the
/// cubic 2r^2/delta - r^3/delta^2, which meets |z| with matching slope at
/// delta and is zero with zero slope at the origin. Unlike sqrt(|z|^2 + eps)
/// this adds no floor per bin, so the loss stays exactly homogeneous.
inline constexpr double kWfeEpsilon = 1e-12;

namespace detail {

struct SmoothedMagnitude {
  double value;
  double slope_over_r;  // m'(r) / r, the factor applied to z in the gradient
};

inline SmoothedMagnitude smoothed_magnitude(double r) {
  const double delta = std::sqrt(kWfeEpsilon);
  if (r >= delta) return {r, 1.0 / r};
  return {r * r * (2.0 / delta - r / (delta * delta)), 4.0 / delta - 3.0 * r / (delta * delta)};
}

}  // namespace detail

/// Loss and (optionally) its gradient for channel-planar C x H x W data.
/// `grad`, when non-null, receives dL/dgenerated in the same layout, scaled
/// by `grad_scale` and accumulated.
template <typename T>
double wfe_planar(std::span<const T> generated, std::span<const T> target, int channels, int height,
                  int width, const WeightMap& weights, T* grad = nullptr, double grad_scale = 1.0) {
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  if (generated.size() != target.size() || generated.size() != plane * channels) {
    throw ShapeError("wfe: generated and target sizes differ");
  }
  if (weights.height != height || weights.width != width) {
    throw ShapeError("wfe: weight map is " + std::to_string(weights.height) + "x" +
                     std::to_string(weights.width) + " but images are " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  const double norm = 1.0 / (static_cast<double>(plane) * channels);
  double total = 0.0;
  std::vector<Complex> diff(plane);
  for (int c = 0; c < channels; ++c) {
    const std::size_t off = static_cast<std::size_t>(c) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      diff[i] = Complex(static_cast<double>(generated[off + i]) - static_cast<double>(target[off + i]), 0.0);
    }
    // The DFT is linear, so F{g} - F{t} = F{g - t}.
    detail::transform2d(diff, height, width, false);
    double channel_sum = 0.0;
    for (std::size_t k = 0; k < plane; ++k) {
      const auto m = detail::smoothed_magnitude(std::abs(diff[k]));
      channel_sum += weights.weights[k] * m.value;
      diff[k] *= weights.weights[k] * m.slope_over_r;
    }
    total += channel_sum;
    if (grad != nullptr) {
      // dL/dx = (1/C) Re(ifft(w D m'(|D|) / |D|)).
      detail::transform2d(diff, height, width, true);
      const double g = grad_scale / (static_cast<double>(plane) * channels);
      for (std::size_t i = 0; i < plane; ++i) grad[off + i] += static_cast<T>(g * diff[i].real());
    }
  }
  return total * norm;
}

namespace detail {

inline std::vector<double> to_planar(const Image& img) {
  const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
  std::vector<double> out(img.size());
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < img.channels(); ++c) out[c * plane + i] = img.data()[i * img.channels() + c];
  }
  return out;
}

}  // namespace detail

inline double wfe_loss(const Image& generated, const Image& target, const WeightMap& weights) {
  require_same_shape(generated, target, "wfe_loss");
  const auto g = detail::to_planar(generated);
  const auto t = detail::to_planar(target);
  return wfe_planar<double>(g, t, generated.channels(), generated.height(), generated.width(),
                            weights);
}

/// Gradient of wfe_loss with respect to every generated value, laid out like
/// the image data (row, column, channel).
inline std::vector<double> wfe_gradient(const Image& generated, const Image& target,
                                        const WeightMap& weights) {
  require_same_shape(generated, target, "wfe_gradient");
  const auto g = detail::to_planar(generated);
  const auto t = detail::to_planar(target);
  std::vector<double> planar(g.size(), 0.0);
  wfe_planar<double>(g, t, generated.channels(), generated.height(), generated.width(), weights,
                     planar.data());
  const std::size_t plane = static_cast<std::size_t>(generated.height()) * generated.width();
  std::vector<double> out(planar.size());
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < generated.channels(); ++c) {
      out[i * generated.channels() + c] = planar[c * plane + i];
    }
  }
  return out;
}

}  // namespace fsr
