#pragma once

// Procedural H&E-like tissue images for tests: pink stroma with smooth
// intensity variation and fibres, plus purple nuclei with soft borders.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fsr/image.hpp"

namespace fsr::testing {

class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : rng_(seed) {}
  double operator()() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double operator()(double lo, double hi) { return lo + (hi - lo) * (*this)(); }
  std::uint64_t bits() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

struct TissueStyle {
  double nuclei_per_kpx = 1.6;  // nuclei per 1000 pixels
  double min_radius = 2.5;
  double max_radius = 6.0;
  int fibres = 6;
  double edge_softness = 0.8;
};

inline Image synthetic_tissue(int height, int width, std::uint64_t seed, const TissueStyle& style = {}) {
  Uniform u(seed);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<double> r(n), g(n), b(n);

  // Stroma: smooth variation from a few random plane waves.
  struct Wave { double fx, fy, phase, amp; };
  std::vector<Wave> waves;
  for (int k = 0; k < 5; ++k) {
    waves.push_back({u(-0.08, 0.08), u(-0.08, 0.08), u(0.0, 2.0 * std::numbers::pi), u(0.02, 0.06)});
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double s = 0.0;
      for (const auto& wv : waves) s += wv.amp * std::sin(wv.fx * x + wv.fy * y + wv.phase);
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      r[i] = 0.90 + s;
      g[i] = 0.70 + 1.2 * s;
      b[i] = 0.82 + 0.8 * s;
    }
  }

  // Fibres: thin darker-pink sinusoidal strands.
  for (int f = 0; f < style.fibres; ++f) {
    const double angle = u(0.0, std::numbers::pi);
    const double c = std::cos(angle), s = std::sin(angle);
    const double offset = u(-0.5, 0.5) * std::max(height, width);
    const double wavelength = u(10.0, 30.0);
    const double wobble = u(1.0, 4.0);
    const double thickness = u(0.7, 1.6);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double px = x - width / 2.0, py = y - height / 2.0;
        const double along = px * c + py * s;
        const double across = -px * s + py * c - offset - wobble * std::sin(along / wavelength * 2.0 * std::numbers::pi);
        const double a = std::exp(-(across * across) / (2.0 * thickness * thickness)) * 0.35;
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        r[i] -= 0.10 * a;
        g[i] -= 0.45 * a;
        b[i] -= 0.15 * a;
      }
    }
  }

  // Nuclei: soft-edged ellipses with chromatin texture.
  const int count = static_cast<int>(style.nuclei_per_kpx * n / 1000.0);
  for (int k = 0; k < count; ++k) {
    const double cx = u(0.0, width), cy = u(0.0, height);
    const double ra = u(style.min_radius, style.max_radius);
    const double rb = ra * u(0.6, 1.0);
    const double theta = u(0.0, std::numbers::pi);
    const double darkness = u(0.6, 1.0);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double tex_f = u(0.6, 1.4), tex_p = u(0.0, 6.28);
    const int x0 = std::max(0, static_cast<int>(cx - ra - 3)), x1 = std::min(width - 1, static_cast<int>(cx + ra + 3));
    const int y0 = std::max(0, static_cast<int>(cy - ra - 3)), y1 = std::min(height - 1, static_cast<int>(cy + ra + 3));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double ex = (dx * ct + dy * st) / ra, ey = (-dx * st + dy * ct) / rb;
        const double dist = (std::sqrt(ex * ex + ey * ey) - 1.0) * ra;
        const double cover = 1.0 / (1.0 + std::exp(dist / style.edge_softness));
        const double tex = 0.08 * std::sin(tex_f * x + tex_p) * std::sin(tex_f * y - tex_p);
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        const double a = cover * darkness;
        r[i] = r[i] * (1.0 - a) + a * (0.32 + tex);
        g[i] = g[i] * (1.0 - a) + a * (0.16 + tex);
        b[i] = b[i] * (1.0 - a) + a * (0.50 + tex);
      }
    }
  }

  std::vector<double> data(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    data[3 * i] = std::clamp(r[i], 0.0, 1.0);
    data[3 * i + 1] = std::clamp(g[i], 0.0, 1.0);
    data[3 * i + 2] = std::clamp(b[i], 0.0, 1.0);
  }
  return Image(height, width, 3, std::move(data));
}

/// Uniform random image, values in [lo, hi].
inline Image random_image(int height, int width, int channels, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Uniform u(seed);
  std::vector<double> data(static_cast<std::size_t>(height) * width * channels);
  for (double& v : data) v = u(lo, hi);
  return Image(height, width, channels, std::move(data));
}

}  // namespace fsr::testing
