#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fsr/errors.hpp"
#include "fsr/image.hpp"

namespace fsr {

inline constexpr double kPsnrCapDb = 100.0;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

enum class SsimMode { kWindowed, kGlobal };

inline SsimMode parse_ssim_mode(const std::string& s) {
  if (s == "windowed") return SsimMode::kWindowed;
  if (s == "global") return SsimMode::kGlobal;
  throw ParameterError("unknown ssim mode '" + s + "' (expected windowed or global)");
}

struct MetricsRecord {
  std::string item_id;
  double mse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

/// Mean over all pixels and channels of the squared difference.
inline double mse(const Image& x, const Image& y) {
  require_same_shape(x, y, "mse");
  double acc = 0.0;
  const auto a = x.data();
  const auto b = y.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// 20 log10(MAX / sqrt(mse)) with MAX = 1; capped at 100 dB for identical inputs.
inline double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return kPsnrCapDb;
  return 20.0 * std::log10(1.0 / std::sqrt(mse_value));
}

inline double psnr(const Image& x, const Image& y) { return psnr_from_mse(mse(x, y)); }

namespace detail {

inline double ssim_formula(double mx, double my, double vx, double vy, double cxy, double c1,
                           double c2) {
  return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

inline void require_range(double dynamic_range) {
  if (!(dynamic_range > 0.0)) throw ParameterError("ssim dynamic range must be > 0");
}

inline std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  double sum = 0.0;
  const int half = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - half;
    w[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-region separable Gaussian filter of a row-major plane.
inline std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                        const std::array<double, kSsimWindow>& k) {
  const int oh = h - kSsimWindow + 1;
  const int ow = w - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int t = 0; t < kSsimWindow; ++t) acc += k[t] * plane[static_cast<std::size_t>(r) * w + c + t];
      tmp[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int t = 0; t < kSsimWindow; ++t) acc += k[t] * tmp[static_cast<std::size_t>(r + t) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  }
  return out;
}

}  // namespace detail

/// Whole-image SSIM per channel (population statistics), averaged over channels.
inline double ssim_global(const Image& x, const Image& y, double dynamic_range = 1.0) {
  require_same_shape(x, y, "ssim_global");
  detail::require_range(dynamic_range);
  const double c1 = (kSsimK1 * dynamic_range) * (kSsimK1 * dynamic_range);
  const double c2 = (kSsimK2 * dynamic_range) * (kSsimK2 * dynamic_range);
  const int channels = x.channels();
  const std::size_t n = static_cast<std::size_t>(x.height()) * x.width();
  double total = 0.0;
  for (int ch = 0; ch < channels; ++ch) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += x.data()[i * channels + ch];
      my += y.data()[i * channels + ch];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = x.data()[i * channels + ch] - mx;
      const double dy = y.data()[i * channels + ch] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
    vx /= static_cast<double>(n);
    vy /= static_cast<double>(n);
    cxy /= static_cast<double>(n);
    total += detail::ssim_formula(mx, my, vx, vy, cxy, c1, c2);
  }
  return total / channels;
}

/// Mean SSIM over every valid 11x11 Gaussian window (sigma 1.5), averaged
/// over channels.
inline double ssim_windowed(const Image& x, const Image& y, double dynamic_range = 1.0) {
  require_same_shape(x, y, "ssim_windowed");
  detail::require_range(dynamic_range);
  if (x.height() < kSsimWindow || x.width() < kSsimWindow) {
    throw SizeError("ssim_windowed: image " + std::to_string(x.height()) + "x" +
                    std::to_string(x.width()) + " is smaller than the " +
                    std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
  }
  const double c1 = (kSsimK1 * dynamic_range) * (kSsimK1 * dynamic_range);
  const double c2 = (kSsimK2 * dynamic_range) * (kSsimK2 * dynamic_range);
  const auto k = detail::gaussian_window();
  const int h = x.height();
  const int w = x.width();
  double total = 0.0;
  for (int ch = 0; ch < x.channels(); ++ch) {
    const auto px = x.plane(ch);
    const auto py = y.plane(ch);
    std::vector<double> xx(px.size()), yy(px.size()), xy(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      xx[i] = px[i] * px[i];
      yy[i] = py[i] * py[i];
      xy[i] = px[i] * py[i];
    }
    const auto mx = detail::filter_valid(px, h, w, k);
    const auto my = detail::filter_valid(py, h, w, k);
    const auto exx = detail::filter_valid(xx, h, w, k);
    const auto eyy = detail::filter_valid(yy, h, w, k);
    const auto exy = detail::filter_valid(xy, h, w, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = exx[i] - mx[i] * mx[i];
      const double vy = eyy[i] - my[i] * my[i];
      const double cxy = exy[i] - mx[i] * my[i];
      acc += detail::ssim_formula(mx[i], my[i], vx, vy, cxy, c1, c2);
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / x.channels();
}

inline double ssim(const Image& x, const Image& y, SsimMode mode, double dynamic_range = 1.0) {
  return mode == SsimMode::kWindowed ? ssim_windowed(x, y, dynamic_range)
                                     : ssim_global(x, y, dynamic_range);
}

inline MetricsRecord measure(std::string item_id, const Image& output, const Image& reference,
                             SsimMode mode = SsimMode::kWindowed) {
  MetricsRecord r;
  r.item_id = std::move(item_id);
  r.mse = mse(output, reference);
  r.psnr_db = psnr_from_mse(r.mse);
  r.ssim = ssim(output, reference, mode);
  return r;
}

/// Arithmetic mean of per-item values (mean of PSNR, not PSNR of mean MSE).
inline MetricsRecord aggregate(std::span<const MetricsRecord> records, std::string item_id = "mean") {
  if (records.empty()) throw ParameterError("cannot aggregate an empty record list");
  MetricsRecord m;
  m.item_id = std::move(item_id);
  for (const auto& r : records) {
    m.mse += r.mse;
    m.psnr_db += r.psnr_db;
    m.ssim += r.ssim;
  }
  const double n = static_cast<double>(records.size());
  m.mse /= n;
  m.psnr_db /= n;
  m.ssim /= n;
  return m;
}

}  // namespace fsr
