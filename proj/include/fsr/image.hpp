#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fsr/errors.hpp"

namespace fsr {

/// H x W x C grid of intensities in [0, 1], row-major by (row, column, channel).
///
/// An Image is immutable once constructed; every constructor checks that the
/// values are finite and inside the unit interval.
class Image {
 public:
  Image() = default;

  Image(int height, int width, int channels, double fill = 0.0)
      : Image(height, width, channels,
              std::vector<double>(checked_size(height, width, channels), fill)) {}

  Image(int height, int width, int channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    const std::size_t expected = checked_size(height, width, channels);
    if (data_.size() != expected) {
      throw ShapeError("image data length " + std::to_string(data_.size()) + " does not match " +
                       std::to_string(height) + "x" + std::to_string(width) + "x" +
                       std::to_string(channels));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
      const double v = data_[i];
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        throw ShapeError("image value at flat index " + std::to_string(i) +
                         " is outside [0, 1]: " + std::to_string(v));
      }
    }
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(int row, int col, int ch) const {
    return data_[index(row, col, ch)];
  }
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width_ + col) * channels_ + ch;
  }

  std::span<const double> data() const { return data_; }
  std::vector<double> plane(int ch) const {
    std::vector<double> out(static_cast<std::size_t>(height_) * width_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = data_[i * channels_ + ch];
    return out;
  }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static std::size_t checked_size(int height, int width, int channels) {
    if (height < 1 || width < 1) {
      throw ShapeError("image dims must be >= 1, got " + std::to_string(height) + "x" +
                       std::to_string(width));
    }
    if (channels != 1 && channels != 3) {
      throw ShapeError("image channels must be 1 or 3, got " + std::to_string(channels));
    }
    return static_cast<std::size_t>(height) * width * channels;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Clamps arbitrary reals into [0, 1] and packs them as an Image. NaN maps to 0.
inline Image image_from_clamped(int height, int width, int channels, std::vector<double> data) {
  for (double& v : data) v = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
  return Image(height, width, channels, std::move(data));
}

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + "x" + std::to_string(a.channels()) + " vs " +
                     std::to_string(b.height()) + "x" + std::to_string(b.width()) + "x" +
                     std::to_string(b.channels()));
  }
}

// ---------------------------------------------------------------------------
// Resampling

/// Per-output-index source taps for one axis of a separable resampler.
struct ResampleTaps {
  int taps_per_output = 0;
  std::vector<int> index;      // out_size * taps_per_output, edge-clamped
  std::vector<double> weight;  // same layout
  int out_size = 0;
};

// Half-pixel-center mapping: src = (dst + 0.5) / scale - 0.5.
inline ResampleTaps bilinear_taps(int in_size, int scale) {
  ResampleTaps t;
  t.taps_per_output = 2;
  t.out_size = in_size * scale;
  t.index.resize(static_cast<std::size_t>(t.out_size) * 2);
  t.weight.resize(t.index.size());
  for (int d = 0; d < t.out_size; ++d) {
    const double src = (d + 0.5) / scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    const int i0 = static_cast<int>(base);
    t.index[2 * d] = std::clamp(i0, 0, in_size - 1);
    t.index[2 * d + 1] = std::clamp(i0 + 1, 0, in_size - 1);
    t.weight[2 * d] = 1.0 - frac;
    t.weight[2 * d + 1] = frac;
  }
  return t;
}

/// Cubic convolution kernel; a = -0.5 gives Catmull-Rom.
inline double cubic_kernel(double x, double a = -0.5) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

inline ResampleTaps bicubic_taps(int in_size, int scale, double a = -0.5) {
  ResampleTaps t;
  t.taps_per_output = 4;
  t.out_size = in_size * scale;
  t.index.resize(static_cast<std::size_t>(t.out_size) * 4);
  t.weight.resize(t.index.size());
  for (int d = 0; d < t.out_size; ++d) {
    const double src = (d + 0.5) / scale - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    const int i0 = static_cast<int>(base);
    for (int k = -1; k <= 2; ++k) {
      const std::size_t slot = static_cast<std::size_t>(d) * 4 + (k + 1);
      t.index[slot] = std::clamp(i0 + k, 0, in_size - 1);
      t.weight[slot] = cubic_kernel(frac - k, a);
    }
  }
  return t;
}

/// Separable resampling of one planar H x W channel. `src` and `dst` are
/// row-major planes; the element stride lets the same routine walk interleaved
/// image data.
template <typename T>
void resample_plane(const T* src, int in_h, int in_w, std::ptrdiff_t src_stride,
                    const ResampleTaps& rows, const ResampleTaps& cols, T* dst,
                    std::ptrdiff_t dst_stride) {
  const int out_h = rows.out_size;
  const int out_w = cols.out_size;
  std::vector<T> tmp(static_cast<std::size_t>(in_h) * out_w);
  for (int r = 0; r < in_h; ++r) {
    const T* srow = src + static_cast<std::ptrdiff_t>(r) * in_w * src_stride;
    for (int c = 0; c < out_w; ++c) {
      T acc = 0;
      for (int k = 0; k < cols.taps_per_output; ++k) {
        const std::size_t slot = static_cast<std::size_t>(c) * cols.taps_per_output + k;
        acc += static_cast<T>(cols.weight[slot]) * srow[cols.index[slot] * src_stride];
      }
      tmp[static_cast<std::size_t>(r) * out_w + c] = acc;
    }
  }
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      T acc = 0;
      for (int k = 0; k < rows.taps_per_output; ++k) {
        const std::size_t slot = static_cast<std::size_t>(r) * rows.taps_per_output + k;
        acc += static_cast<T>(rows.weight[slot]) *
               tmp[static_cast<std::size_t>(rows.index[slot]) * out_w + c];
      }
      dst[(static_cast<std::ptrdiff_t>(r) * out_w + c) * dst_stride] = acc;
    }
  }
}

/// Adjoint of resample_plane: scatters an output-sized gradient back onto the
/// input grid. Accumulates into `src_grad`.
template <typename T>
void resample_plane_adjoint(const T* dst_grad, const ResampleTaps& rows, const ResampleTaps& cols,
                            int in_h, int in_w, T* src_grad) {
  const int out_h = rows.out_size;
  const int out_w = cols.out_size;
  std::vector<T> tmp(static_cast<std::size_t>(in_h) * out_w, T(0));
  for (int r = 0; r < out_h; ++r) {
    for (int k = 0; k < rows.taps_per_output; ++k) {
      const std::size_t slot = static_cast<std::size_t>(r) * rows.taps_per_output + k;
      const T w = static_cast<T>(rows.weight[slot]);
      T* trow = tmp.data() + static_cast<std::size_t>(rows.index[slot]) * out_w;
      const T* grow = dst_grad + static_cast<std::size_t>(r) * out_w;
      for (int c = 0; c < out_w; ++c) trow[c] += w * grow[c];
    }
  }
  for (int r = 0; r < in_h; ++r) {
    const T* trow = tmp.data() + static_cast<std::size_t>(r) * out_w;
    T* srow = src_grad + static_cast<std::size_t>(r) * in_w;
    for (int c = 0; c < out_w; ++c) {
      for (int k = 0; k < cols.taps_per_output; ++k) {
        const std::size_t slot = static_cast<std::size_t>(c) * cols.taps_per_output + k;
        srow[cols.index[slot]] += static_cast<T>(cols.weight[slot]) * trow[c];
      }
    }
  }
}

namespace detail {

inline void require_scale(int scale) {
  if (scale < 2) throw ParameterError("upsample scale must be >= 2, got " + std::to_string(scale));
}

inline std::vector<double> resample_interleaved(const Image& img, const ResampleTaps& rows,
                                                const ResampleTaps& cols) {
  const int c = img.channels();
  std::vector<double> out(static_cast<std::size_t>(rows.out_size) * cols.out_size * c);
  for (int ch = 0; ch < c; ++ch) {
    resample_plane(img.data().data() + ch, img.height(), img.width(), c, rows, cols,
                   out.data() + ch, c);
  }
  return out;
}

}  // namespace detail

/// Replaces each s x s block with its per-channel arithmetic mean.
inline Image box_downsample(const Image& img, int scale) {
  if (scale < 1) throw ParameterError("downsample scale must be >= 1, got " + std::to_string(scale));
  if (img.height() % scale != 0) {
    throw DimensionError("box_downsample: height " + std::to_string(img.height()) +
                         " is not divisible by scale " + std::to_string(scale));
  }
  if (img.width() % scale != 0) {
    throw DimensionError("box_downsample: width " + std::to_string(img.width()) +
                         " is not divisible by scale " + std::to_string(scale));
  }
  const int oh = img.height() / scale;
  const int ow = img.width() / scale;
  const int c = img.channels();
  // Extended accumulation keeps a block of identical values summing exactly,
  // so box_downsample(nearest_upsample(x, s), s) == x bit for bit.
  const long double n = static_cast<long double>(scale) * scale;
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * c);
  for (int r = 0; r < oh; ++r) {
    for (int col = 0; col < ow; ++col) {
      for (int ch = 0; ch < c; ++ch) {
        long double acc = 0.0L;
        for (int dr = 0; dr < scale; ++dr) {
          for (int dc = 0; dc < scale; ++dc) acc += img(r * scale + dr, col * scale + dc, ch);
        }
        out[(static_cast<std::size_t>(r) * ow + col) * c + ch] = std::clamp(static_cast<double>(acc / n), 0.0, 1.0);
      }
    }
  }
  return Image(oh, ow, c, std::move(out));
}

/// Block replication; the right inverse of box_downsample.
inline Image nearest_upsample(const Image& img, int scale) {
  detail::require_scale(scale);
  const int oh = img.height() * scale;
  const int ow = img.width() * scale;
  const int c = img.channels();
  std::vector<double> out(static_cast<std::size_t>(oh) * ow * c);
  for (int r = 0; r < oh; ++r) {
    for (int col = 0; col < ow; ++col) {
      for (int ch = 0; ch < c; ++ch) {
        out[(static_cast<std::size_t>(r) * ow + col) * c + ch] = img(r / scale, col / scale, ch);
      }
    }
  }
  return Image(oh, ow, c, std::move(out));
}

/// Bilinear upsampling with half-pixel centers and edge clamping.
inline Image bilinear_upsample(const Image& img, int scale) {
  detail::require_scale(scale);
  auto out = detail::resample_interleaved(img, bilinear_taps(img.height(), scale),
                                          bilinear_taps(img.width(), scale));
  // Convex weights keep values in range up to rounding.
  return image_from_clamped(img.height() * scale, img.width() * scale, img.channels(),
                            std::move(out));
}

/// Catmull-Rom bicubic upsampling; the result is clamped to [0, 1].
inline Image bicubic_upsample(const Image& img, int scale) {
  detail::require_scale(scale);
  auto out = detail::resample_interleaved(img, bicubic_taps(img.height(), scale),
                                          bicubic_taps(img.width(), scale));
  return image_from_clamped(img.height() * scale, img.width() * scale, img.channels(),
                            std::move(out));
}

// ---------------------------------------------------------------------------
// Patches and grids

enum class Split { kTrain, kTest };

inline const char* split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ParameterError("unknown split '" + s + "' (expected train or test)");
}

struct PatchRecord {
  std::string source_id;
  int origin_row = 0;
  int origin_col = 0;
  int size = 0;
  Split split = Split::kTrain;

  friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

struct PatchManifest {
  std::vector<PatchRecord> entries;

  friend bool operator==(const PatchManifest&, const PatchManifest&) = default;
};

inline Image crop(const Image& img, int row, int col, int height, int width) {
  if (row < 0 || col < 0 || row + height > img.height() || col + width > img.width()) {
    throw SizeError("crop " + std::to_string(height) + "x" + std::to_string(width) + " at (" +
                    std::to_string(row) + ", " + std::to_string(col) + ") exceeds image " +
                    std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  const int c = img.channels();
  std::vector<double> out(static_cast<std::size_t>(height) * width * c);
  for (int r = 0; r < height; ++r) {
    const auto src = img.data().subspan(img.index(row + r, col, 0), static_cast<std::size_t>(width) * c);
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(r) * width * c);
  }
  return Image(height, width, c, std::move(out));
}

/// Number of patch origins along one axis.
inline int patch_count_along(int dim, int size, int stride) {
  return dim < size ? 0 : (dim - size) / stride + 1;
}

struct ExtractedPatches {
  PatchManifest manifest;
  std::vector<Image> patches;
};

/// Square patches at origins {0, stride, 2*stride, ...} per axis, row-major.
inline ExtractedPatches extract_patches(const Image& source, int size, int stride,
                                        const std::string& source_id = "source",
                                        Split split = Split::kTrain) {
  if (size < 1) throw ParameterError("patch size must be >= 1");
  if (stride < 1) throw ParameterError("patch stride must be >= 1");
  if (source.height() < size || source.width() < size) {
    throw SizeError("source '" + source_id + "' is " + std::to_string(source.height()) + "x" +
                    std::to_string(source.width()) + ", smaller than patch size " +
                    std::to_string(size));
  }
  ExtractedPatches out;
  const int nr = patch_count_along(source.height(), size, stride);
  const int nc = patch_count_along(source.width(), size, stride);
  out.patches.reserve(static_cast<std::size_t>(nr) * nc);
  for (int i = 0; i < nr; ++i) {
    for (int j = 0; j < nc; ++j) {
      out.manifest.entries.push_back({source_id, i * stride, j * stride, size, split});
      out.patches.push_back(crop(source, i * stride, j * stride, size, size));
    }
  }
  return out;
}

/// Cuts an image into a rows x cols grid of equal tiles, row-major.
inline std::vector<Image> split_grid(const Image& img, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ShapeError("grid must be at least 1x1");
  if (img.height() % rows != 0 || img.width() % cols != 0) {
    throw ShapeError("image " + std::to_string(img.height()) + "x" + std::to_string(img.width()) +
                     " does not divide into a " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " grid");
  }
  const int th = img.height() / rows;
  const int tw = img.width() / cols;
  std::vector<Image> tiles;
  tiles.reserve(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) tiles.push_back(crop(img, i * th, j * tw, th, tw));
  }
  return tiles;
}

/// Places equally sized patches into a rows x cols mosaic. No blending.
inline Image stitch_grid(std::span<const Image> patches, int rows, int cols) {
  if (rows < 1 || cols < 1) throw ShapeError("grid must be at least 1x1");
  if (patches.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("stitch_grid: expected " + std::to_string(rows * cols) + " patches for a " +
                     std::to_string(rows) + "x" + std::to_string(cols) + " grid, got " +
                     std::to_string(patches.size()));
  }
  const Image& first = patches.front();
  for (std::size_t k = 1; k < patches.size(); ++k) {
    if (!patches[k].same_shape(first)) {
      throw ShapeError("stitch_grid: patch " + std::to_string(k) +
                       " differs in shape from patch 0");
    }
  }
  const int h = first.height();
  const int w = first.width();
  const int c = first.channels();
  const int ow = cols * w;
  std::vector<double> out(static_cast<std::size_t>(rows) * h * ow * c);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      const Image& p = patches[static_cast<std::size_t>(i) * cols + j];
      for (int r = 0; r < h; ++r) {
        const auto src = p.data().subspan(p.index(r, 0, 0), static_cast<std::size_t>(w) * c);
        const std::size_t dst = (static_cast<std::size_t>(i * h + r) * ow + j * w) * c;
        std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(dst));
      }
    }
  }
  return Image(rows * h, ow, c, std::move(out));
}

/// Side-by-side montage of equally tall images with matching channels.
inline Image hconcat(std::span<const Image> panels) {
  if (panels.empty()) throw ShapeError("hconcat: no panels");
  const int h = panels.front().height();
  const int c = panels.front().channels();
  int total_w = 0;
  for (const Image& p : panels) {
    if (p.height() != h || p.channels() != c) throw ShapeError("hconcat: panel shape mismatch");
    total_w += p.width();
  }
  std::vector<double> out(static_cast<std::size_t>(h) * total_w * c);
  int offset = 0;
  for (const Image& p : panels) {
    for (int r = 0; r < h; ++r) {
      const auto src = p.data().subspan(p.index(r, 0, 0), static_cast<std::size_t>(p.width()) * c);
      std::copy(src.begin(), src.end(),
                out.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(r) * total_w + offset) * c));
    }
    offset += p.width();
  }
  return Image(h, total_w, c, std::move(out));
}

}  // namespace fsr
