#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fsr/errors.hpp"
#include "fsr/image.hpp"
#include "fsr/layers.hpp"
#include "fsr/tensor.hpp"

namespace fsr {

enum class Normalization { kNone, kInstance };

inline const char* normalization_name(Normalization n) {
  return n == Normalization::kNone ? "none" : "instance";
}

inline Normalization parse_normalization(const std::string& s) {
  if (s == "none") return Normalization::kNone;
  if (s == "instance") return Normalization::kInstance;
  throw ConfigError("unknown normalization '" + s + "' (expected none or instance)");
}

/// Hyperparameters of the attention U-Net correction network.
struct ModelConfig {
  int scale = 4;
  int depth = 4;
  int base_channels = 32;
  bool attention_enabled = true;
  bool zero_init_final = true;
  Normalization normalization = Normalization::kNone;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  void validate() const {
    if (scale != 4 && scale != 8) {
      throw ConfigError("model scale must be 4 or 8, got " + std::to_string(scale));
    }
    if (depth < 1) throw ConfigError("model depth must be >= 1, got " + std::to_string(depth));
    if (base_channels < 1) {
      throw ConfigError("model base_channels must be >= 1, got " + std::to_string(base_channels));
    }
    if (depth > 12) throw ConfigError("model depth " + std::to_string(depth) + " is unreasonably large");
  }

  /// Feature width at encoder level `level` (the bottleneck is level == depth).
  int width_at(int level) const { return base_channels << level; }

  /// Low-resolution inputs must make scale * dim divisible by 2^depth.
  int lr_multiple() const {
    const int need = 1 << depth;
    int m = 1;
    while ((m * scale) % need != 0) ++m;
    return m;
  }
};

inline constexpr int kImageChannels = 3;

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
struct ParamArray {
  std::string name;
  std::vector<int> shape;
  AlignedVector<T> values;
};

template <typename T>
struct Parameters {
  std::vector<ParamArray<T>> arrays;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& a : arrays) n += a.values.size();
    return n;
  }
  const ParamArray<T>* find(const std::string& name) const {
    for (const auto& a : arrays) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }
  void set_zero() {
    for (auto& a : arrays) std::fill(a.values.begin(), a.values.end(), T(0));
  }
  bool same_layout(const Parameters& o) const {
    if (arrays.size() != o.arrays.size()) return false;
    for (std::size_t i = 0; i < arrays.size(); ++i) {
      if (arrays[i].name != o.arrays[i].name || arrays[i].shape != o.arrays[i].shape) return false;
    }
    return true;
  }
  friend bool operator==(const Parameters& a, const Parameters& b) {
    if (!a.same_layout(b)) return false;
    for (std::size_t i = 0; i < a.arrays.size(); ++i) {
      if (a.arrays[i].values != b.arrays[i].values) return false;
    }
    return true;
  }
};

/// How a tensor is initialized by init_parameters.
enum class InitKind { kHeNormal, kLecunNormal, kZero, kOne, kFinal };

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  InitKind init = InitKind::kZero;
  int fan_in = 1;

  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
};

namespace detail {

inline void add_conv(std::vector<ParamSpec>& out, const std::string& prefix, int cin, int cout, int k,
                     bool bias, InitKind kind, Normalization norm = Normalization::kNone) {
  out.push_back({prefix + ".weight", {cout, cin, k, k}, kind, cin * k * k});
  if (bias) out.push_back({prefix + ".bias", {cout}, kind == InitKind::kFinal ? InitKind::kFinal : InitKind::kZero, 1});
  if (norm == Normalization::kInstance) {
    out.push_back({prefix + ".norm.scale", {cout}, InitKind::kOne, 1});
    out.push_back({prefix + ".norm.shift", {cout}, InitKind::kZero, 1});
  }
}

inline int gate_width(int skip_channels) { return std::max(1, skip_channels / 2); }

}  // namespace detail

/// Ordered list of every trainable array; a pure function of the config.
inline std::vector<ParamSpec> parameter_layout(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  const auto norm = cfg.normalization;
  int cin = kImageChannels;
  for (int k = 0; k < cfg.depth; ++k) {
    const int c = cfg.width_at(k);
    const std::string p = "enc" + std::to_string(k);
    detail::add_conv(specs, p + ".conv1", cin, c, 3, true, InitKind::kHeNormal, norm);
    detail::add_conv(specs, p + ".conv2", c, c, 3, true, InitKind::kHeNormal, norm);
    cin = c;
  }
  const int cb = cfg.width_at(cfg.depth);
  detail::add_conv(specs, "bottleneck.conv1", cin, cb, 3, true, InitKind::kHeNormal, norm);
  detail::add_conv(specs, "bottleneck.conv2", cb, cb, 3, true, InitKind::kHeNormal, norm);
  for (int k = cfg.depth - 1; k >= 0; --k) {
    const int c = cfg.width_at(k);
    const int cg = cfg.width_at(k + 1);
    const std::string p = "dec" + std::to_string(k);
    if (cfg.attention_enabled) {
      const int inter = detail::gate_width(c);
      detail::add_conv(specs, p + ".gate.skip_proj", c, inter, 1, false, InitKind::kHeNormal);
      detail::add_conv(specs, p + ".gate.gating_proj", cg, inter, 1, true, InitKind::kHeNormal);
      detail::add_conv(specs, p + ".gate.psi", inter, 1, 1, true, InitKind::kLecunNormal);
    }
    detail::add_conv(specs, p + ".conv1", c + cg, c, 3, true, InitKind::kHeNormal, norm);
    detail::add_conv(specs, p + ".conv2", c, c, 3, true, InitKind::kHeNormal, norm);
  }
  detail::add_conv(specs, "head", cfg.width_at(0), kImageChannels, 1, true,
                   cfg.zero_init_final ? InitKind::kFinal : InitKind::kLecunNormal);
  return specs;
}

inline std::size_t parameter_count(const ModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : parameter_layout(cfg)) n += s.numel();
  return n;
}

template <typename T>
Parameters<T> zero_parameters(const ModelConfig& cfg) {
  Parameters<T> p;
  for (const auto& s : parameter_layout(cfg)) p.arrays.push_back({s.name, s.shape, AlignedVector<T>(s.numel(), T(0))});
  return p;
}

/// Deterministic in (config, seed). Convolutions feeding a ReLU use
/// N(0, 2/fan_in); the others N(0, 1/fan_in); biases start at zero. With
/// zero_init_final the output projection is exactly zero.
template <typename T>
Parameters<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Parameters<T> p;
  for (const auto& s : parameter_layout(cfg)) {
    ParamArray<T> a{s.name, s.shape, AlignedVector<T>(s.numel(), T(0))};
    double stddev = 0.0;
    switch (s.init) {
      case InitKind::kHeNormal: stddev = std::sqrt(2.0 / s.fan_in); break;
      case InitKind::kLecunNormal: stddev = std::sqrt(1.0 / s.fan_in); break;
      case InitKind::kOne: std::fill(a.values.begin(), a.values.end(), T(1)); break;
      case InitKind::kZero:
      case InitKind::kFinal: break;
    }
    if (stddev > 0.0) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (T& v : a.values) v = static_cast<T>(dist(rng));
    }
    p.arrays.push_back(std::move(a));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

/// Activations kept by a conv -> [norm] -> ReLU stage.
template <typename T>
struct StageCache {
  Tensor<T> input;
  Tensor<T> normalized;
  std::vector<T> inv_std;
  Tensor<T> output;
};

template <typename T>
struct GateCache {
  Tensor<T> hidden;        // relu(W_s skip + up(W_g gating + b))
  Tensor<T> coefficients;  // sigmoid(psi hidden + b), one channel
};

template <typename T>
struct LevelCache {
  StageCache<T> conv1;
  StageCache<T> conv2;
  std::vector<std::uint8_t> pool_argmax;  // encoder levels only
  GateCache<T> gate;                      // decoder levels with attention
  Tensor<T> gated_skip;
};

/// Everything the backward pass needs from one forward evaluation.
template <typename T>
struct ForwardCache {
  std::vector<LevelCache<T>> encoder;
  LevelCache<T> bottleneck;
  std::vector<LevelCache<T>> decoder;  // index = level
  Tensor<T> head_input;
};

/// Output of the additive attention gate plus its coefficient map.
template <typename T>
struct GateOutput {
  Tensor<T> gated;
  GateCache<T> cache;
};

/// Index of every array in a Parameters instance, resolved once per config.
class ParamIndex {
 public:
  explicit ParamIndex(const ModelConfig& cfg) {
    const auto specs = parameter_layout(cfg);
    for (std::size_t i = 0; i < specs.size(); ++i) slots_[specs[i].name] = static_cast<int>(i);
  }
  int operator[](const std::string& name) const {
    const auto it = slots_.find(name);
    if (it == slots_.end()) throw ConfigError("model has no parameter '" + name + "'");
    return it->second;
  }
  int find(const std::string& name) const {
    const auto it = slots_.find(name);
    return it == slots_.end() ? -1 : it->second;
  }

 private:
  std::map<std::string, int> slots_;
};

/// Additive attention gate:
///   alpha = sigmoid(psi(relu(W_s skip + up2(W_g gating + b_g))) + b_psi)
///   out   = skip * alpha  (broadcast over channels)
/// The gating projection runs at the coarse resolution before upsampling; a
/// 1x1 convolution commutes with bilinear upsampling.
template <typename T>
GateOutput<T> attention_gate(const Tensor<T>& skip, const Tensor<T>& gating, const T* skip_proj,
                             const T* gating_proj, const T* gating_bias, const T* psi,
                             const T* psi_bias, int inter) {
  if (gating.height * 2 != skip.height || gating.width * 2 != skip.width) {
    throw ShapeError("attention gate: gating grid " + std::to_string(gating.height) + "x" +
                     std::to_string(gating.width) + " is not half of skip grid " +
                     std::to_string(skip.height) + "x" + std::to_string(skip.width));
  }
  GateOutput<T> out;
  Tensor<T> s = layers::conv2d(skip, skip_proj, static_cast<const T*>(nullptr), inter, 1);
  const Tensor<T> q = layers::upsample_bilinear(layers::conv2d(gating, gating_proj, gating_bias, inter, 1), 2);
  for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] += q.data[i];
  layers::relu_inplace(s);
  Tensor<T> logits = layers::conv2d(s, psi, psi_bias, 1, 1);
  for (T& v : logits.data) v = layers::sigmoid(v);
  out.gated = skip;
  const std::size_t plane = skip.plane_size();
  for (int c = 0; c < skip.channels; ++c) {
    T* g = out.gated.plane(c);
    for (std::size_t i = 0; i < plane; ++i) g[i] *= logits.data[i];
  }
  out.cache.hidden = std::move(s);
  out.cache.coefficients = std::move(logits);
  return out;
}

/// Attention U-Net applied to an upsampled image; returns the residual
/// correction (3 channels, same grid).
template <typename T>
class AttentionUNet {
 public:
  explicit AttentionUNet(ModelConfig cfg) : cfg_(cfg), index_(cfg), layout_(parameter_layout(cfg)) {}

  const ModelConfig& config() const { return cfg_; }
  const ParamIndex& index() const { return index_; }

  Tensor<T> forward(const Parameters<T>& p, const Tensor<T>& x, ForwardCache<T>* cache) const {
    const int need = 1 << cfg_.depth;
    if (x.channels != kImageChannels) {
      throw ShapeError("network input must have 3 channels, got " + std::to_string(x.channels));
    }
    if (x.height % need != 0 || x.width % need != 0) {
      throw ConfigError("network input " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                        " must be divisible by 2^depth = " + std::to_string(need));
    }
    check_layout(p);
    ForwardCache<T> local;
    ForwardCache<T>& c = cache != nullptr ? *cache : local;
    const bool keep = cache != nullptr;
    c.encoder.assign(static_cast<std::size_t>(cfg_.depth), {});
    c.decoder.assign(static_cast<std::size_t>(cfg_.depth), {});

    std::vector<Tensor<T>> skips(static_cast<std::size_t>(cfg_.depth));
    Tensor<T> h = x;
    for (int k = 0; k < cfg_.depth; ++k) {
      auto& lc = c.encoder[k];
      const std::string pre = "enc" + std::to_string(k);
      h = stage_forward(p, pre + ".conv1", h, lc.conv1, keep);
      h = stage_forward(p, pre + ".conv2", h, lc.conv2, keep);
      skips[k] = h;
      h = layers::maxpool2(h, keep ? &lc.pool_argmax : nullptr);
    }
    h = stage_forward(p, "bottleneck.conv1", h, c.bottleneck.conv1, keep);
    h = stage_forward(p, "bottleneck.conv2", h, c.bottleneck.conv2, keep);
    for (int k = cfg_.depth - 1; k >= 0; --k) {
      auto& lc = c.decoder[k];
      const std::string pre = "dec" + std::to_string(k);
      Tensor<T> gated;
      if (cfg_.attention_enabled) {
        auto g = gate_forward(p, pre, skips[k], h);
        gated = std::move(g.gated);
        if (keep) lc.gate = std::move(g.cache);
      } else {
        gated = skips[k];
      }
      Tensor<T> merged = layers::concat_channels(gated, layers::upsample_bilinear(h, 2));
      if (keep) lc.gated_skip = gated;
      h = stage_forward(p, pre + ".conv1", merged, lc.conv1, keep);
      h = stage_forward(p, pre + ".conv2", h, lc.conv2, keep);
    }
    if (keep) c.head_input = h;
    return layers::conv2d(h, value(p, "head.weight"), value(p, "head.bias"), kImageChannels, 1);
  }

  /// Accumulates parameter gradients into `grads`; writes dL/dx into `d_input`
  /// when given.
  void backward(const Parameters<T>& p, const ForwardCache<T>& c, const Tensor<T>& d_out,
                Parameters<T>& grads, Tensor<T>* d_input) const {
    Tensor<T> d_h(c.head_input.channels, c.head_input.height, c.head_input.width);
    layers::conv2d_backward(c.head_input, value(p, "head.weight"), d_out, 1,
                            grad(grads, "head.weight"), grad(grads, "head.bias"), &d_h);

    std::vector<Tensor<T>> d_skips(static_cast<std::size_t>(cfg_.depth));
    for (int k = 0; k < cfg_.depth; ++k) {
      const auto& s = c.encoder[k].conv2.output;
      d_skips[k] = Tensor<T>(s.channels, s.height, s.width);
    }
    for (int k = 0; k < cfg_.depth; ++k) {
      const auto& lc = c.decoder[k];
      const std::string pre = "dec" + std::to_string(k);
      d_h = stage_backward(p, pre + ".conv2", lc.conv2, std::move(d_h), grads);
      Tensor<T> d_merged = stage_backward(p, pre + ".conv1", lc.conv1, std::move(d_h), grads);
      // Split the concatenation into [gated skip | upsampled coarse features].
      const int cs = cfg_.width_at(k);
      const std::size_t split = static_cast<std::size_t>(cs) * d_merged.plane_size();
      Tensor<T> d_gated(cs, d_merged.height, d_merged.width);
      std::copy(d_merged.data.begin(), d_merged.data.begin() + static_cast<std::ptrdiff_t>(split), d_gated.data.begin());
      Tensor<T> d_up(d_merged.channels - cs, d_merged.height, d_merged.width);
      std::copy(d_merged.data.begin() + static_cast<std::ptrdiff_t>(split), d_merged.data.end(), d_up.data.begin());

      const Tensor<T>& coarse = k + 1 < cfg_.depth ? c.decoder[k + 1].conv2.output : c.bottleneck.conv2.output;
      Tensor<T> d_coarse(coarse.channels, coarse.height, coarse.width);
      layers::upsample_bilinear_backward(d_up, 2, d_coarse);
      const Tensor<T>& skip = c.encoder[k].conv2.output;
      if (cfg_.attention_enabled) {
        gate_backward(p, pre, skip, coarse, lc.gate, d_gated, grads, d_skips[k], d_coarse);
      } else {
        for (std::size_t i = 0; i < d_gated.data.size(); ++i) d_skips[k].data[i] += d_gated.data[i];
      }
      d_h = std::move(d_coarse);
    }
    d_h = stage_backward(p, "bottleneck.conv2", c.bottleneck.conv2, std::move(d_h), grads);
    d_h = stage_backward(p, "bottleneck.conv1", c.bottleneck.conv1, std::move(d_h), grads);
    for (int k = cfg_.depth - 1; k >= 0; --k) {
      const auto& lc = c.encoder[k];
      const std::string pre = "enc" + std::to_string(k);
      Tensor<T> d_skip = std::move(d_skips[k]);
      layers::maxpool2_backward(lc.pool_argmax, d_h, d_skip);
      d_h = stage_backward(p, pre + ".conv2", lc.conv2, std::move(d_skip), grads);
      d_h = stage_backward(p, pre + ".conv1", lc.conv1, std::move(d_h), grads);
    }
    if (d_input != nullptr) {
      if (d_input->data.empty()) *d_input = Tensor<T>(d_h.channels, d_h.height, d_h.width);
      for (std::size_t i = 0; i < d_h.data.size(); ++i) d_input->data[i] += d_h.data[i];
    }
  }

 private:
  void check_layout(const Parameters<T>& p) const {
    bool ok = p.arrays.size() == layout_.size();
    for (std::size_t i = 0; ok && i < layout_.size(); ++i) {
      ok = p.arrays[i].name == layout_[i].name && p.arrays[i].shape == layout_[i].shape &&
           p.arrays[i].values.size() == layout_[i].numel();
    }
    if (!ok) throw ConfigError("parameters do not match the model config layout");
  }

  const T* value(const Parameters<T>& p, const std::string& name) const {
    return p.arrays[index_[name]].values.data();
  }
  T* grad(Parameters<T>& g, const std::string& name) const {
    return g.arrays[index_[name]].values.data();
  }

  Tensor<T> stage_forward(const Parameters<T>& p, const std::string& name, const Tensor<T>& in,
                          StageCache<T>& sc, bool keep) const {
    const auto& w = p.arrays[index_[name + ".weight"]];
    Tensor<T> out = layers::conv2d(in, w.values.data(), value(p, name + ".bias"), w.shape[0], w.shape[2]);
    if (cfg_.normalization == Normalization::kInstance) {
      Tensor<T> normalized;
      std::vector<T> inv_std;
      layers::instance_norm_inplace(out, value(p, name + ".norm.scale"), value(p, name + ".norm.shift"),
                                    normalized, inv_std);
      if (keep) {
        sc.normalized = std::move(normalized);
        sc.inv_std = std::move(inv_std);
      }
    }
    layers::relu_inplace(out);
    if (keep) {
      sc.input = in;
      sc.output = out;
    }
    return out;
  }

  Tensor<T> stage_backward(const Parameters<T>& p, const std::string& name, const StageCache<T>& sc,
                           Tensor<T> d_out, Parameters<T>& grads) const {
    layers::relu_backward_inplace(sc.output, d_out);
    if (cfg_.normalization == Normalization::kInstance) {
      layers::instance_norm_backward_inplace(d_out, sc.normalized, sc.inv_std,
                                             value(p, name + ".norm.scale"),
                                             grad(grads, name + ".norm.scale"),
                                             grad(grads, name + ".norm.shift"));
    }
    const auto& w = p.arrays[index_[name + ".weight"]];
    Tensor<T> d_in(sc.input.channels, sc.input.height, sc.input.width);
    layers::conv2d_backward(sc.input, w.values.data(), d_out, w.shape[2], grad(grads, name + ".weight"),
                            grad(grads, name + ".bias"), &d_in);
    return d_in;
  }

  GateOutput<T> gate_forward(const Parameters<T>& p, const std::string& pre, const Tensor<T>& skip,
                             const Tensor<T>& gating) const {
    const auto& ws = p.arrays[index_[pre + ".gate.skip_proj.weight"]];
    return attention_gate(skip, gating, ws.values.data(), value(p, pre + ".gate.gating_proj.weight"),
                          value(p, pre + ".gate.gating_proj.bias"), value(p, pre + ".gate.psi.weight"),
                          value(p, pre + ".gate.psi.bias"), ws.shape[0]);
  }

  void gate_backward(const Parameters<T>& p, const std::string& pre, const Tensor<T>& skip,
                     const Tensor<T>& gating, const GateCache<T>& gc, const Tensor<T>& d_gated,
                     Parameters<T>& grads, Tensor<T>& d_skip, Tensor<T>& d_gating) const {
    const std::size_t plane = skip.plane_size();
    const Tensor<T>& alpha = gc.coefficients;
    Tensor<T> d_logit(1, skip.height, skip.width);
    for (int c = 0; c < skip.channels; ++c) {
      const T* dg = d_gated.plane(c);
      const T* s = skip.plane(c);
      T* ds = d_skip.plane(c);
      for (std::size_t i = 0; i < plane; ++i) {
        ds[i] += dg[i] * alpha.data[i];
        d_logit.data[i] += dg[i] * s[i];
      }
    }
    for (std::size_t i = 0; i < plane; ++i) d_logit.data[i] *= alpha.data[i] * (T(1) - alpha.data[i]);

    Tensor<T> d_hidden(gc.hidden.channels, gc.hidden.height, gc.hidden.width);
    layers::conv2d_backward(gc.hidden, value(p, pre + ".gate.psi.weight"), d_logit, 1,
                            grad(grads, pre + ".gate.psi.weight"), grad(grads, pre + ".gate.psi.bias"),
                            &d_hidden);
    layers::relu_backward_inplace(gc.hidden, d_hidden);
    layers::conv2d_backward(skip, value(p, pre + ".gate.skip_proj.weight"), d_hidden, 1,
                            grad(grads, pre + ".gate.skip_proj.weight"), static_cast<T*>(nullptr), &d_skip);
    Tensor<T> d_q_low(d_hidden.channels, gating.height, gating.width);
    layers::upsample_bilinear_backward(d_hidden, 2, d_q_low);
    layers::conv2d_backward(gating, value(p, pre + ".gate.gating_proj.weight"), d_q_low, 1,
                            grad(grads, pre + ".gate.gating_proj.weight"),
                            grad(grads, pre + ".gate.gating_proj.bias"), &d_gating);
  }

  ModelConfig cfg_;
  ParamIndex index_;
  std::vector<ParamSpec> layout_;
};

/// Residual super-resolution model: out = up + unet(up), up = bilinear(lr).
template <typename T>
class ResidualSR {
 public:
  explicit ResidualSR(ModelConfig cfg) : net_(cfg) {}

  const ModelConfig& config() const { return net_.config(); }
  const AttentionUNet<T>& network() const { return net_; }

  struct Cache {
    Tensor<T> upsampled;
    ForwardCache<T> unet;
  };

  void check_input(int lr_height, int lr_width) const {
    const int m = config().lr_multiple();
    if (lr_height % m != 0 || lr_width % m != 0) {
      throw ConfigError("low-resolution input " + std::to_string(lr_height) + "x" +
                        std::to_string(lr_width) + " must be a multiple of " + std::to_string(m) +
                        " in both dims for scale " + std::to_string(config().scale) + " and depth " +
                        std::to_string(config().depth));
    }
  }

  /// Unclamped output; use finalize_image for export.
  Tensor<T> forward(const Parameters<T>& p, const Tensor<T>& lr, Cache* cache = nullptr) const {
    check_input(lr.height, lr.width);
    Tensor<T> up = layers::upsample_bilinear(lr, config().scale);
    Tensor<T> out = net_.forward(p, up, cache != nullptr ? &cache->unet : nullptr);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += up.data[i];
    if (cache != nullptr) cache->upsampled = std::move(up);
    return out;
  }

  /// Parameter gradients accumulate into `grads`; the low-resolution input
  /// gradient is returned when `d_lr` is non-null.
  void backward(const Parameters<T>& p, const Cache& cache, const Tensor<T>& d_out, Parameters<T>& grads,
                Tensor<T>* d_lr = nullptr) const {
    if (d_lr == nullptr) {
      net_.backward(p, cache.unet, d_out, grads, nullptr);
      return;
    }
    // The identity skip contributes d_out directly to the upsampled baseline.
    Tensor<T> d_up = d_out;
    net_.backward(p, cache.unet, d_out, grads, &d_up);
    const int s = config().scale;
    if (d_lr->data.empty()) *d_lr = Tensor<T>(d_up.channels, d_up.height / s, d_up.width / s);
    layers::upsample_bilinear_backward(d_up, s, *d_lr);
  }

  Image infer(const Parameters<T>& p, const Image& lr) const {
    if (lr.channels() != kImageChannels) {
      throw ShapeError("model input must be RGB, got " + std::to_string(lr.channels()) + " channel(s)");
    }
    return finalize_image(forward(p, to_tensor<T>(lr)));
  }

 private:
  AttentionUNet<T> net_;
};

}  // namespace fsr
