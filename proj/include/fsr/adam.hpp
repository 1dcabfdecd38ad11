#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "fsr/errors.hpp"
#include "fsr/model.hpp"

namespace fsr {

struct AdamOptions {
  double learning_rate = 3e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates with the same layout as the parameters.
template <typename T>
struct AdamState {
  Parameters<T> first_moment;
  Parameters<T> second_moment;
  std::int64_t step = 0;

  static AdamState zeros_like(const Parameters<T>& p) {
    AdamState s;
    s.first_moment = p;
    s.first_moment.set_zero();
    s.second_moment = s.first_moment;
    return s;
  }
};

/// One bias-corrected Adam update of a flat array at step `t` (1-based).
template <typename T>
void adam_update(std::span<T> params, std::span<const T> grads, std::span<T> m, std::span<T> v,
                 std::int64_t t, const AdamOptions& opt) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw ShapeError("adam: parameter, gradient and state sizes differ");
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    const double mi = opt.beta1 * static_cast<double>(m[i]) + (1.0 - opt.beta1) * g;
    const double vi = opt.beta2 * static_cast<double>(v[i]) + (1.0 - opt.beta2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = opt.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + opt.eps);
    params[i] = static_cast<T>(static_cast<double>(params[i]) - update);
  }
}

template <typename T>
void adam_step(Parameters<T>& params, const Parameters<T>& grads, AdamState<T>& state,
               const AdamOptions& opt) {
  if (!params.same_layout(grads) || !params.same_layout(state.first_moment) ||
      !params.same_layout(state.second_moment)) {
    throw ShapeError("adam: parameter, gradient and state layouts differ");
  }
  ++state.step;
  for (std::size_t i = 0; i < params.arrays.size(); ++i) {
    adam_update<T>(params.arrays[i].values, grads.arrays[i].values, state.first_moment.arrays[i].values,
                   state.second_moment.arrays[i].values, state.step, opt);
  }
}

}  // namespace fsr
