#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "trackrl/mlp.hpp"

namespace trackrl {

struct AdamSettings {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  VectorX<Scalar> m;
  VectorX<Scalar> v;
  std::int64_t step = 0;
  AdamSettings settings;

  AdamState() = default;
  AdamState(Eigen::Index size, AdamSettings s)
      : m(VectorX<Scalar>::Zero(size)), v(VectorX<Scalar>::Zero(size)), settings(s) {}
};

// Bias-corrected Adam update, in place.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, VectorX<Scalar>& params, const VectorX<Scalar>& grads) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step shape mismatch");
  }
  const AdamSettings& s = state.settings;
  ++state.step;
  const auto b1 = static_cast<Scalar>(s.beta1);
  const auto b2 = static_cast<Scalar>(s.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grads;
  state.v = b2 * state.v + (Scalar(1) - b2) * grads.cwiseAbs2();
  const double t = static_cast<double>(state.step);
  const auto c1 = static_cast<Scalar>(1.0 - std::pow(s.beta1, t));
  const auto c2 = static_cast<Scalar>(1.0 - std::pow(s.beta2, t));
  const auto lr = static_cast<Scalar>(s.lr);
  const auto eps = static_cast<Scalar>(s.eps);
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

}  // namespace trackrl
