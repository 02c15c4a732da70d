#include "dan/safety.hpp"

#include <algorithm>
#include <cmath>

#include "dan/errors.hpp"

namespace dan {

void SafetyParams::validate() const {
  if (!(f_thre > 0.0 && c_minus > 0.0 && c_plus > 0.0 && c_gain > 0.0))
    throw ConfigError("safety parameters must be positive");
  if (!(c_plus > c_minus)) throw ConfigError("safety c_plus must exceed c_minus");
}

SafetyState SafetyState::zero(int n_muscles) { return {Vector::Zero(n_muscles), 0}; }

int danger_label(const Vector& delta_l) { return (delta_l.array() > 0.0).any() ? 1 : 0; }

SafetyState safety_step(const SafetyState& state, const Vector& f, const SafetyParams& params) {
  if (f.size() != state.delta_l.size()) throw ShapeError("tension length differs from safety state");
  if (!f.allFinite() || (f.array() < 0.0).any())
    throw DomainError("safety_step requires finite, non-negative tensions");

  SafetyState next = state;
  for (Eigen::Index i = 0; i < f.size(); ++i) {
    const double prev = state.delta_l[i];
    const double d = std::abs(f[i] - params.f_thre);
    // The recovery branch targets zero; its C_plus cap never binds since 0 - prev <= 0.
    const double target = f[i] > params.f_thre ? params.c_gain * d : 0.0;
    next.delta_l[i] = prev + std::max(-params.c_minus * d, std::min(target - prev, params.c_plus * d));
  }
  next.label = danger_label(next.delta_l);
  return next;
}

Vector apply_safety(const Vector& command, const SafetyState& state) {
  if (command.size() != state.delta_l.size()) throw ShapeError("command length differs from safety state");
  return command + state.delta_l;
}

}  // namespace dan
