#pragma once

#include "dan/plant.hpp"

namespace dan {

struct SafetyParams {
  double f_thre = 200.0;   // N
  double c_minus = 0.001;  // mm/N
  double c_plus = 0.003;   // mm/N
  double c_gain = 2.0;     // mm/N

  void validate() const;
};

struct SafetyState {
  Vector delta_l;  // mm, per-muscle relaxation
  int label = 0;   // 1 while any muscle is relaxed

  static SafetyState zero(int n_muscles);
};

/// Tension-triggered relaxation update, applied per muscle every tick.
/// Throws DomainError on negative or non-finite tension.
SafetyState safety_step(const SafetyState& state, const Vector& f, const SafetyParams& params);

/// Command actually sent to the plant: command + delta_l.
Vector apply_safety(const Vector& command, const SafetyState& state);

/// 1 if any entry of delta_l is strictly positive.
int danger_label(const Vector& delta_l);

}  // namespace dan
