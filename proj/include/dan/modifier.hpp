#pragma once

#include <vector>

#include "dan/network.hpp"

namespace dan {

struct ModifierConfig {
  double c_loss = 0.01;    // weight of the distance-to-goal term, 1/mm
  double gamma_max = 0.1;  // largest candidate step, normalized input units
  int n_batch = 10;        // positive candidate rates per iteration
  int n_iter = 30;
  double p_trigger = 0.1;

  void validate() const;
};

struct ModifyResult {
  Vector command;           // mm
  double p_goal = 0.0;      // prediction for the requested command
  double p_final = 0.0;     // prediction for the returned command
  int iterations = 0;
  bool triggered = false;
  bool warning = false;     // a non-finite loss or gradient cut the search short
  std::vector<double> loss_history;  // kept loss after each iteration, starting with the initial iterate
};

/// L(x) = h_dan(x) + c_loss * ||goal - x||_2 with x in mm.
double modification_loss(const DanNetwork& net, const Vector& goal, const Vector& command, double c_loss);

/// Line-search gradient descent on L starting from `current`. Returns `goal`
/// untouched when its prediction does not exceed p_trigger.
ModifyResult modify(const DanNetwork& net, const Vector& goal, const Vector& current, const ModifierConfig& cfg);

}  // namespace dan
