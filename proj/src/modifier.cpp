#include "dan/modifier.hpp"

#include <cmath>
#include <limits>

#include "dan/errors.hpp"

namespace dan {

void ModifierConfig::validate() const {
  if (!(c_loss > 0.0 && gamma_max > 0.0) || n_batch <= 0 || n_iter <= 0)
    throw ConfigError("modifier parameters must be positive");
  if (!(p_trigger > 0.0 && p_trigger < 1.0)) throw ConfigError("modifier.p_trigger must lie in (0, 1)");
}

double modification_loss(const DanNetwork& net, const Vector& goal, const Vector& command, double c_loss) {
  // The sigmoid output is positive, so |h_dan| is h_dan itself.
  return net.forward(command) + c_loss * (goal - command).norm();
}

ModifyResult modify(const DanNetwork& net, const Vector& goal, const Vector& current, const ModifierConfig& cfg) {
  cfg.validate();
  if (goal.size() != net.n_inputs() || current.size() != net.n_inputs())
    throw ShapeError("modifier vectors must match the network input length");
  if (!goal.allFinite() || !current.allFinite()) throw DomainError("modifier inputs must be finite");

  ModifyResult res;
  res.p_goal = net.forward(goal);
  if (res.p_goal <= cfg.p_trigger) {
    res.command = goal;
    res.p_final = res.p_goal;
    return res;
  }
  res.triggered = true;

  const InputNormalizer& norm = net.normalizer();
  const Vector& scale = norm.scale;
  const int m = net.n_inputs();
  const int n_cand = cfg.n_batch + 1;

  // Loss of a batch of normalized rows.
  auto batch_loss = [&](const Matrix& rows) {
    const Vector p = net.forward_normalized_batch(rows);
    Vector l(rows.rows());
    for (Eigen::Index r = 0; r < rows.rows(); ++r)
      l[r] = p[r] + cfg.c_loss * (norm.denormalize(rows.row(r).transpose()) - goal).norm();
    return l;
  };

  Vector x = norm.normalize(current);
  double loss = batch_loss(x.transpose())[0];
  if (!std::isfinite(loss)) {
    res.command = current;
    res.p_final = net.forward(current);
    res.warning = true;
    return res;
  }
  res.loss_history.push_back(loss);

  Matrix cand(n_cand, m);
  for (int it = 0; it < cfg.n_iter; ++it) {
    Vector dp;
    net.forward_normalized(x, &dp);
    const Vector diff = norm.denormalize(x) - goal;
    const double dist = diff.norm();
    Vector grad = dp;
    if (dist > 0.0) grad += cfg.c_loss * scale.cwiseProduct(diff) / dist;
    if (!grad.allFinite()) {
      res.warning = true;
      break;
    }
    // Candidate 0 keeps the current iterate, so the kept loss never increases.
    for (int k = 0; k < n_cand; ++k) {
      const double gamma = cfg.gamma_max * static_cast<double>(k) / cfg.n_batch;
      cand.row(k) = (x - gamma * grad).transpose();
    }
    const Vector losses = batch_loss(cand);
    int best = 0;
    for (int k = 1; k < n_cand; ++k)
      if (std::isfinite(losses[k]) && losses[k] < losses[best]) best = k;
    for (int k = 0; k < n_cand; ++k)
      if (!std::isfinite(losses[k])) res.warning = true;
    x = cand.row(best).transpose();
    loss = losses[best];
    res.loss_history.push_back(loss);
    ++res.iterations;
  }
  res.command = norm.denormalize(x);
  res.p_final = net.forward(res.command);
  return res;
}

}  // namespace dan
