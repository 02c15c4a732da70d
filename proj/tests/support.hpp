#pragma once

#include <random>

#include "dan/config.hpp"

namespace dan::testing {

/// One joint driven by an antagonistic pair with moment arms a and -b.
inline ArmConfig antagonist_pair(double a, double b, double k = 0.5) {
  ArmConfig cfg;
  cfg.moment_arm.resize(2, 1);
  cfg.moment_arm << a, -b;
  cfg.natural_length = Eigen::Vector2d(250.0, 260.0);
  cfg.joint_lower = Vector::Constant(1, -1.0);
  cfg.joint_upper = Vector::Constant(1, 1.0);
  cfg.elastic_k = Vector::Constant(2, k);
  cfg.tension_noise_sd = 0.0;
  cfg.seed = 3;
  return cfg;
}

inline Vector uniform_vector(Rng& rng, const Vector& lo, const Vector& hi) {
  Vector v(lo.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
  return v;
}

inline Vector random_in_limits(Rng& rng, const ArmConfig& arm) {
  return uniform_vector(rng, arm.joint_lower, arm.joint_upper);
}

/// ||a - b|| / max(||a||, ||b||), zero when both vanish.
inline double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

/// Randomizes every parameter and running statistic so no layer is at its
/// initial symmetric state.
inline void scramble(DanNetwork& net, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> var(0.5, 2.0);
  for (Eigen::Index i = 0; i < net.parameters().size(); ++i) net.parameters()[i] += 0.3 * n01(rng);
  for (int k = 0; k < 3; ++k) {
    for (Eigen::Index i = 0; i < net.running_mean(k).size(); ++i) {
      net.running_mean(k)[i] = 0.3 * n01(rng);
      net.running_var(k)[i] = var(rng);
    }
  }
}

struct GradientCheck {
  double weight_error = 0.0;  // worst relative error over cases
  double input_error = 0.0;
};

/// Central-difference check of the parameter gradient of the batch loss and
/// of the input gradient of p, on `cases` random networks and inputs.
/// Parameter differences are taken on a random subset of coordinates.
inline GradientCheck check_gradients(int cases, std::uint64_t seed, int coords = 40) {
  const ArmConfig arm = default_arm_config();
  const auto [lmin, lmax] = reachable_length_range(arm);
  Rng rng(seed);
  GradientCheck worst;
  for (int c = 0; c < cases; ++c) {
    DanNetwork net(InputNormalizer::from_arm(arm), seed * 1000 + static_cast<std::uint64_t>(c));
    scramble(net, rng);

    const int rows = 8;
    Matrix x(rows, arm.n_muscles());
    Vector labels(rows);
    for (int r = 0; r < rows; ++r) {
      x.row(r) = net.normalizer().normalize(uniform_vector(rng, lmin, lmax)).transpose();
      labels[r] = r % 2;
    }
    Vector grad;
    net.loss_and_gradient(x, labels, &grad);
    Vector analytic(coords), numeric(coords);
    std::uniform_int_distribution<Eigen::Index> pick(0, net.parameters().size() - 1);
    const double h = 1e-6;
    for (int k = 0; k < coords; ++k) {
      const Eigen::Index i = pick(rng);
      DanNetwork up = net, down = net;
      up.parameters()[i] += h;
      down.parameters()[i] -= h;
      numeric[k] = (up.loss_and_gradient(x, labels, nullptr) - down.loss_and_gradient(x, labels, nullptr)) / (2 * h);
      analytic[k] = grad[i];
    }
    worst.weight_error = std::max(worst.weight_error, relative_error(analytic, numeric));

    const Vector cmd = uniform_vector(rng, lmin, lmax);
    auto p_loss = [](double p, const Vector&, double& dl_dp, Vector&) {
      dl_dp = 1.0;
      return p;
    };
    const Vector g = input_gradient(net, cmd, p_loss);
    Vector fd(cmd.size());
    const double hx = 1e-4;  // mm
    for (Eigen::Index i = 0; i < cmd.size(); ++i) {
      Vector up = cmd, down = cmd;
      up[i] += hx;
      down[i] -= hx;
      fd[i] = (net.forward(up) - net.forward(down)) / (2 * hx);
    }
    worst.input_error = std::max(worst.input_error, relative_error(g, fd));
  }
  return worst;
}

}  // namespace dan::testing
