#include "dan/plant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dan/errors.hpp"

namespace dan {

namespace {

void check_index(int idx, int bound, const std::string& what) {
  if (idx < 0 || idx >= bound) {
    std::ostringstream os;
    os << what << " index " << idx << " out of range [0, " << bound << ")";
    throw ConfigError(os.str());
  }
}

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw DomainError(std::string(what) + " contains non-finite values");
}

}  // namespace

void ArmConfig::validate() const {
  const int n = n_joints();
  const int m = n_muscles();
  if (n == 0 || m == 0) throw ConfigError("moment_arm must be non-empty");
  if (natural_length.size() != m) throw ConfigError("natural_length length differs from muscle count");
  if (elastic_k.size() != m) throw ConfigError("elastic_k length differs from muscle count");
  if (joint_lower.size() != n || joint_upper.size() != n)
    throw ConfigError("joint limits length differs from joint count");
  if (!moment_arm.allFinite() || !natural_length.allFinite() || !joint_lower.allFinite() ||
      !joint_upper.allFinite() || !elastic_k.allFinite())
    throw ConfigError("arm configuration contains non-finite values");

  bool polyarticular = false;
  for (int i = 0; i < m; ++i) {
    int nonzero = 0;
    for (int j = 0; j < n; ++j) nonzero += moment_arm(i, j) != 0.0;
    polyarticular |= nonzero >= 2;
  }
  if (n >= 2 && !polyarticular) throw ConfigError("moment_arm needs at least one polyarticular muscle row");

  for (int j = 0; j < n; ++j)
    if (!(joint_lower[j] < joint_upper[j])) throw ConfigError("joint_lower must be below joint_upper");
  for (int i = 0; i < m; ++i)
    if (!(elastic_k[i] > 0.0)) throw ConfigError("elastic_k must be positive");
  if (tension_noise_sd < 0.0) throw ConfigError("tension_noise_sd must be non-negative");
  if (!(servo_gain > 0.0 && servo_gain <= 1.0)) throw ConfigError("servo_gain must lie in (0, 1]");
  if (overtravel < 0.0) throw ConfigError("overtravel must be non-negative");
  if (!(upper_arm_mm > 0.0 && forearm_mm > 0.0)) throw ConfigError("link lengths must be positive");

  for (const DangerZone& z : danger_zones) {
    for (int a : z.affected) check_index(a, m, "zone '" + z.name + "' affected muscle");
    if (z.affected.empty()) throw ConfigError("zone '" + z.name + "' affects no muscle");
    if (z.kind == DangerZone::Kind::JointBox) {
      const auto k = static_cast<Eigen::Index>(z.joints.size());
      if (k == 0 || z.center.size() != k || z.half_width.size() != k)
        throw ConfigError("zone '" + z.name + "' joints/center/half_width lengths differ");
      for (int j : z.joints) check_index(j, n, "zone '" + z.name + "' joint");
      if ((z.half_width.array() <= 0.0).any())
        throw ConfigError("zone '" + z.name + "' half widths must be positive");
      if (!(z.lever_mm > 0.0)) throw ConfigError("zone '" + z.name + "' lever must be positive");
    } else {
      check_index(z.muscle_a, m, "zone '" + z.name + "' muscle");
      check_index(z.muscle_b, m, "zone '" + z.name + "' muscle");
    }
  }
}

ArmConfig default_arm_config() {
  ArmConfig cfg;
  // Columns: shoulder pitch, shoulder roll, shoulder yaw, elbow flexion, forearm rotation.
  // Values are synthetic, not measured on any robot.
  cfg.moment_arm.resize(10, 5);
  cfg.moment_arm <<  //
      28.0,   8.0,   6.0,   0.0,   0.0,   // 0 anterior deltoid
      -28.0,  8.0,  -6.0,   0.0,   0.0,   // 1 posterior deltoid
      18.0, -22.0,  10.0,   0.0,   0.0,   // 2 pectoralis major
      -18.0, -22.0, -10.0,  0.0,   0.0,   // 3 latissimus dorsi
      0.0,   26.0,   0.0,   0.0,   0.0,   // 4 supraspinatus
      0.0,    0.0, -24.0,   0.0,   0.0,   // 5 infraspinatus
      14.0,   0.0,   4.0,  24.0,   6.0,   // 6 biceps (polyarticular)
      0.0,    0.0,   0.0, -22.0,   0.0,   // 7 triceps
      0.0,    0.0,   0.0,   4.0,  16.0,   // 8 pronator
      0.0,    0.0,   0.0,   0.0, -16.0;   // 9 supinator
  cfg.natural_length.resize(10);
  cfg.natural_length << 220.0, 230.0, 260.0, 300.0, 180.0, 200.0, 340.0, 320.0, 150.0, 140.0;
  cfg.joint_lower.resize(5);
  cfg.joint_upper.resize(5);
  cfg.joint_lower << -1.0, 0.0, -0.8, 0.0, -1.0;
  cfg.joint_upper << 1.2, 1.4, 0.8, 2.2, 1.0;
  cfg.elastic_k = Vector::Constant(10, 0.5);
  cfg.tension_noise_sd = 2.0;
  cfg.seed = 1;

  DangerZone torso;
  torso.kind = DangerZone::Kind::JointBox;
  torso.name = "forearm_torso";
  torso.joints = {1, 3};
  torso.center = Eigen::Vector2d(0.05, 2.05);
  torso.half_width = Eigen::Vector2d(0.3, 0.35);
  torso.lever_mm = 100.0;
  torso.affected = {6, 2};

  DangerZone head;
  head.kind = DangerZone::Kind::JointBox;
  head.name = "upper_arm_head";
  head.joints = {0, 2};
  head.center = Eigen::Vector2d(1.2, 0.8);
  head.half_width = Eigen::Vector2d(0.35, 0.35);
  head.lever_mm = 100.0;
  head.affected = {0, 2};

  DangerZone trap;
  trap.kind = DangerZone::Kind::MusclePairTrap;
  trap.name = "biceps_pectoralis_trap";
  trap.muscle_a = 6;
  trap.muscle_b = 2;
  trap.threshold_mm = 540.0;
  trap.affected = {6, 2};

  cfg.danger_zones = {torso, head, trap};
  return cfg;
}

Vector muscle_length_of(const Vector& theta, const ArmConfig& cfg) {
  if (theta.size() != cfg.n_joints()) {
    std::ostringstream os;
    os << "theta has " << theta.size() << " entries, arm has " << cfg.n_joints() << " joints";
    throw ConfigError(os.str());
  }
  return cfg.natural_length - cfg.moment_arm * theta;
}

std::pair<Vector, Vector> reachable_length_range(const ArmConfig& cfg) {
  const Vector lo = cfg.joint_lower.array() - cfg.overtravel;
  const Vector hi = cfg.joint_upper.array() + cfg.overtravel;
  Vector lmin = cfg.natural_length;
  Vector lmax = cfg.natural_length;
  for (int i = 0; i < cfg.n_muscles(); ++i) {
    for (int j = 0; j < cfg.n_joints(); ++j) {
      const double a = cfg.moment_arm(i, j);
      const double at_lo = -a * lo[j];
      const double at_hi = -a * hi[j];
      lmin[i] += std::min(at_lo, at_hi);
      lmax[i] += std::max(at_lo, at_hi);
    }
  }
  return {lmin, lmax};
}

double zone_penetration(const DangerZone& zone, const Vector& theta, const Vector& command) {
  if (zone.kind == DangerZone::Kind::JointBox) {
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < zone.joints.size(); ++k) {
      const auto idx = static_cast<Eigen::Index>(k);
      margin = std::min(margin, zone.half_width[idx] - std::abs(theta[zone.joints[k]] - zone.center[idx]));
    }
    return zone.lever_mm * margin;
  }
  return zone.threshold_mm - (command[zone.muscle_a] + command[zone.muscle_b]);
}

Vector danger_boost(const Vector& theta, const Vector& command, const ArmConfig& cfg) {
  Vector boost = Vector::Zero(cfg.n_muscles());
  for (const DangerZone& z : cfg.danger_zones) {
    const double depth = zone_penetration(z, theta, command);
    if (depth <= 0.0) continue;
    for (int a : z.affected) boost[a] += cfg.zone_ramp * depth;
  }
  return boost;
}

Vector tension_of(const Vector& theta, const Vector& command, const ArmConfig& cfg, Rng* rng) {
  if (command.size() != cfg.n_muscles()) throw ShapeError("command length differs from muscle count");
  const Vector stretch = (muscle_length_of(theta, cfg) - command).cwiseMax(0.0);
  Vector f = cfg.elastic_k.cwiseProduct(stretch.cwiseAbs2()) + danger_boost(theta, command, cfg);
  if (rng != nullptr && cfg.tension_noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.tension_noise_sd);
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] += noise(*rng);
  }
  return f.cwiseMax(0.0);
}

Arm::Arm(ArmConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  pinv_ = cfg_.moment_arm.completeOrthogonalDecomposition().pseudoInverse();
  theta_min_ = cfg_.joint_lower.array() - cfg_.overtravel;
  theta_max_ = cfg_.joint_upper.array() + cfg_.overtravel;
}

PlantState Arm::initial_state(const Vector& theta) const {
  if (theta.size() != n_joints()) throw ShapeError("initial theta length differs from joint count");
  check_finite(theta, "initial theta");
  PlantState s;
  s.theta = theta;
  s.l_measured = muscle_length_of(theta, cfg_);
  s.f = Vector::Zero(n_muscles());
  s.t = 0;
  s.rng.seed(cfg_.seed);
  return s;
}

PlantState Arm::step(const PlantState& state, const Vector& command) const {
  if (command.size() != n_muscles()) throw ShapeError("command length differs from muscle count");
  check_finite(command, "command");
  PlantState next = state;
  const Vector error = muscle_length_of(state.theta, cfg_) - command;
  next.theta = (state.theta + cfg_.servo_gain * (pinv_ * error)).cwiseMax(theta_min_).cwiseMin(theta_max_);
  next.l_measured = muscle_length_of(next.theta, cfg_);
  next.f = tension_of(next.theta, command, cfg_, &next.rng);
  next.t = state.t + 1;
  return next;
}

Vector Arm::lsq_theta(const Vector& command) const {
  if (command.size() != n_muscles()) throw ShapeError("command length differs from muscle count");
  return pinv_ * (cfg_.natural_length - command);
}

}  // namespace dan
