#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dan {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Control period of the servo and the safety mechanism, seconds.
inline constexpr double kTickSeconds = 0.008;

inline constexpr double deg2rad(double deg) { return deg * 3.14159265358979323846 / 180.0; }

/// Region of configuration or command space that produces a steep tension ramp
/// on a set of muscles, standing in for physical interference or an
/// antagonistic trap.
struct DangerZone {
  enum class Kind { JointBox, MusclePairTrap };

  Kind kind = Kind::JointBox;
  std::string name;

  // JointBox: active while every listed joint satisfies |theta_j - center| < half_width.
  // Penetration (mm) is lever_mm times the smallest remaining margin (rad).
  std::vector<int> joints;
  Vector center;
  Vector half_width;
  double lever_mm = 100.0;

  // MusclePairTrap: active while command_a + command_b < threshold_mm.
  int muscle_a = 0;
  int muscle_b = 0;
  double threshold_mm = 0.0;

  std::vector<int> affected;
};

struct ArmConfig {
  Matrix moment_arm;      // m x n_joints, mm/rad
  Vector natural_length;  // mm, pretension absorbed
  Vector joint_lower;     // rad
  Vector joint_upper;     // rad
  Vector elastic_k;       // N/mm^2
  std::vector<DangerZone> danger_zones;
  double tension_noise_sd = 2.0;  // N
  std::uint64_t seed = 0;

  double servo_gain = 0.3;               // fraction of the LSQ correction applied per tick
  double overtravel = deg2rad(15.0);     // rad past each nominal limit the servo may reach
  double zone_ramp = 50.0;               // N per mm of zone penetration
  double upper_arm_mm = 280.0;
  double forearm_mm = 250.0;

  int n_joints() const { return static_cast<int>(moment_arm.cols()); }
  int n_muscles() const { return static_cast<int>(moment_arm.rows()); }

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Synthetic 5-joint, 10-muscle arm with three danger zones.
ArmConfig default_arm_config();

struct PlantState {
  Vector theta;       // rad
  Vector l_measured;  // mm
  Vector f;           // N
  std::int64_t t = 0; // ticks
  Rng rng;            // tension noise stream
};

/// l = natural_length - moment_arm * theta.
Vector muscle_length_of(const Vector& theta, const ArmConfig& cfg);

/// Exact per-muscle [min, max] length over the joint range including overtravel.
std::pair<Vector, Vector> reachable_length_range(const ArmConfig& cfg);

/// Zone penetration depth in mm; <= 0 when the zone condition does not hold.
double zone_penetration(const DangerZone& zone, const Vector& theta, const Vector& command);

/// Ramp tension contributed by all active zones, per muscle.
Vector danger_boost(const Vector& theta, const Vector& command, const ArmConfig& cfg);

/// Quadratic elastic tension plus zone ramps. Adds clamped gaussian noise when
/// `rng` is given and the configured noise is positive.
Vector tension_of(const Vector& theta, const Vector& command, const ArmConfig& cfg,
                  Rng* rng = nullptr);

/// Arm model with the cached pseudo-inverse used by the servo.
class Arm {
 public:
  explicit Arm(ArmConfig cfg);

  const ArmConfig& config() const { return cfg_; }
  int n_joints() const { return cfg_.n_joints(); }
  int n_muscles() const { return cfg_.n_muscles(); }

  PlantState initial_state(const Vector& theta) const;

  /// One 8 ms tick. Throws DomainError on a non-finite command and ShapeError
  /// on a wrong length; the input state is never modified.
  PlantState step(const PlantState& state, const Vector& command) const;

  /// Joint angles whose geometric lengths best match `command` (least squares).
  Vector lsq_theta(const Vector& command) const;

 private:
  ArmConfig cfg_;
  Matrix pinv_;
  Vector theta_min_;
  Vector theta_max_;
};

}  // namespace dan
