#pragma once

#include <vector>

#include "dan/network.hpp"
#include "dan/plant.hpp"

namespace dan {

using Vector3 = Eigen::Vector3d;
using Jacobian = Eigen::Matrix<double, 3, Eigen::Dynamic>;

// Kinematic chain of the default arm: shoulder pitch (y), roll (z), yaw (x,
// along the upper arm), elbow flexion (y) and forearm rotation (x, along the
// forearm). At theta = 0 the arm points along +x.

Vector3 elbow_position(const Vector& theta, const ArmConfig& arm);
Vector3 forward_kinematics(const Vector& theta, const ArmConfig& arm);
Jacobian kinematic_jacobian(const Vector& theta, const ArmConfig& arm);

struct IkSolverConfig {
  double damping = 1e-3;    // DLS damping added to J J^T
  double step_clamp = 0.1;  // rad, largest task step per inner iteration
  int inner_iterations = 100;
  double tolerance_mm = 1.0;
  double accept_mm = 5.0;   // solutions farther than this are flagged
  double constraint_margin = 1e-4;  // rad kept beyond d_avoid
  bool respect_limits = true;  // project every iterate onto the nominal joint limits
};

struct IkProblem {
  Vector3 x_ref = Vector3::Zero();  // mm
  Vector theta_init;
  std::vector<Vector> avoid_list;
  double d_avoid = 0.2;    // rad, Euclidean distance in joint space
  double p_trigger = 0.1;
  int max_outer = 10;
};

struct TaskSolution {
  Vector theta;
  double error_mm = 0.0;
  bool constraints_satisfied = true;
  int iterations = 0;
};

/// Reaching task first; every ||theta - avoid_k|| > d_avoid as a second
/// priority, linearized as the supporting hyperplane of the excluded ball and
/// enforced inside the nullspace of the reaching Jacobian.
TaskSolution solve_avoiding(const Vector3& x_ref, const Vector& theta_init, const std::vector<Vector>& avoid,
                            double d_avoid, const ArmConfig& arm, const IkSolverConfig& cfg = {});

struct IkIteration {
  Vector theta;
  Vector command;
  double p = 0.0;
  double error_mm = 0.0;
  bool constraints_satisfied = true;
};

struct IkResult {
  Vector theta;
  Vector command;
  double p = 0.0;
  double error_mm = 0.0;
  std::vector<Vector> avoid_list;
  std::vector<IkIteration> iterations;
  bool unsafe = false;      // no candidate reached p <= p_trigger
  bool infeasible = false;  // returned candidate misses the target or a constraint
};

/// Outer loop: solve, predict the danger of the resulting command, and add
/// the posture to the avoidance list while the prediction exceeds p_trigger.
/// Throws UnreachableError when x_ref lies outside the arm's reach.
IkResult solve_prioritized(const IkProblem& problem, const DanNetwork& net, const ArmConfig& arm,
                           const IkSolverConfig& cfg = {});

}  // namespace dan
