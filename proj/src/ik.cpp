#include "dan/ik.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dan/errors.hpp"

namespace dan {

namespace {

using Rot = Eigen::Matrix3d;

Rot rot_x(double a) { return Eigen::AngleAxisd(a, Vector3::UnitX()).toRotationMatrix(); }
Rot rot_y(double a) { return Eigen::AngleAxisd(a, Vector3::UnitY()).toRotationMatrix(); }
Rot rot_z(double a) { return Eigen::AngleAxisd(a, Vector3::UnitZ()).toRotationMatrix(); }

void require_chain(const Vector& theta, const ArmConfig& arm) {
  if (arm.n_joints() != 5) throw ConfigError("kinematic chain is defined for 5-joint arms only");
  if (theta.size() != 5) throw ShapeError("theta must have 5 entries");
}

struct Frames {
  Rot pitch, pitch_roll, shoulder, elbow;
  Vector3 elbow_pos, hand_pos;
};

Frames frames(const Vector& theta, const ArmConfig& arm) {
  Frames f;
  f.pitch = rot_y(theta[0]);
  f.pitch_roll = f.pitch * rot_z(theta[1]);
  f.shoulder = f.pitch_roll * rot_x(theta[2]);
  f.elbow = f.shoulder * rot_y(theta[3]);
  f.elbow_pos = f.shoulder * Vector3(arm.upper_arm_mm, 0.0, 0.0);
  f.hand_pos = f.elbow_pos + f.elbow * rot_x(theta[4]) * Vector3(arm.forearm_mm, 0.0, 0.0);
  return f;
}

// Minimizes ||w||^2 subject to C w >= b by dual coordinate ascent (Hildreth).
Vector min_norm_inequality(const Matrix& c, const Vector& b) {
  const auto k = c.rows();
  Vector w = Vector::Zero(c.cols());
  Vector mu = Vector::Zero(k);
  for (int sweep = 0; sweep < 200; ++sweep) {
    double change = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) {
      const double nrm = c.row(i).squaredNorm();
      if (nrm < 1e-12) continue;
      const double next = std::max(0.0, mu[i] + (b[i] - c.row(i).dot(w)) / nrm);
      const double delta = next - mu[i];
      if (delta != 0.0) {
        w += delta * c.row(i).transpose();
        mu[i] = next;
        change = std::max(change, std::abs(delta));
      }
    }
    if (change < 1e-12) break;
  }
  return w;
}

bool constraints_hold(const Vector& theta, const std::vector<Vector>& avoid, double d) {
  return std::all_of(avoid.begin(), avoid.end(), [&](const Vector& a) { return (theta - a).norm() > d; });
}

}  // namespace

Vector3 elbow_position(const Vector& theta, const ArmConfig& arm) {
  require_chain(theta, arm);
  return frames(theta, arm).elbow_pos;
}

Vector3 forward_kinematics(const Vector& theta, const ArmConfig& arm) {
  require_chain(theta, arm);
  return frames(theta, arm).hand_pos;
}

Jacobian kinematic_jacobian(const Vector& theta, const ArmConfig& arm) {
  require_chain(theta, arm);
  const Frames f = frames(theta, arm);
  const Vector3 axes[5] = {Vector3::UnitY(), f.pitch * Vector3::UnitZ(), f.pitch_roll * Vector3::UnitX(),
                           f.shoulder * Vector3::UnitY(), f.elbow * Vector3::UnitX()};
  const Vector3 origins[5] = {Vector3::Zero(), Vector3::Zero(), Vector3::Zero(), f.elbow_pos, f.elbow_pos};
  Jacobian j(3, 5);
  for (int i = 0; i < 5; ++i) j.col(i) = axes[i].cross(f.hand_pos - origins[i]);
  return j;
}

TaskSolution solve_avoiding(const Vector3& x_ref, const Vector& theta_init, const std::vector<Vector>& avoid,
                            double d_avoid, const ArmConfig& arm, const IkSolverConfig& cfg) {
  require_chain(theta_init, arm);
  const int n = arm.n_joints();
  const Matrix identity = Matrix::Identity(n, n);
  const double bound = d_avoid + cfg.constraint_margin;

  TaskSolution sol;
  Vector theta = theta_init;
  if (cfg.respect_limits) theta = theta.cwiseMax(arm.joint_lower).cwiseMin(arm.joint_upper);
  for (int it = 0; it < cfg.inner_iterations; ++it) {
    const Vector3 err = x_ref - forward_kinematics(theta, arm);
    sol.error_mm = err.norm();
    if (sol.error_mm < cfg.tolerance_mm && constraints_hold(theta, avoid, d_avoid)) break;

    const Jacobian j = kinematic_jacobian(theta, arm);
    const Eigen::Matrix3d jjt = j * j.transpose() + cfg.damping * Eigen::Matrix3d::Identity();
    Vector step = j.transpose() * jjt.ldlt().solve(err);
    const double largest = step.cwiseAbs().maxCoeff();
    if (largest > cfg.step_clamp) step *= cfg.step_clamp / largest;

    if (!avoid.empty()) {
      const Matrix j_pinv = j.transpose() * jjt.inverse();
      const Matrix null_proj = identity - j_pinv * j;
      Matrix normals(static_cast<Eigen::Index>(avoid.size()), n);
      Vector rhs(static_cast<Eigen::Index>(avoid.size()));
      for (std::size_t k = 0; k < avoid.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        Vector v = theta - avoid[k];
        double r = v.norm();
        if (r < 1e-9) {
          // Degenerate start on the avoided posture: leave along the nullspace.
          v = null_proj * Vector::Ones(n);
          if (v.norm() < 1e-9) v = Vector::Ones(n);
          r = 0.0;
        }
        normals.row(row) = v.normalized().transpose();
        rhs[row] = bound - r;
      }
      const Matrix c = normals * null_proj;
      const Vector b = rhs - normals * step;
      step += null_proj * min_norm_inequality(c, b);
    }
    theta += step;
    if (cfg.respect_limits) theta = theta.cwiseMax(arm.joint_lower).cwiseMin(arm.joint_upper);
    sol.iterations = it + 1;
  }
  sol.theta = theta;
  sol.error_mm = (x_ref - forward_kinematics(theta, arm)).norm();
  sol.constraints_satisfied = constraints_hold(theta, avoid, d_avoid);
  return sol;
}

IkResult solve_prioritized(const IkProblem& problem, const DanNetwork& net, const ArmConfig& arm,
                           const IkSolverConfig& cfg) {
  require_chain(problem.theta_init, arm);
  if (!(problem.d_avoid > 0.0)) throw ConfigError("ik d_avoid must be positive");
  if (problem.max_outer <= 0) throw ConfigError("ik max_outer must be positive");
  for (const Vector& a : problem.avoid_list)
    if (a.size() != arm.n_joints()) throw ShapeError("avoidance posture length differs from joint count");

  const double reach = arm.upper_arm_mm + arm.forearm_mm;
  const double inner = std::abs(arm.upper_arm_mm - arm.forearm_mm);
  const double dist = problem.x_ref.norm();
  if (dist > reach || dist < inner) {
    const double gap = dist > reach ? dist - reach : inner - dist;
    std::ostringstream os;
    os << "target at " << dist << " mm from the shoulder is unreachable; closest achievable distance " << gap
       << " mm";
    throw UnreachableError(os.str(), gap);
  }

  IkResult res;
  res.avoid_list = problem.avoid_list;
  int best = -1;
  for (int outer = 0; outer < problem.max_outer; ++outer) {
    const TaskSolution sol = solve_avoiding(problem.x_ref, problem.theta_init, res.avoid_list, problem.d_avoid, arm, cfg);
    IkIteration rec;
    rec.theta = sol.theta;
    rec.command = muscle_length_of(sol.theta, arm);
    rec.p = net.forward(rec.command);
    rec.error_mm = sol.error_mm;
    rec.constraints_satisfied = sol.constraints_satisfied;
    res.iterations.push_back(rec);

    const bool valid = rec.error_mm <= cfg.accept_mm && rec.constraints_satisfied;
    const auto idx = static_cast<int>(res.iterations.size()) - 1;
    if (best < 0) {
      best = idx;
    } else {
      const IkIteration& b = res.iterations[static_cast<std::size_t>(best)];
      const bool b_valid = b.error_mm <= cfg.accept_mm && b.constraints_satisfied;
      if ((valid && !b_valid) || (valid == b_valid && rec.p < b.p)) best = idx;
    }
    if (valid && rec.p <= problem.p_trigger) break;
    res.avoid_list.push_back(sol.theta);
  }

  const IkIteration& chosen = res.iterations[static_cast<std::size_t>(best)];
  res.theta = chosen.theta;
  res.command = chosen.command;
  res.p = chosen.p;
  res.error_mm = chosen.error_mm;
  res.unsafe = chosen.p > problem.p_trigger;
  res.infeasible = chosen.error_mm > cfg.accept_mm || !chosen.constraints_satisfied;
  return res;
}

}  // namespace dan
