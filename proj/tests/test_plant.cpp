#include <doctest.h>

#include <cmath>

#include "dan/errors.hpp"
#include "dan/plant.hpp"
#include "support.hpp"

using namespace dan;
using namespace dan::testing;

TEST_CASE("muscle lengths at the zero pose are the natural lengths") {
  const ArmConfig arm = default_arm_config();
  CHECK(muscle_length_of(Vector::Zero(5), arm) == arm.natural_length);
}

TEST_CASE("single joint muscle length") {
  ArmConfig arm = antagonist_pair(20.0, 20.0);
  arm.natural_length = Eigen::Vector2d(300.0, 300.0);
  const Vector l = muscle_length_of(Vector::Constant(1, 0.5), arm);
  CHECK(l[0] == doctest::Approx(290.0));
  CHECK(l[1] == doctest::Approx(310.0));
}

TEST_CASE("muscle length Jacobian matches central differences") {
  const ArmConfig arm = default_arm_config();
  Rng rng(1);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector theta = random_in_limits(rng, arm);
    Matrix fd(arm.n_muscles(), arm.n_joints());
    for (int j = 0; j < arm.n_joints(); ++j) {
      Vector up = theta, down = theta;
      up[j] += h;
      down[j] -= h;
      fd.col(j) = (muscle_length_of(up, arm) - muscle_length_of(down, arm)) / (2 * h);
    }
    CHECK((fd + arm.moment_arm).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("wrong theta length is a configuration error") {
  CHECK_THROWS_AS(muscle_length_of(Vector::Zero(4), default_arm_config()), ConfigError);
}

TEST_CASE("tension examples") {
  ArmConfig arm = default_arm_config();
  arm.danger_zones.clear();
  const Vector theta = Vector::Constant(5, 0.3);
  const Vector l = muscle_length_of(theta, arm);

  SUBCASE("zero stretch gives zero tension without noise") {
    CHECK(tension_of(theta, l, arm).isZero());
  }
  SUBCASE("quadratic elastic law") {
    Vector cmd = l;
    cmd[4] -= 10.0;
    CHECK(tension_of(theta, cmd, arm)[4] == doctest::Approx(50.0));
  }
  SUBCASE("noise stays non-negative") {
    arm.tension_noise_sd = 5.0;
    Rng rng(4);
    for (int i = 0; i < 200; ++i) CHECK((tension_of(theta, l, arm, &rng).array() >= 0.0).all());
  }
}

TEST_CASE("joint box penetrated 4 mm adds 200 N") {
  ArmConfig arm = default_arm_config();
  const DangerZone& box = arm.danger_zones[0];
  arm.danger_zones = {box};
  Vector theta = Vector::Constant(5, 0.0);
  // Margin 0.04 rad on the tighter joint; lever 100 mm/rad gives 4 mm.
  theta[box.joints[0]] = box.center[0] + box.half_width[0] - 0.04;
  theta[box.joints[1]] = box.center[1];
  const Vector l = muscle_length_of(theta, arm);
  CHECK(zone_penetration(box, theta, l) == doctest::Approx(4.0));
  const Vector f = tension_of(theta, l, arm);
  for (int a : box.affected) CHECK(f[a] == doctest::Approx(200.0));
  CHECK(f.sum() == doctest::Approx(200.0 * static_cast<double>(box.affected.size())));
}

TEST_CASE("servo fixed point") {
  ArmConfig cfg = default_arm_config();
  cfg.tension_noise_sd = 0.0;
  const Arm arm(cfg);
  const Vector theta = 0.5 * (cfg.joint_lower + cfg.joint_upper);
  const PlantState s0 = arm.initial_state(theta);
  const PlantState s1 = arm.step(s0, muscle_length_of(theta, cfg));
  CHECK((s1.theta - theta).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(s1.f.isZero());
  CHECK(s1.t == 1);
}

TEST_CASE("non-finite or wrong-length commands are rejected without touching the state") {
  const Arm arm(default_arm_config());
  const PlantState s0 = arm.initial_state(Vector::Zero(5));
  Vector bad = arm.config().natural_length;
  bad[3] = std::nan("");
  CHECK_THROWS_AS(arm.step(s0, bad), DomainError);
  CHECK_THROWS_AS(arm.step(s0, Vector::Zero(9)), ShapeError);
  CHECK(s0.t == 0);
  CHECK(s0.theta.isZero());
}

TEST_CASE("co-contraction matches the closed-form equilibrium") {
  // Pair with moment arms a, -b shortened by s from the rest lengths. At the
  // servo equilibrium A^T (l(theta) - c) = 0, which gives
  // delta = (a - b) s / (a^2 + b^2), stretch_0 = s - a delta, stretch_1 = s + b delta.
  const double a = 22.0, b = 14.0, s = 5.0, k = 0.5;
  const ArmConfig cfg = antagonist_pair(a, b, k);
  const Arm arm(cfg);
  PlantState st = arm.initial_state(Vector::Zero(1));
  const Vector cmd = cfg.natural_length.array() - s;
  for (int i = 0; i < 400; ++i) st = arm.step(st, cmd);
  const double delta = (a - b) * s / (a * a + b * b);
  CHECK(st.theta[0] == doctest::Approx(delta).epsilon(1e-9));
  CHECK(st.f[0] == doctest::Approx(k * std::pow(s - a * delta, 2)).epsilon(1e-9));
  CHECK(st.f[1] == doctest::Approx(k * std::pow(s + b * delta, 2)).epsilon(1e-9));
  CHECK(st.f[0] > 0.0);
  CHECK(st.f[1] > 0.0);
}

TEST_CASE("uniform shortening never lowers either tension") {
  Rng rng(21);
  std::uniform_real_distribution<double> arm_dist(5.0, 40.0), k_dist(0.1, 2.0), th_dist(-0.8, 0.8);
  for (int trial = 0; trial < 100; ++trial) {
    const ArmConfig cfg = antagonist_pair(arm_dist(rng), arm_dist(rng), k_dist(rng));
    const Arm arm(cfg);
    const Vector theta0 = Vector::Constant(1, th_dist(rng));
    Vector previous = Vector::Zero(2);
    for (double s = 0.0; s <= 20.0; s += 2.0) {
      PlantState st = arm.initial_state(theta0);
      const Vector cmd = muscle_length_of(theta0, cfg).array() - s;
      for (int i = 0; i < 200; ++i) st = arm.step(st, cmd);
      CHECK(st.f[0] >= previous[0] - 1e-9);
      CHECK(st.f[1] >= previous[1] - 1e-9);
      previous = st.f;
    }
  }
}

TEST_CASE("identical seed and commands give bit-identical trajectories") {
  const Arm arm(default_arm_config());
  Rng cmd_rng(8);
  std::vector<Vector> commands;
  for (int i = 0; i < 300; ++i)
    commands.push_back(muscle_length_of(random_in_limits(cmd_rng, arm.config()), arm.config()).array() - 3.0);
  auto run = [&] {
    PlantState st = arm.initial_state(Vector::Constant(5, 0.2));
    std::vector<Vector> f;
    for (const Vector& c : commands) {
      st = arm.step(st, c);
      f.push_back(st.f);
      f.push_back(st.theta);
    }
    return f;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("danger boost is positive exactly where a zone condition holds") {
  const ArmConfig arm = default_arm_config();
  // Sweep every pair of joints a zone looks at, plus a pretension sweep for the trap.
  const Vector lo = arm.joint_lower.array() - arm.overtravel;
  const Vector hi = arm.joint_upper.array() + arm.overtravel;
  for (int j0 = 0; j0 < 5; ++j0) {
    for (int j1 = j0 + 1; j1 < 5; ++j1) {
      for (int pre = 0; pre <= 20; pre += 10) {
        for (int u = 0; u < 20; ++u) {
          for (int v = 0; v < 20; ++v) {
            Vector theta = 0.5 * (arm.joint_lower + arm.joint_upper);
            theta[j0] = lo[j0] + (hi[j0] - lo[j0]) * (u + 0.5) / 20.0;
            theta[j1] = lo[j1] + (hi[j1] - lo[j1]) * (v + 0.5) / 20.0;
            const Vector cmd = muscle_length_of(theta, arm).array() - pre;
            bool inside = false;
            for (const DangerZone& z : arm.danger_zones) {
              if (z.kind == DangerZone::Kind::JointBox) {
                bool all = true;
                for (std::size_t k = 0; k < z.joints.size(); ++k)
                  all &= std::abs(theta[z.joints[k]] - z.center[static_cast<Eigen::Index>(k)]) <
                         z.half_width[static_cast<Eigen::Index>(k)];
                inside |= all;
              } else {
                inside |= cmd[z.muscle_a] + cmd[z.muscle_b] < z.threshold_mm;
              }
            }
            CHECK((danger_boost(theta, cmd, arm).maxCoeff() > 0.0) == inside);
          }
        }
      }
    }
  }
}

TEST_CASE("config validation") {
  ArmConfig arm = default_arm_config();
  SUBCASE("limits") {
    arm.joint_lower[2] = arm.joint_upper[2];
    CHECK_THROWS_AS(arm.validate(), ConfigError);
  }
  SUBCASE("stiffness") {
    arm.elastic_k[0] = 0.0;
    CHECK_THROWS_AS(arm.validate(), ConfigError);
  }
  SUBCASE("polyarticular row required") {
    for (int i = 0; i < arm.n_muscles(); ++i) {
      Eigen::Index keep = 0;
      arm.moment_arm.row(i).cwiseAbs().maxCoeff(&keep);
      const double v = arm.moment_arm(i, keep);
      arm.moment_arm.row(i).setZero();
      arm.moment_arm(i, keep) = v;
    }
    CHECK_THROWS_AS(arm.validate(), ConfigError);
  }
  SUBCASE("zone muscle index") {
    arm.danger_zones[0].affected = {10};
    CHECK_THROWS_AS(arm.validate(), ConfigError);
  }
  SUBCASE("zone half width") {
    arm.danger_zones[1].half_width[0] = 0.0;
    CHECK_THROWS_AS(arm.validate(), ConfigError);
  }
}
