#include <doctest.h>

#include <cmath>

#include "dan/errors.hpp"
#include "dan/network.hpp"
#include "support.hpp"

using namespace dan;
using namespace dan::testing;

namespace {

DanNetwork default_net(std::uint64_t seed = 1) { return DanNetwork(InputNormalizer::from_arm(default_arm_config()), seed); }

Vector random_command(Rng& rng) {
  const auto [lo, hi] = reachable_length_range(default_arm_config());
  return uniform_vector(rng, lo, hi);
}

}  // namespace

TEST_CASE("layer widths") {
  const DanNetwork net = default_net();
  CHECK(net.widths() == std::array<int, 4>{10, 64, 64, 1});
}

TEST_CASE("zero final layer outputs one half") {
  DanNetwork net = default_net();
  net.dense_weight(2).setZero();
  net.dense_bias(2).setZero();
  Rng rng(2);
  for (int i = 0; i < 20; ++i) CHECK(net.forward(random_command(rng)) == 0.5);
}

TEST_CASE("output stays inside the open unit interval") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    DanNetwork net = default_net(static_cast<std::uint64_t>(trial));
    scramble(net, rng);
    net.dense_weight(2) *= 50.0;
    for (double extreme : {1e6, -1e6}) {
      Vector cmd = random_command(rng);
      cmd[trial % 10] = extreme;
      const double p = net.forward(cmd);
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      CHECK(net.forward(Vector::Constant(10, extreme)) > 0.0);
      CHECK(net.forward(Vector::Constant(10, extreme)) < 1.0);
    }
  }
}

TEST_CASE("wrong input length is a shape error") {
  CHECK_THROWS_AS(default_net().forward(Vector::Zero(9)), ShapeError);
}

TEST_CASE("weight and input gradients match central differences") {
  const GradientCheck g = check_gradients(100, 17);
  CHECK(g.weight_error <= 1e-4);
  CHECK(g.input_error <= 1e-4);
}

TEST_CASE("eval mode: batched forward equals per-sample forward") {
  Rng rng(5);
  DanNetwork net = default_net();
  scramble(net, rng);
  Matrix cmds(50, 10);
  for (int r = 0; r < 50; ++r) cmds.row(r) = random_command(rng).transpose();
  const Vector batched = net.forward_batch(cmds);
  for (int r = 0; r < 50; ++r) {
    const double single = net.forward(cmds.row(r).transpose());
    CHECK(std::abs(batched[r] - single) <= 1e-10);
    CHECK(net.forward(cmds.row(r).transpose()) == single);
  }
}

TEST_CASE("input gradient of simple losses") {
  Rng rng(6);
  const DanNetwork net = default_net();
  const Vector x = random_command(rng);
  SUBCASE("constant loss") {
    auto constant = [](double, const Vector&, double& dl_dp, Vector&) {
      dl_dp = 0.0;
      return 3.0;
    };
    CHECK(input_gradient(net, x, constant).isZero());
  }
  SUBCASE("distance to a point") {
    const Vector x0 = random_command(rng);
    auto dist = [&](double, const Vector& c, double& dl_dp, Vector& dl_dx) {
      dl_dp = 0.0;
      dl_dx = (c - x0) / (c - x0).norm();
      return (c - x0).norm();
    };
    CHECK(relative_error(input_gradient(net, x, dist), (x - x0) / (x - x0).norm()) < 1e-12);
  }
  SUBCASE("non-finite loss is rejected") {
    auto bad = [](double, const Vector&, double& dl_dp, Vector&) {
      dl_dp = 1.0;
      return std::nan("");
    };
    CHECK_THROWS_AS(input_gradient(net, x, bad), DomainError);
  }
}

TEST_CASE("running statistics follow the momentum rule") {
  Rng rng(7);
  DanNetwork net = default_net();
  Matrix cmds(10, 10);
  for (int r = 0; r < 10; ++r) cmds.row(r) = random_command(rng).transpose();
  TrainBatch data{cmds, Vector::Zero(10)};
  const Matrix x = net.normalizer().normalize_rows(cmds);
  const Vector mean = x.colwise().mean().transpose();
  const Vector var = ((x.rowwise() - mean.transpose()).colwise().squaredNorm() / 9.0).transpose();
  MomentumSgd sgd;
  Rng shuffle(1);
  train_epochs(net, data, sgd, 1, 10, shuffle);
  CHECK(relative_error(net.running_mean(0), 0.1 * mean) < 1e-12);
  CHECK(relative_error(net.running_var(0), Vector(0.9 * Vector::Ones(10) + 0.1 * var)) < 1e-12);
}

TEST_CASE("overfitting a single sample") {
  Rng rng(8);
  const Vector x = random_command(rng);
  TrainBatch data{x.transpose(), Vector::Ones(1)};
  for (const char* name : {"adam", "momentum_sgd"}) {
    CAPTURE(name);
    DanNetwork net = default_net(9);
    auto opt = make_optimizer(name);
    Rng shuffle(2);
    const auto losses = train_epochs(net, data, *opt, 200, 1, shuffle);
    CHECK(net.forward(x) > 0.99);
    CHECK(net.loss_and_gradient(net.normalizer().normalize(x).transpose(), Vector::Ones(1), nullptr) < 0.01);
    CHECK(losses.back() < losses.front());
  }
}

TEST_CASE("linearly separable toy set") {
  Rng rng(10);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TrainBatch data{Matrix(500, 2), Vector(500)};
  for (int i = 0; i < 500; ++i) {
    data.inputs(i, 0) = u(rng);
    data.inputs(i, 1) = u(rng);
    data.labels[i] = data.inputs(i, 0) + 0.5 * data.inputs(i, 1) > 0.1 ? 1.0 : 0.0;
  }
  DanNetwork net(InputNormalizer::identity(2), 11);
  Adam adam;
  Rng shuffle(3);
  const auto losses = train_epochs(net, data, adam, 100, 50, shuffle);
  CHECK(losses.back() < 0.5 * losses.front());
  int hits = 0;
  const Vector p = net.forward_batch(data.inputs);
  for (int i = 0; i < 500; ++i) hits += (p[i] > 0.5) == (data.labels[i] == 1.0);
  CHECK(hits >= 495);
}

TEST_CASE("training input errors") {
  DanNetwork net = default_net();
  Adam adam;
  Rng rng(1);
  CHECK_THROWS_AS(train_epochs(net, TrainBatch{Matrix(0, 10), Vector(0)}, adam, 1, 10, rng), TrainingError);
  TrainBatch bad{Matrix::Zero(2, 10), Vector::Constant(2, 0.5)};
  CHECK_THROWS_AS(train_epochs(net, bad, adam, 1, 10, rng), TrainingError);
  TrainBatch inf{Matrix::Constant(2, 10, INFINITY), Vector::Zero(2)};
  CHECK_THROWS_AS(train_epochs(net, inf, adam, 1, 10, rng), TrainingError);
  CHECK_THROWS_AS(make_optimizer("rmsprop"), ConfigError);
}

TEST_CASE("weights round-trip bit-exactly") {
  Rng rng(12);
  DanNetwork net = default_net(4);
  scramble(net, rng);
  const DanNetwork back = load_weights(save_weights(net), 10);
  CHECK(back.parameters() == net.parameters());
  for (int k = 0; k < 3; ++k) {
    CHECK(back.running_mean(k) == net.running_mean(k));
    CHECK(back.running_var(k) == net.running_var(k));
  }
  for (int i = 0; i < 100; ++i) {
    const Vector x = random_command(rng);
    CHECK(back.forward(x) == net.forward(x));
  }
}

TEST_CASE("malformed weight files") {
  const std::string text = save_weights(default_net());
  SUBCASE("truncated") {
    CHECK_THROWS_AS(load_weights(text.substr(0, text.size() / 2)), LoadError);
  }
  SUBCASE("muscle count mismatch names the field") {
    try {
      load_weights(text, 8);
      FAIL("expected a LoadError");
    } catch (const LoadError& e) {
      CHECK(std::string(e.what()).find("muscles") != std::string::npos);
    }
  }
  SUBCASE("unknown version") {
    std::string other = text;
    other.replace(other.find("dan-weights 1"), 13, "dan-weights 7");
    CHECK_THROWS_AS(load_weights(other), LoadError);
  }
}
