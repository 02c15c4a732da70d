#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <sstream>

#include "dan/config.hpp"
#include "dan/errors.hpp"
#include "dan/experiments.hpp"
#include "support.hpp"

using namespace dan;
using namespace dan::testing;

namespace {

const DanNetwork& quick_net() {
  static const DanNetwork net = [] {
    InitialTrainConfig cfg;
    cfg.n_samples = 4000;
    cfg.epochs = 30;
    return make_initial_network(cfg, default_arm_config());
  }();
  return net;
}

LabConfig short_config(double duration_s) {
  LabConfig cfg = default_lab_config();
  cfg.experiment.duration_s = duration_s;
  cfg.experiment.eval_duration_s = duration_s;
  cfg.experiment.checkpoints_s = {0.0, duration_s / 2.0, duration_s};
  return cfg;
}

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("motion stream is seeded and stays inside the limits") {
  const ArmConfig arm = default_arm_config();
  const MotionConfig motion;
  MotionStream a(arm, motion, 11), b(arm, motion, 11), c(arm, motion, 12);
  bool differs = false;
  for (int t = 0; t < 5000; ++t) {
    const MotionSample sa = a.next(), sb = b.next(), sc = c.next();
    CHECK(sa.command == sb.command);
    differs = differs || sa.command != sc.command;
    CHECK((sa.theta.array() >= arm.joint_lower.array()).all());
    CHECK((sa.theta.array() <= arm.joint_upper.array()).all());
    CHECK(sa.pretension >= 0.0);
    CHECK(sa.pretension <= motion.pretension_max_mm);
    CHECK((sa.command - (muscle_length_of(sa.theta, arm).array() - sa.pretension).matrix()).norm() < 1e-12);
  }
  CHECK(differs);
}

TEST_CASE("consecutive keyframes usually clear the accumulation distance") {
  const ArmConfig arm = default_arm_config();
  const OnlineConfig online;
  MotionStream stream(arm, MotionConfig{}, 100);
  const int seg = stream.ticks_per_segment();
  std::vector<Vector> keyframes;
  for (int t = 1; t <= 500 * seg; ++t) {
    const MotionSample s = stream.next();
    if (t % seg == 0) keyframes.push_back(s.command);
  }
  int far = 0;
  for (std::size_t k = 1; k < keyframes.size(); ++k) far += (keyframes[k] - keyframes[k - 1]).norm() > online.c_diff;
  CHECK(far >= 0.8 * static_cast<double>(keyframes.size() - 1));
}

TEST_CASE("agreement metric") {
  const LabConfig cfg = short_config(30.0);
  EvalScript safe;
  safe.commands = Matrix::Constant(50, 10, 200.0);
  safe.labels.assign(50, 0);
  CHECK(evaluate_agreement([](const Vector&) { return 0.0; }, safe, 0.1) == 1.0);
  CHECK(evaluate_agreement([](const Vector&) { return 0.9; }, safe, 0.1) == 0.0);

  const EvalScript script = generate_eval_script(cfg, 9100, 30.0);
  REQUIRE(script.labels.size() == static_cast<std::size_t>(script.commands.rows()));
  // A predictor that looks the label up by command is perfect.
  auto oracle = [&](const Vector& c) {
    for (Eigen::Index i = 0; i < script.commands.rows(); ++i)
      if (script.commands.row(i).transpose() == c) return static_cast<double>(script.labels[static_cast<std::size_t>(i)]);
    return 0.5;
  };
  CHECK(evaluate_agreement(oracle, script, 0.1) == 1.0);
  const double acc = evaluate_agreement(quick_net(), script, 0.1);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
  const EvalScript again = generate_eval_script(cfg, 9100, 30.0);
  CHECK(again.labels == script.labels);
  CHECK(again.commands == script.commands);
}

TEST_CASE("online log is complete and consistent with the gate") {
  const LabConfig cfg = short_config(60.0);
  const OnlineResult r = run_online_experiment(cfg, quick_net());
  const EpisodeLog& log = r.log;
  const auto n_ticks = static_cast<long>(std::lround(60.0 / kTickSeconds));
  REQUIRE(static_cast<long>(log.ticks.size()) == n_ticks);
  REQUIRE(r.checkpoints.size() == 3);
  CHECK(r.checkpoints[0].net.parameters() == quick_net().parameters());
  CHECK(r.checkpoints[2].net.parameters() == r.final_net.parameters());

  ReplayBuffer replay(cfg.online);
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    const TickRecord& rec = log.ticks[i];
    CHECK(rec.t == static_cast<long>(i));
    // The relaxation applied at tick t is the one computed at tick t - 1.
    const Vector applied = i == 0 ? Vector::Zero(10) : log.ticks[i - 1].delta_l;
    CHECK((rec.l_sent - (rec.l_ref + applied)).norm() < 1e-9);
    const AccumulateDecision d = replay.maybe_accumulate(rec.l_ref, rec.p_label, rec.p_predicted);
    CHECK(d.stored == rec.stored);
    CHECK(rec.updated == (rec.stored && replay.ready()));
  }
  CHECK(log.count_stored() > 0);
  CHECK(log.count_updated() > 0);
  CHECK(log.count_modified() == 0);

  std::ostringstream os;
  log.write_jsonl(os);
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  CHECK(header["version"] == EpisodeLog::kSchemaVersion);
  CHECK(header["ticks"] == n_ticks);
  long stored = 0, lines = 0;
  while (std::getline(in, line)) {
    const auto rec = nlohmann::json::parse(line);
    CHECK(rec["t"] == lines);
    for (const auto& e : rec["events"]) stored += e == "stored";
    ++lines;
  }
  CHECK(lines == n_ticks);
  CHECK(stored == log.count_stored());

  const OnlineResult again = run_online_experiment(cfg, quick_net());
  CHECK(again.final_net.parameters() == r.final_net.parameters());
}

TEST_CASE("paired modification runs share the goal stream") {
  const LabConfig cfg = short_config(30.0);
  const ModificationResult r = run_modification_experiment(cfg, quick_net());
  REQUIRE(r.without.ticks.size() == r.with.ticks.size());
  MotionStream goals(cfg.arm, cfg.experiment.motion, cfg.experiment.eval_seed);
  for (std::size_t i = 0; i < r.with.ticks.size(); ++i) {
    const Vector goal = goals.next().command;
    CHECK(r.without.ticks[i].l_ref == goal);
    CHECK_FALSE(r.without.ticks[i].modified);
    if (!r.with.ticks[i].modified) CHECK(r.with.ticks[i].l_ref == goal);
  }
  CHECK(r.freq_without == r.without.danger_fraction());
  CHECK(r.freq_with == r.with.danger_fraction());
}

TEST_CASE("step response relaxes and settles") {
  const LabConfig cfg = default_lab_config();
  SafetyParams safety = cfg.safety;
  safety.f_thre = cfg.step.f_thre;
  const StepResponse r =
      run_step_response(safety, cfg.step.elastic_k, cfg.step.contraction_mm, cfg.step.ramp_s, cfg.step.total_s);
  CHECK(r.peak_f >= 1.5 * safety.f_thre);
  for (std::size_t i = 0; i < r.time_s.size(); ++i)
    if (r.time_s[i] >= 2.0) CHECK(std::abs(r.f[i] - safety.f_thre) <= 0.1 * safety.f_thre);
  std::ostringstream os;
  write_step_response_tsv(r, os);
  CHECK(count_lines(os.str()) == static_cast<int>(r.time_s.size()) + 1);
}

TEST_CASE("plot tables have a header and one row per entry") {
  std::ostringstream os;
  write_accuracy_tsv({0.0, 100.0}, {0.5, 0.9}, os);
  CHECK(count_lines(os.str()) == 3);
  CHECK(os.str().rfind("checkpoint_s\t", 0) == 0);
  CHECK_THROWS_AS(write_accuracy_tsv({0.0}, {0.5, 0.9}, os), ShapeError);
}

TEST_CASE("experiment config validation") {
  LabConfig cfg = default_lab_config();
  cfg.experiment.checkpoints_s = {0.0, 400.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = default_lab_config();
  cfg.experiment.motion.segment_s = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
