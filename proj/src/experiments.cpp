#include "dan/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "dan/errors.hpp"

namespace dan {

namespace {

long to_ticks(double seconds) { return std::lround(seconds / kTickSeconds); }

std::vector<double> as_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Per-run noise stream so different motion seeds also see different sensor noise.
ArmConfig seeded_arm(const ArmConfig& arm, std::uint64_t motion_seed) {
  ArmConfig a = arm;
  a.seed = arm.seed * 0x100000001b3ULL + motion_seed;
  return a;
}

struct EpisodeOptions {
  DanNetwork* net = nullptr;            // consulted for p_predicted
  OnlineTrainer* trainer = nullptr;     // when set, net is updated online
  const ModifierConfig* modifier = nullptr;
  std::function<void(long)> after_tick;
};

EpisodeLog run_episode(const LabConfig& cfg, std::uint64_t motion_seed, double duration_s, EpisodeOptions opt,
                       const std::string& name) {
  const Arm arm(seeded_arm(cfg.arm, motion_seed));
  MotionStream motion(cfg.arm, cfg.experiment.motion, motion_seed);
  PlantState plant = arm.initial_state(MotionStream::start_pose(cfg.arm));
  SafetyState safety = SafetyState::zero(arm.n_muscles());
  Vector current = muscle_length_of(plant.theta, cfg.arm);

  EpisodeLog log;
  log.name = name;
  const long ticks = to_ticks(duration_s);
  log.ticks.reserve(static_cast<std::size_t>(ticks));
  for (long t = 0; t < ticks; ++t) {
    const MotionSample goal = motion.next();
    TickRecord rec;
    rec.t = t;
    rec.l_ref = goal.command;
    if (opt.modifier != nullptr && opt.net != nullptr) {
      const ModifyResult mod = modify(*opt.net, goal.command, current, *opt.modifier);
      rec.l_ref = mod.command;
      rec.modified = mod.triggered;
    }
    if (opt.net != nullptr) rec.p_predicted = opt.net->forward(rec.l_ref);

    rec.l_sent = apply_safety(rec.l_ref, safety);
    plant = arm.step(plant, rec.l_sent);
    safety = safety_step(safety, plant.f, cfg.safety);
    rec.delta_l = safety.delta_l;
    rec.f = plant.f;
    rec.p_label = safety.label;

    if (opt.trainer != nullptr && opt.net != nullptr) {
      const OnlineEvent ev = opt.trainer->observe(*opt.net, rec.l_ref, rec.p_label, rec.p_predicted);
      rec.stored = ev.stored;
      rec.updated = ev.updated;
    }
    current = rec.l_ref;
    log.ticks.push_back(std::move(rec));
    if (opt.after_tick) opt.after_tick(t + 1);
  }
  return log;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!(duration_s > 0.0) || !(eval_duration_s > 0.0)) throw ConfigError("experiment durations must be positive");
  for (double c : checkpoints_s)
    if (c < 0.0 || c > duration_s) throw ConfigError("experiment checkpoints must lie within [0, duration]");
  if (!(motion.segment_s > 0.0)) throw ConfigError("motion.segment_s must be positive");
  if (motion.pretension_max_mm < 0.0) throw ConfigError("motion.pretension_max_mm must be non-negative");
  if (!(danger_threshold > 0.0 && danger_threshold < 1.0)) throw ConfigError("danger_threshold must lie in (0, 1)");
}

void LabConfig::validate() const {
  arm.validate();
  safety.validate();
  initial.validate();
  online.validate();
  modifier.validate();
  experiment.validate();
  if (!(step.f_thre > 0.0 && step.elastic_k > 0.0 && step.ramp_s > 0.0 && step.total_s > 0.0))
    throw ConfigError("step_response parameters must be positive");
  if (ik.theta_init.size() != 0 && ik.theta_init.size() != arm.n_joints())
    throw ConfigError("ik.theta_init length differs from joint count");
}

// ---------------------------------------------------------------------------
// Motion

MotionStream::MotionStream(const ArmConfig& arm, const MotionConfig& cfg, std::uint64_t seed)
    : arm_(arm), cfg_(cfg), rng_(seed), ticks_per_segment_(static_cast<int>(std::max(1L, to_ticks(cfg.segment_s)))) {
  theta_to_ = start_pose(arm);
  pre_to_ = 0.0;
  draw_keyframe();
}

Vector MotionStream::start_pose(const ArmConfig& arm) { return 0.5 * (arm.joint_lower + arm.joint_upper); }

void MotionStream::draw_keyframe() {
  theta_from_ = theta_to_;
  pre_from_ = pre_to_;
  theta_to_.resize(arm_.n_joints());
  for (int j = 0; j < arm_.n_joints(); ++j) {
    std::uniform_real_distribution<double> u(arm_.joint_lower[j], arm_.joint_upper[j]);
    theta_to_[j] = u(rng_);
  }
  std::uniform_real_distribution<double> pre(0.0, cfg_.pretension_max_mm);
  pre_to_ = cfg_.pretension_max_mm > 0.0 ? pre(rng_) : 0.0;
}

MotionSample MotionStream::next() {
  const long phase = tick_ % ticks_per_segment_;
  if (phase == 0 && tick_ > 0) draw_keyframe();
  ++tick_;
  const double s = static_cast<double>(phase + 1) / ticks_per_segment_;
  MotionSample out;
  out.theta = (1.0 - s) * theta_from_ + s * theta_to_;
  out.pretension = (1.0 - s) * pre_from_ + s * pre_to_;
  out.command = muscle_length_of(out.theta, arm_).array() - out.pretension;
  return out;
}

// ---------------------------------------------------------------------------
// Episode logs

double EpisodeLog::danger_fraction() const {
  if (ticks.empty()) return 0.0;
  long n = 0;
  for (const auto& r : ticks) n += r.p_label;
  return static_cast<double>(n) / static_cast<double>(ticks.size());
}

int EpisodeLog::danger_episodes() const {
  int n = 0;
  int prev = 0;
  for (const auto& r : ticks) {
    n += (r.p_label == 1 && prev == 0);
    prev = r.p_label;
  }
  return n;
}

long EpisodeLog::count_stored() const {
  return std::count_if(ticks.begin(), ticks.end(), [](const TickRecord& r) { return r.stored; });
}
long EpisodeLog::count_updated() const {
  return std::count_if(ticks.begin(), ticks.end(), [](const TickRecord& r) { return r.updated; });
}
long EpisodeLog::count_modified() const {
  return std::count_if(ticks.begin(), ticks.end(), [](const TickRecord& r) { return r.modified; });
}

void EpisodeLog::write_jsonl(std::ostream& out) const {
  nlohmann::json header{{"schema", "dan-episode"}, {"version", kSchemaVersion}, {"name", name},
                        {"tick_s", kTickSeconds}, {"ticks", ticks.size()}};
  out << header.dump() << '\n';
  for (const auto& r : ticks) {
    nlohmann::json rec;
    rec["t"] = r.t;
    rec["l_ref"] = as_std(r.l_ref);
    rec["l_sent"] = as_std(r.l_sent);
    rec["delta_l"] = as_std(r.delta_l);
    rec["f"] = as_std(r.f);
    rec["p"] = r.p_label;
    if (r.p_predicted >= 0.0) rec["p_predicted"] = r.p_predicted;
    std::vector<std::string> events;
    if (r.stored) events.emplace_back("stored");
    if (r.updated) events.emplace_back("updated");
    if (r.modified) events.emplace_back("modified");
    rec["events"] = events;
    out << rec.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Runs

OnlineResult run_online_experiment(const LabConfig& cfg, const DanNetwork& initial) {
  cfg.validate();
  DanNetwork net = initial;
  OnlineTrainer trainer(cfg.online);
  std::vector<Checkpoint> checkpoints;
  std::vector<long> due;
  for (double c : cfg.experiment.checkpoints_s) due.push_back(to_ticks(c));

  auto snapshot = [&](long tick) {
    for (std::size_t i = 0; i < due.size(); ++i)
      if (due[i] == tick) checkpoints.push_back({cfg.experiment.checkpoints_s[i], net});
  };
  snapshot(0);

  EpisodeOptions opt;
  opt.net = &net;
  opt.trainer = &trainer;
  opt.after_tick = snapshot;
  EpisodeLog log = run_episode(cfg, cfg.experiment.motion_seed, cfg.experiment.duration_s, opt, "online");
  return {std::move(log), std::move(checkpoints), std::move(net)};
}

EvalScript generate_eval_script(const LabConfig& cfg, std::uint64_t seed, double duration_s) {
  const EpisodeLog log = run_episode(cfg, seed, duration_s, {}, "eval");
  EvalScript s;
  s.commands.resize(static_cast<Eigen::Index>(log.ticks.size()), cfg.arm.n_muscles());
  s.labels.reserve(log.ticks.size());
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    s.commands.row(static_cast<Eigen::Index>(i)) = log.ticks[i].l_ref.transpose();
    s.labels.push_back(log.ticks[i].p_label);
  }
  return s;
}

double evaluate_agreement(const Predictor& predict, const EvalScript& script, double threshold) {
  if (script.labels.empty()) return 1.0;
  long agree = 0;
  for (std::size_t i = 0; i < script.labels.size(); ++i) {
    const int predicted = predict(script.commands.row(static_cast<Eigen::Index>(i)).transpose()) > threshold;
    agree += predicted == script.labels[i];
  }
  return static_cast<double>(agree) / static_cast<double>(script.labels.size());
}

double evaluate_agreement(const DanNetwork& net, const EvalScript& script, double threshold) {
  if (script.labels.empty()) return 1.0;
  DanNetwork eval = net;
  eval.set_mode(DanNetwork::Mode::Eval);
  const Vector p = eval.forward_batch(script.commands);
  long agree = 0;
  for (std::size_t i = 0; i < script.labels.size(); ++i)
    agree += static_cast<int>(p[static_cast<Eigen::Index>(i)] > threshold) == script.labels[i];
  return static_cast<double>(agree) / static_cast<double>(script.labels.size());
}

ModificationResult run_modification_experiment(const LabConfig& cfg, const DanNetwork& net) {
  cfg.validate();
  DanNetwork frozen = net;
  ModificationResult r;
  EpisodeOptions off;
  off.net = &frozen;
  r.without = run_episode(cfg, cfg.experiment.eval_seed, cfg.experiment.eval_duration_s, off, "without_modification");
  EpisodeOptions on = off;
  on.modifier = &cfg.modifier;
  r.with = run_episode(cfg, cfg.experiment.eval_seed, cfg.experiment.eval_duration_s, on, "with_modification");
  r.freq_without = r.without.danger_fraction();
  r.freq_with = r.with.danger_fraction();
  return r;
}

int ExecutionTrace::danger_ticks() const { return static_cast<int>(std::count(labels.begin(), labels.end(), 1)); }

ExecutionTrace execute_command(const LabConfig& cfg, const Vector& theta_start, const Vector& command, double f_thre,
                               double ramp_s, double total_s, bool with_noise) {
  ArmConfig quiet = cfg.arm;
  if (!with_noise) quiet.tension_noise_sd = 0.0;
  const Arm arm(quiet);
  SafetyParams safety = cfg.safety;
  safety.f_thre = f_thre;
  PlantState plant = arm.initial_state(theta_start);
  SafetyState state = SafetyState::zero(arm.n_muscles());
  const Vector from = muscle_length_of(theta_start, quiet);
  const long ramp = std::max(1L, to_ticks(ramp_s));
  const long total = to_ticks(total_s);

  ExecutionTrace trace;
  for (long t = 0; t < total; ++t) {
    const double s = std::min(1.0, static_cast<double>(t + 1) / ramp);
    const Vector ref = (1.0 - s) * from + s * command;
    plant = arm.step(plant, apply_safety(ref, state));
    state = safety_step(state, plant.f, safety);
    trace.f_max.push_back(plant.f.maxCoeff());
    trace.labels.push_back(state.label);
  }
  return trace;
}

IkExperimentResult run_ik_experiment(const LabConfig& cfg, const DanNetwork& net) {
  cfg.validate();
  IkProblem problem;
  problem.x_ref = cfg.ik.target;
  problem.theta_init = cfg.ik.theta_init.size() == 0 ? MotionStream::start_pose(cfg.arm) : cfg.ik.theta_init;
  problem.d_avoid = cfg.ik.d_avoid;
  problem.p_trigger = cfg.modifier.p_trigger;
  problem.max_outer = cfg.ik.max_outer;

  IkExperimentResult r;
  r.ik = solve_prioritized(problem, net, cfg.arm, cfg.ik_solver);
  for (const IkIteration& it : r.ik.iterations)
    r.executions.push_back(
        execute_command(cfg, problem.theta_init, it.command, cfg.ik.f_thre, cfg.ik.ramp_s, cfg.ik.execute_s));
  return r;
}

StepResponse run_step_response(const SafetyParams& safety, double elastic_k, double contraction_mm, double ramp_s,
                               double total_s) {
  // Fixed-end muscle: its geometric length never changes, so the stretch is
  // exactly the commanded contraction minus the relaxation.
  StepResponse r;
  SafetyState state = SafetyState::zero(1);
  const long ramp = std::max(1L, to_ticks(ramp_s));
  const long total = to_ticks(total_s);
  for (long t = 0; t < total; ++t) {
    const double shortening = contraction_mm * std::min(1.0, static_cast<double>(t + 1) / ramp);
    const double stretch = std::max(0.0, shortening - state.delta_l[0]);
    const Vector f = Vector::Constant(1, elastic_k * stretch * stretch);
    state = safety_step(state, f, safety);
    r.time_s.push_back((t + 1) * kTickSeconds);
    r.command_mm.push_back(-shortening);
    r.f.push_back(f[0]);
    r.delta_l.push_back(state.delta_l[0]);
    r.peak_f = std::max(r.peak_f, f[0]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Plot data

void write_step_response_tsv(const StepResponse& r, std::ostream& out) {
  out << "time_s\tcommand_mm\tf_N\tdelta_l_mm\n";
  for (std::size_t i = 0; i < r.time_s.size(); ++i)
    out << r.time_s[i] << '\t' << r.command_mm[i] << '\t' << r.f[i] << '\t' << r.delta_l[i] << '\n';
}

void write_online_tsv(const EpisodeLog& log, std::ostream& out, double window_s) {
  out << "time_s\tp\tp_predicted\tstored\tupdated\taccumulation_per_s\n";
  const long window = std::max(1L, to_ticks(window_s));
  long in_window = 0;
  for (std::size_t i = 0; i < log.ticks.size(); ++i) {
    const TickRecord& r = log.ticks[i];
    in_window += r.stored;
    if (i >= static_cast<std::size_t>(window)) in_window -= log.ticks[i - static_cast<std::size_t>(window)].stored;
    const double span = std::min<double>(static_cast<double>(i + 1), static_cast<double>(window)) * kTickSeconds;
    out << (r.t + 1) * kTickSeconds << '\t' << r.p_label << '\t' << r.p_predicted << '\t' << r.stored << '\t'
        << r.updated << '\t' << in_window / span << '\n';
  }
}

void write_accuracy_tsv(const std::vector<double>& checkpoints_s, const std::vector<double>& accuracy,
                        std::ostream& out) {
  if (checkpoints_s.size() != accuracy.size()) throw ShapeError("one accuracy value per checkpoint expected");
  out << "checkpoint_s\taccuracy\n";
  for (std::size_t i = 0; i < checkpoints_s.size(); ++i)
    out << checkpoints_s[i] << '\t' << accuracy[i] << '\n';
}

void write_modification_tsv(const ModificationResult& r, int muscle, std::ostream& out) {
  out << "time_s\tl_ref_mm\tl_ref_safe_mm\tp_without\tp_with\tp_predicted_goal\n";
  const std::size_t n = std::min(r.without.ticks.size(), r.with.ticks.size());
  for (std::size_t i = 0; i < n; ++i) {
    const TickRecord& a = r.without.ticks[i];
    const TickRecord& b = r.with.ticks[i];
    out << (a.t + 1) * kTickSeconds << '\t' << a.l_ref[muscle] << '\t' << b.l_ref[muscle] << '\t' << a.p_label
        << '\t' << b.p_label << '\t' << a.p_predicted << '\n';
  }
}

void write_ik_tsv(const IkExperimentResult& r, std::ostream& out) {
  out << "iteration\ttime_s\tp_predicted\tp\tf_max_N\n";
  for (std::size_t k = 0; k < r.executions.size(); ++k) {
    const ExecutionTrace& e = r.executions[k];
    for (std::size_t i = 0; i < e.labels.size(); ++i)
      out << k << '\t' << (i + 1) * kTickSeconds << '\t' << r.ik.iterations[k].p << '\t' << e.labels[i] << '\t'
          << e.f_max[i] << '\n';
  }
}

}  // namespace dan
