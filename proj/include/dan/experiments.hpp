#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "dan/ik.hpp"
#include "dan/modifier.hpp"
#include "dan/network.hpp"
#include "dan/plant.hpp"
#include "dan/safety.hpp"
#include "dan/trainer.hpp"

namespace dan {

struct MotionConfig {
  double segment_s = 2.0;            // hold-and-interpolate time per random pose
  double pretension_max_mm = 15.0;   // uniform shortening applied to every muscle
};

struct ExperimentConfig {
  double duration_s = 300.0;
  std::uint64_t motion_seed = 100;
  std::uint64_t eval_seed = 9100;  // evaluation script differs from the training motion
  double eval_duration_s = 300.0;
  std::vector<double> checkpoints_s{0.0, 100.0, 200.0, 300.0};
  double danger_threshold = 0.1;  // p_predicted above this counts as predicted danger
  MotionConfig motion;

  void validate() const;
};

struct IkExperimentConfig {
  Vector3 target = Vector3::Zero();  // mm
  Vector theta_init;
  double f_thre = 150.0;
  double ramp_s = 2.0;
  double execute_s = 5.0;
  double d_avoid = 0.2;
  int max_outer = 10;
};

/// Standalone fixed-end muscle used for the relax-and-settle demonstration.
struct StepResponseConfig {
  double f_thre = 100.0;
  double elastic_k = 0.15;  // N/mm^2
  double contraction_mm = 40.0;
  double ramp_s = 0.5;
  double total_s = 4.0;
};

/// Everything a run needs, as loaded from the JSON config file.
struct LabConfig {
  ArmConfig arm;
  SafetyParams safety;
  InitialTrainConfig initial;
  OnlineConfig online;
  ModifierConfig modifier;
  IkSolverConfig ik_solver;
  IkExperimentConfig ik;
  ExperimentConfig experiment;
  StepResponseConfig step;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Motion

struct MotionSample {
  Vector theta;        // interpolated target pose, always inside the nominal limits
  double pretension = 0.0;  // mm
  Vector command;      // muscle_length_of(theta) - pretension
};

/// Random poses inside the nominal joint limits with random pretension, each
/// reached by linear interpolation over one segment.
class MotionStream {
 public:
  MotionStream(const ArmConfig& arm, const MotionConfig& cfg, std::uint64_t seed);

  MotionSample next();
  static Vector start_pose(const ArmConfig& arm);
  int ticks_per_segment() const { return ticks_per_segment_; }

 private:
  void draw_keyframe();

  ArmConfig arm_;
  MotionConfig cfg_;
  Rng rng_;
  int ticks_per_segment_;
  long tick_ = 0;
  Vector theta_from_, theta_to_;
  double pre_from_ = 0.0, pre_to_ = 0.0;
};

// ---------------------------------------------------------------------------
// Episode logs

struct TickRecord {
  long t = 0;
  Vector l_ref;       // command before safety relaxation
  Vector l_sent;      // l_ref plus the previous tick's delta_l
  Vector delta_l;     // relaxation after this tick's tension reading
  Vector f;
  int p_label = 0;
  double p_predicted = -1.0;  // -1 when no network was consulted
  bool stored = false;
  bool updated = false;
  bool modified = false;
};

struct EpisodeLog {
  static constexpr int kSchemaVersion = 1;
  std::string name;
  std::vector<TickRecord> ticks;

  double danger_fraction() const;
  int danger_episodes() const;  // rising edges of the label
  long count_stored() const;
  long count_updated() const;
  long count_modified() const;

  /// Header line followed by one JSON object per tick.
  void write_jsonl(std::ostream& out) const;
};

// ---------------------------------------------------------------------------
// Runs

struct Checkpoint {
  double time_s = 0.0;
  DanNetwork net;
};

struct OnlineResult {
  EpisodeLog log;
  std::vector<Checkpoint> checkpoints;
  DanNetwork final_net;
};

/// Plant + safety + accumulation + online updates for cfg.experiment.duration_s.
OnlineResult run_online_experiment(const LabConfig& cfg, const DanNetwork& initial);

struct EvalScript {
  Matrix commands;          // ticks x m
  std::vector<int> labels;  // safety-mechanism label at each tick
};

/// Labels of a prediction-only replay; independent of any network.
EvalScript generate_eval_script(const LabConfig& cfg, std::uint64_t seed, double duration_s);

using Predictor = std::function<double(const Vector&)>;

/// Fraction of ticks where (prediction > threshold) equals the label.
double evaluate_agreement(const Predictor& predict, const EvalScript& script, double threshold);
double evaluate_agreement(const DanNetwork& net, const EvalScript& script, double threshold);

struct ModificationResult {
  EpisodeLog without;
  EpisodeLog with;
  double freq_without = 0.0;
  double freq_with = 0.0;
};

/// The same motion script twice, sending the raw goal or the modified command.
ModificationResult run_modification_experiment(const LabConfig& cfg, const DanNetwork& net);

struct ExecutionTrace {
  std::vector<double> f_max;
  std::vector<int> labels;
  int danger_ticks() const;
};

/// Ramps from the plant at rest in `theta_start` to `command`, then holds,
/// with safety active at the given threshold. Tension noise is off unless
/// `with_noise` is set.
ExecutionTrace execute_command(const LabConfig& cfg, const Vector& theta_start, const Vector& command,
                               double f_thre, double ramp_s, double total_s, bool with_noise = false);

struct IkExperimentResult {
  IkResult ik;
  std::vector<ExecutionTrace> executions;  // one per outer iteration
};

IkExperimentResult run_ik_experiment(const LabConfig& cfg, const DanNetwork& net);

struct StepResponse {
  std::vector<double> time_s, command_mm, f, delta_l;
  double peak_f = 0.0;
};

/// A single fixed-end muscle contracted by `contraction_mm` over `ramp_s`
/// with the safety mechanism active.
StepResponse run_step_response(const SafetyParams& safety, double elastic_k, double contraction_mm, double ramp_s,
                               double total_s);

// ---------------------------------------------------------------------------
// Plot data (schemas in docs/plot_data.md)

void write_step_response_tsv(const StepResponse& r, std::ostream& out);
void write_online_tsv(const EpisodeLog& log, std::ostream& out, double window_s = 10.0);
void write_accuracy_tsv(const std::vector<double>& checkpoints_s, const std::vector<double>& accuracy,
                        std::ostream& out);
void write_modification_tsv(const ModificationResult& r, int muscle, std::ostream& out);
void write_ik_tsv(const IkExperimentResult& r, std::ostream& out);

}  // namespace dan
