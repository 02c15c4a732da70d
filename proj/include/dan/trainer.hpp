#pragma once

#include <deque>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dan/network.hpp"
#include "dan/plant.hpp"

namespace dan {

struct InitialTrainConfig {
  double margin_deg = 10.0;  // sampling band beyond each joint limit
  double noise_sd = 3.0;     // mm, added to every command
  int n_samples = 12000;
  int batch = 100;
  int epochs = 100;
  std::uint64_t seed = 7;

  void validate() const;
};

/// 1 if any joint is strictly beyond its nominal limit.
int limit_label(const Vector& theta, const ArmConfig& arm);

/// Uniform joint samples over the limits widened by the margin, labelled by
/// limit_label, mapped to commands and perturbed with gaussian noise.
TrainBatch generate_initial_dataset(const InitialTrainConfig& cfg, const ArmConfig& arm);

/// Adam training over the dataset; returns the per-epoch mean loss.
std::vector<double> run_initial_training(DanNetwork& net, const TrainBatch& dataset, const InitialTrainConfig& cfg);

/// Fresh network (seeded from cfg) trained on a freshly generated dataset.
DanNetwork make_initial_network(const InitialTrainConfig& cfg, const ArmConfig& arm);

/// Fraction of rows where (p > threshold) matches the label.
double classification_accuracy(const DanNetwork& net, const TrainBatch& data, double threshold = 0.5);

struct OnlineConfig {
  double c_diff = 20.0;  // mm between consecutive stored commands
  int n_max = 100;
  int n_thre = 30;
  int batch = 10;
  int epochs = 3;
  double p_high = 0.9;  // danger samples predicted below this are stored
  double p_low = 0.1;   // safe samples predicted above this are stored
  std::uint64_t seed = 11;

  void validate() const;
};

enum class SkipReason { None, ConfidentAgreement, TooClose };
const char* to_string(SkipReason reason);

struct AccumulateDecision {
  bool stored = false;
  SkipReason reason = SkipReason::None;
};

/// The accumulation predicate on its own: prediction disagreement or
/// ambiguity, then the distance gate against the last stored command.
SkipReason accumulation_gate(const Vector& command, int label, double p_predicted,
                             const std::optional<Vector>& last_stored, const OnlineConfig& cfg);

struct ReplaySample {
  Vector command;
  int label = 0;
};

/// Bounded FIFO of (command, label) pairs; the oldest entry is dropped once
/// capacity is exceeded.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(OnlineConfig cfg);

  AccumulateDecision maybe_accumulate(const Vector& command, int label, double p_predicted);

  std::size_t size() const { return samples_.size(); }
  bool ready() const { return samples_.size() >= static_cast<std::size_t>(cfg_.n_thre); }
  const std::deque<ReplaySample>& samples() const { return samples_; }
  const std::optional<Vector>& last_stored() const { return last_stored_; }
  const OnlineConfig& config() const { return cfg_; }

  TrainBatch as_batch() const;

  /// One JSON object per line: {"command":[...],"label":0|1}.
  void dump(std::ostream& out) const;

 private:
  OnlineConfig cfg_;
  std::deque<ReplaySample> samples_;
  std::optional<Vector> last_stored_;
};

/// Momentum-SGD pass over the whole buffer (cfg batch and epochs).
double online_update(DanNetwork& net, const ReplayBuffer& buffer, Optimizer& optimizer, Rng& rng);

struct OnlineEvent {
  bool stored = false;
  bool updated = false;
  SkipReason reason = SkipReason::None;
  double loss = 0.0;
};

/// Buffer, optimizer and shuffle stream of one online-learning run. An update
/// runs synchronously right after every store once the buffer is ready.
class OnlineTrainer {
 public:
  explicit OnlineTrainer(OnlineConfig cfg);

  OnlineEvent observe(DanNetwork& net, const Vector& command, int label, double p_predicted);

  const ReplayBuffer& buffer() const { return buffer_; }
  long stores() const { return stores_; }
  long updates() const { return updates_; }

 private:
  ReplayBuffer buffer_;
  MomentumSgd optimizer_;
  Rng rng_;
  long stores_ = 0;
  long updates_ = 0;
};

}  // namespace dan
