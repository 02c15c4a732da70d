#include "dan/trainer.hpp"

#include <ostream>

#include <json.hpp>

#include "dan/errors.hpp"

namespace dan {

void InitialTrainConfig::validate() const {
  if (!(margin_deg > 0.0)) throw ConfigError("initial_training.margin_deg must be positive");
  if (noise_sd < 0.0) throw ConfigError("initial_training.noise_sd must be non-negative");
  if (batch <= 0 || epochs <= 0) throw ConfigError("initial_training batch and epochs must be positive");
  if (n_samples < batch) throw ConfigError("initial_training.n_samples must be at least the batch size");
}

int limit_label(const Vector& theta, const ArmConfig& arm) {
  const bool beyond = ((theta.array() < arm.joint_lower.array()) || (theta.array() > arm.joint_upper.array())).any();
  return beyond ? 1 : 0;
}

TrainBatch generate_initial_dataset(const InitialTrainConfig& cfg, const ArmConfig& arm) {
  cfg.validate();
  const int n = arm.n_joints();
  const int m = arm.n_muscles();
  const double margin = deg2rad(cfg.margin_deg);
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.noise_sd);

  TrainBatch data{Matrix(cfg.n_samples, m), Vector(cfg.n_samples)};
  Vector theta(n);
  for (int s = 0; s < cfg.n_samples; ++s) {
    for (int j = 0; j < n; ++j) {
      std::uniform_real_distribution<double> u(arm.joint_lower[j] - margin, arm.joint_upper[j] + margin);
      theta[j] = u(rng);
    }
    Vector command = muscle_length_of(theta, arm);
    if (cfg.noise_sd > 0.0)
      for (int i = 0; i < m; ++i) command[i] += noise(rng);
    data.inputs.row(s) = command.transpose();
    data.labels[s] = limit_label(theta, arm);
  }
  return data;
}

std::vector<double> run_initial_training(DanNetwork& net, const TrainBatch& dataset, const InitialTrainConfig& cfg) {
  cfg.validate();
  Adam adam;
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  return train_epochs(net, dataset, adam, cfg.epochs, cfg.batch, rng);
}

DanNetwork make_initial_network(const InitialTrainConfig& cfg, const ArmConfig& arm) {
  DanNetwork net(InputNormalizer::from_arm(arm), cfg.seed);
  run_initial_training(net, generate_initial_dataset(cfg, arm), cfg);
  return net;
}

double classification_accuracy(const DanNetwork& net, const TrainBatch& data, double threshold) {
  data.validate();
  DanNetwork eval = net;
  eval.set_mode(DanNetwork::Mode::Eval);
  const Vector p = eval.forward_batch(data.inputs);
  long hits = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) hits += (p[i] > threshold) == (data.labels[i] > 0.5);
  return static_cast<double>(hits) / static_cast<double>(p.size());
}

void OnlineConfig::validate() const {
  if (!(c_diff >= 0.0)) throw ConfigError("online.c_diff must be non-negative");
  if (n_max <= 0 || n_thre <= 0 || n_thre > n_max) throw ConfigError("online requires 0 < n_thre <= n_max");
  if (batch <= 0 || epochs <= 0) throw ConfigError("online batch and epochs must be positive");
  if (!(0.0 < p_low && p_low < p_high && p_high < 1.0)) throw ConfigError("online requires 0 < p_low < p_high < 1");
}

const char* to_string(SkipReason reason) {
  switch (reason) {
    case SkipReason::None: return "none";
    case SkipReason::ConfidentAgreement: return "confident_agreement";
    case SkipReason::TooClose: return "too_close";
  }
  return "unknown";
}

SkipReason accumulation_gate(const Vector& command, int label, double p_predicted,
                             const std::optional<Vector>& last_stored, const OnlineConfig& cfg) {
  const bool disagree = (label == 1 && p_predicted < cfg.p_high) || (label == 0 && p_predicted > cfg.p_low);
  if (!disagree) return SkipReason::ConfidentAgreement;
  if (last_stored && (command - *last_stored).norm() <= cfg.c_diff) return SkipReason::TooClose;
  return SkipReason::None;
}

ReplayBuffer::ReplayBuffer(OnlineConfig cfg) : cfg_(cfg) { cfg_.validate(); }

AccumulateDecision ReplayBuffer::maybe_accumulate(const Vector& command, int label, double p_predicted) {
  if (label != 0 && label != 1) throw DomainError("danger label must be 0 or 1");
  const SkipReason reason = accumulation_gate(command, label, p_predicted, last_stored_, cfg_);
  if (reason != SkipReason::None) return {false, reason};
  samples_.push_back({command, label});
  while (samples_.size() > static_cast<std::size_t>(cfg_.n_max)) samples_.pop_front();
  last_stored_ = command;
  return {true, SkipReason::None};
}

TrainBatch ReplayBuffer::as_batch() const {
  if (samples_.empty()) return {};
  const auto m = samples_.front().command.size();
  TrainBatch b{Matrix(static_cast<Eigen::Index>(samples_.size()), m), Vector(static_cast<Eigen::Index>(samples_.size()))};
  Eigen::Index r = 0;
  for (const ReplaySample& s : samples_) {
    b.inputs.row(r) = s.command.transpose();
    b.labels[r] = s.label;
    ++r;
  }
  return b;
}

void ReplayBuffer::dump(std::ostream& out) const {
  for (const ReplaySample& s : samples_) {
    nlohmann::json rec;
    rec["command"] = std::vector<double>(s.command.data(), s.command.data() + s.command.size());
    rec["label"] = s.label;
    out << rec.dump() << '\n';
  }
}

double online_update(DanNetwork& net, const ReplayBuffer& buffer, Optimizer& optimizer, Rng& rng) {
  const auto history = train_epochs(net, buffer.as_batch(), optimizer, buffer.config().epochs,
                                    buffer.config().batch, rng);
  return history.back();
}

OnlineTrainer::OnlineTrainer(OnlineConfig cfg) : buffer_(cfg), rng_(cfg.seed) {}

OnlineEvent OnlineTrainer::observe(DanNetwork& net, const Vector& command, int label, double p_predicted) {
  OnlineEvent ev;
  const AccumulateDecision d = buffer_.maybe_accumulate(command, label, p_predicted);
  ev.stored = d.stored;
  ev.reason = d.reason;
  if (!d.stored) return ev;
  ++stores_;
  if (buffer_.ready()) {
    ev.loss = online_update(net, buffer_, optimizer_, rng_);
    ev.updated = true;
    ++updates_;
  }
  return ev;
}

}  // namespace dan
