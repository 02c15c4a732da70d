#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dan/plant.hpp"

namespace dan {

/// Per-muscle affine map from mm to roughly [-1, 1], fixed from the arm's
/// reachable length range and stored alongside the weights.
struct InputNormalizer {
  Vector center;  // mm
  Vector scale;   // mm per normalized unit

  static InputNormalizer from_arm(const ArmConfig& cfg);
  static InputNormalizer identity(int n);

  Vector normalize(const Vector& command) const;
  Vector denormalize(const Vector& x) const;
  Matrix normalize_rows(const Matrix& commands) const;
  int size() const { return static_cast<int>(center.size()); }
};

/// Rows are samples (mm), labels are 0 or 1.
struct TrainBatch {
  Matrix inputs;
  Vector labels;

  int size() const { return static_cast<int>(inputs.rows()); }
  void validate() const;
};

/// Batch statistics captured by a training forward pass.
struct BatchStats {
  std::array<Vector, 3> mean;
  std::array<Vector, 3> var;  // biased
  int rows = 0;
};

/// Danger classifier: BN -> dense -> BN -> ReLU -> dense -> BN -> ReLU -> dense -> sigmoid,
/// unit counts {m, hidden, hidden, 1}. All trainable parameters live in one
/// flat vector so optimizers and gradient checks can treat them uniformly.
class DanNetwork {
 public:
  enum class Mode { Train, Eval };

  static constexpr double kBnEpsilon = 1e-5;
  static constexpr double kBnMomentum = 0.9;

  DanNetwork(InputNormalizer normalizer, std::uint64_t seed, int hidden = 64);

  int n_inputs() const { return widths_[0]; }
  const std::array<int, 4>& widths() const { return widths_; }
  const InputNormalizer& normalizer() const { return normalizer_; }

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  /// Danger probability of one command (mm). Always uses running statistics.
  double forward(const Vector& command) const;

  /// Probabilities for each row (mm). Uses batch statistics only in Train
  /// mode with more than one row; nothing is mutated.
  Vector forward_batch(const Matrix& commands) const;

  /// Probability and its gradient with respect to the normalized input.
  double forward_normalized(const Vector& x, Vector* grad = nullptr) const;
  Vector forward_normalized_batch(const Matrix& x) const;

  /// Mean binary cross-entropy over normalized rows and, if requested, its
  /// gradient with respect to parameters(). Uses batch statistics when there
  /// is more than one row, running statistics otherwise.
  double loss_and_gradient(const Matrix& x, const Vector& labels, Vector* grad,
                           BatchStats* stats = nullptr) const;

  /// running = momentum * running + (1 - momentum) * batch, unbiased variance.
  void update_running_stats(const BatchStats& stats);

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  // Parameter views. Dense weights are (out x in).
  Eigen::Map<const Matrix> dense_weight(int layer) const;
  Eigen::Map<Matrix> dense_weight(int layer);
  Eigen::Map<const Vector> dense_bias(int layer) const;
  Eigen::Map<Vector> dense_bias(int layer);
  Eigen::Map<const Vector> bn_gamma(int layer) const;
  Eigen::Map<Vector> bn_gamma(int layer);
  Eigen::Map<const Vector> bn_beta(int layer) const;
  Eigen::Map<Vector> bn_beta(int layer);

  Vector& running_mean(int layer) { return running_mean_[static_cast<std::size_t>(layer)]; }
  const Vector& running_mean(int layer) const { return running_mean_[static_cast<std::size_t>(layer)]; }
  Vector& running_var(int layer) { return running_var_[static_cast<std::size_t>(layer)]; }
  const Vector& running_var(int layer) const { return running_var_[static_cast<std::size_t>(layer)]; }

 private:
  struct Offsets {
    Eigen::Index gamma, beta, weight, bias;
  };
  struct Cache;

  void forward_pass(const Matrix& x, bool batch_stats, Cache& cache) const;
  Matrix backward_pass(const Cache& cache, const Vector& dlogit, Vector* grad) const;

  std::array<int, 4> widths_;
  InputNormalizer normalizer_;
  Vector params_;
  std::array<Offsets, 3> offsets_{};
  std::array<Vector, 3> running_mean_;
  std::array<Vector, 3> running_var_;
  Mode mode_ = Mode::Eval;
};

// ---------------------------------------------------------------------------
// Input gradients

/// Loss on (probability, command): returns L and fills dL/dp and the explicit
/// dL/dcommand (mm).
using InputLoss = std::function<double(double p, const Vector& command, double& dl_dp, Vector& dl_dx)>;

/// Total dL/dcommand (1/mm) at `command` in eval mode. Throws DomainError if
/// anything along the way is non-finite.
Vector input_gradient(const DanNetwork& net, const Vector& command, const InputLoss& loss);

// ---------------------------------------------------------------------------
// Optimizers

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(Vector& params, const Vector& grad) = 0;
  virtual std::string name() const = 0;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(Vector& params, const Vector& grad) override;
  std::string name() const override { return "adam"; }

 private:
  double lr_, beta1_, beta2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

class MomentumSgd final : public Optimizer {
 public:
  explicit MomentumSgd(double lr = 0.01, double momentum = 0.9) : lr_(lr), momentum_(momentum) {}
  void step(Vector& params, const Vector& grad) override;
  std::string name() const override { return "momentum_sgd"; }

 private:
  double lr_, momentum_;
  Vector velocity_;
};

std::unique_ptr<Optimizer> make_optimizer(std::string_view name);

/// Minibatch training with per-epoch shuffling. Returns the mean batch loss of
/// each epoch. Throws TrainingError on empty data or a non-finite loss.
std::vector<double> train_epochs(DanNetwork& net, const TrainBatch& data, Optimizer& optimizer,
                                 int epochs, int batch_size, Rng& rng);

// ---------------------------------------------------------------------------
// Weight files (format documented in docs/weight_format.md)

std::string save_weights(const DanNetwork& net);

/// Throws LoadError naming the offending field. When `expected_inputs` is
/// given, a different muscle count in the header is rejected.
DanNetwork load_weights(std::string_view text, std::optional<int> expected_inputs = std::nullopt);

void save_weights_file(const DanNetwork& net, const std::string& path);
DanNetwork load_weights_file(const std::string& path, std::optional<int> expected_inputs = std::nullopt);

}  // namespace dan
