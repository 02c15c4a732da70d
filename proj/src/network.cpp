#include "dan/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "dan/errors.hpp"

namespace dan {

namespace {

constexpr int kFormatVersion = 1;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Keeps the reported probability strictly inside (0, 1) even when the logit saturates.
double open_unit(double p) {
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

// ---------------------------------------------------------------------------
// InputNormalizer / TrainBatch

InputNormalizer InputNormalizer::from_arm(const ArmConfig& cfg) {
  const auto [lmin, lmax] = reachable_length_range(cfg);
  InputNormalizer n;
  n.center = 0.5 * (lmin + lmax);
  n.scale = (0.5 * (lmax - lmin)).cwiseMax(1.0);
  return n;
}

InputNormalizer InputNormalizer::identity(int n) { return {Vector::Zero(n), Vector::Ones(n)}; }

Vector InputNormalizer::normalize(const Vector& command) const {
  if (command.size() != center.size()) throw ShapeError("command length differs from network input");
  return (command - center).cwiseQuotient(scale);
}

Vector InputNormalizer::denormalize(const Vector& x) const {
  if (x.size() != center.size()) throw ShapeError("input length differs from network input");
  return x.cwiseProduct(scale) + center;
}

Matrix InputNormalizer::normalize_rows(const Matrix& commands) const {
  if (commands.cols() != center.size()) throw ShapeError("command width differs from network input");
  return (commands.rowwise() - center.transpose()).array().rowwise() / scale.transpose().array();
}

void TrainBatch::validate() const {
  if (inputs.rows() == 0) throw TrainingError("training data is empty");
  if (labels.size() != inputs.rows()) throw TrainingError("label count differs from input rows");
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels[i] != 0.0 && labels[i] != 1.0) throw TrainingError("labels must be 0 or 1");
  if (!inputs.allFinite()) throw TrainingError("training inputs contain non-finite values");
}

// ---------------------------------------------------------------------------
// DanNetwork

struct DanNetwork::Cache {
  bool batch_stats = false;
  std::array<Matrix, 3> xhat;    // normalized BN input
  std::array<Matrix, 3> bn_out;  // gamma * xhat + beta
  std::array<Matrix, 3> act;     // input to dense layer k
  std::array<Vector, 3> mean;
  std::array<Vector, 3> var;
  std::array<Vector, 3> inv_std;
  Vector logits;
};

DanNetwork::DanNetwork(InputNormalizer normalizer, std::uint64_t seed, int hidden)
    : widths_{normalizer.size(), hidden, hidden, 1}, normalizer_(std::move(normalizer)) {
  if (widths_[0] <= 0 || hidden <= 0) throw ConfigError("network widths must be positive");
  Eigen::Index total = 0;
  for (int k = 0; k < 3; ++k) {
    const int in = widths_[static_cast<std::size_t>(k)];
    const int out = widths_[static_cast<std::size_t>(k) + 1];
    auto& o = offsets_[static_cast<std::size_t>(k)];
    o.gamma = total;
    total += in;
    o.beta = total;
    total += in;
    o.weight = total;
    total += static_cast<Eigen::Index>(in) * out;
    o.bias = total;
    total += out;
  }
  params_ = Vector::Zero(total);

  Rng rng(seed);
  for (int k = 0; k < 3; ++k) {
    const int in = widths_[static_cast<std::size_t>(k)];
    bn_gamma(k).setOnes();
    const double bound = std::sqrt(6.0 / in);
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = dense_weight(k);
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
    running_mean_[static_cast<std::size_t>(k)] = Vector::Zero(in);
    running_var_[static_cast<std::size_t>(k)] = Vector::Ones(in);
  }
}

Eigen::Map<const Matrix> DanNetwork::dense_weight(int layer) const {
  const auto k = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[k].weight, widths_[k + 1], widths_[k]};
}
Eigen::Map<Matrix> DanNetwork::dense_weight(int layer) {
  const auto k = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[k].weight, widths_[k + 1], widths_[k]};
}
Eigen::Map<const Vector> DanNetwork::dense_bias(int layer) const {
  const auto k = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[k].bias, widths_[k + 1]};
}
Eigen::Map<Vector> DanNetwork::dense_bias(int layer) {
  const auto k = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[k].bias, widths_[k + 1]};
}
Eigen::Map<const Vector> DanNetwork::bn_gamma(int layer) const {
  const auto k = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[k].gamma, widths_[k]};
}
Eigen::Map<Vector> DanNetwork::bn_gamma(int layer) {
  const auto k = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[k].gamma, widths_[k]};
}
Eigen::Map<const Vector> DanNetwork::bn_beta(int layer) const {
  const auto k = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[k].beta, widths_[k]};
}
Eigen::Map<Vector> DanNetwork::bn_beta(int layer) {
  const auto k = static_cast<std::size_t>(layer);
  return {params_.data() + offsets_[k].beta, widths_[k]};
}

void DanNetwork::forward_pass(const Matrix& x, bool batch_stats, Cache& c) const {
  if (x.cols() != n_inputs()) throw ShapeError("input width differs from network input");
  c.batch_stats = batch_stats;
  const double n = static_cast<double>(x.rows());
  Matrix h = x;
  for (int k = 0; k < 3; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    if (batch_stats) {
      c.mean[ks] = h.colwise().mean().transpose();
      c.var[ks] = (h.rowwise() - c.mean[ks].transpose()).colwise().squaredNorm().transpose() / n;
    } else {
      c.mean[ks] = running_mean_[ks];
      c.var[ks] = running_var_[ks];
    }
    c.inv_std[ks] = (c.var[ks].array() + kBnEpsilon).rsqrt();
    c.xhat[ks] = (h.rowwise() - c.mean[ks].transpose()).array().rowwise() * c.inv_std[ks].transpose().array();
    c.bn_out[ks] = (c.xhat[ks].array().rowwise() * bn_gamma(k).transpose().array()).rowwise() +
                   bn_beta(k).transpose().array();
    c.act[ks] = k == 0 ? c.bn_out[ks] : Matrix(c.bn_out[ks].cwiseMax(0.0));
    h = (c.act[ks] * dense_weight(k).transpose()).rowwise() + dense_bias(k).transpose();
  }
  c.logits = h.col(0);
}

Matrix DanNetwork::backward_pass(const Cache& c, const Vector& dlogit, Vector* grad) const {
  if (grad != nullptr) grad->setZero(params_.size());
  Matrix dz = dlogit;  // (n x 1)
  const double n = static_cast<double>(dlogit.size());
  for (int k = 2; k >= 0; --k) {
    const auto ks = static_cast<std::size_t>(k);
    const auto& o = offsets_[ks];
    const int in = widths_[ks];
    const int out = widths_[ks + 1];
    if (grad != nullptr) {
      Eigen::Map<Matrix>(grad->data() + o.weight, out, in) = dz.transpose() * c.act[ks];
      Eigen::Map<Vector>(grad->data() + o.bias, out) = dz.colwise().sum().transpose();
    }
    Matrix dy = dz * dense_weight(k);
    if (k > 0) dy = dy.cwiseProduct((c.bn_out[ks].array() > 0.0).cast<double>().matrix());
    const Vector sum_dy = dy.colwise().sum().transpose();
    const Vector sum_dy_xhat = dy.cwiseProduct(c.xhat[ks]).colwise().sum().transpose();
    if (grad != nullptr) {
      Eigen::Map<Vector>(grad->data() + o.gamma, in) = sum_dy_xhat;
      Eigen::Map<Vector>(grad->data() + o.beta, in) = sum_dy;
    }
    const Vector scale = bn_gamma(k).cwiseProduct(c.inv_std[ks]);
    if (c.batch_stats) {
      Matrix centered = (n * dy).rowwise() - sum_dy.transpose();
      centered -= (c.xhat[ks].array().rowwise() * sum_dy_xhat.transpose().array()).matrix();
      dz = (centered.array().rowwise() * (scale.transpose().array() / n)).matrix();
    } else {
      dz = (dy.array().rowwise() * scale.transpose().array()).matrix();
    }
  }
  return dz;
}

double DanNetwork::forward(const Vector& command) const {
  return forward_normalized(normalizer_.normalize(command));
}

Vector DanNetwork::forward_batch(const Matrix& commands) const {
  Cache c;
  forward_pass(normalizer_.normalize_rows(commands), mode_ == Mode::Train && commands.rows() > 1, c);
  return c.logits.unaryExpr([](double z) { return open_unit(sigmoid(z)); });
}

double DanNetwork::forward_normalized(const Vector& x, Vector* grad) const {
  if (x.size() != n_inputs()) throw ShapeError("input length differs from network input");
  Cache c;
  forward_pass(x.transpose(), false, c);
  const double s = sigmoid(c.logits[0]);
  if (grad != nullptr) {
    const Vector dlogit = Vector::Constant(1, s * (1.0 - s));
    *grad = backward_pass(c, dlogit, nullptr).row(0).transpose();
  }
  return open_unit(s);
}

Vector DanNetwork::forward_normalized_batch(const Matrix& x) const {
  Cache c;
  forward_pass(x, false, c);
  return c.logits.unaryExpr([](double z) { return open_unit(sigmoid(z)); });
}

double DanNetwork::loss_and_gradient(const Matrix& x, const Vector& labels, Vector* grad,
                                     BatchStats* stats) const {
  if (labels.size() != x.rows()) throw ShapeError("label count differs from batch rows");
  Cache c;
  const bool batch_stats = x.rows() > 1;
  forward_pass(x, batch_stats, c);
  const double n = static_cast<double>(x.rows());
  double loss = 0.0;
  Vector dlogit(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double z = c.logits[i];
    loss += softplus(z) - labels[i] * z;
    dlogit[i] = (sigmoid(z) - labels[i]) / n;
  }
  loss /= n;
  if (grad != nullptr) backward_pass(c, dlogit, grad);
  if (stats != nullptr) {
    stats->rows = batch_stats ? static_cast<int>(x.rows()) : 0;
    if (batch_stats) {
      stats->mean = c.mean;
      stats->var = c.var;
    }
  }
  return loss;
}

void DanNetwork::update_running_stats(const BatchStats& stats) {
  if (stats.rows < 2) return;
  const double n = stats.rows;
  for (std::size_t k = 0; k < 3; ++k) {
    running_mean_[k] = kBnMomentum * running_mean_[k] + (1.0 - kBnMomentum) * stats.mean[k];
    running_var_[k] = kBnMomentum * running_var_[k] + (1.0 - kBnMomentum) * stats.var[k] * (n / (n - 1.0));
  }
}

// ---------------------------------------------------------------------------
// Input gradients

Vector input_gradient(const DanNetwork& net, const Vector& command, const InputLoss& loss) {
  const Vector x = net.normalizer().normalize(command);
  Vector dp_dxn;
  const double p = net.forward_normalized(x, &dp_dxn);
  double dl_dp = 0.0;
  Vector dl_dx = Vector::Zero(command.size());
  const double value = loss(p, command, dl_dp, dl_dx);
  if (!std::isfinite(value) || !std::isfinite(dl_dp) || !dp_dxn.allFinite() || !dl_dx.allFinite())
    throw DomainError("non-finite value while computing the input gradient");
  return dl_dp * dp_dxn.cwiseQuotient(net.normalizer().scale) + dl_dx;
}

// ---------------------------------------------------------------------------
// Optimizers

void Adam::step(Vector& params, const Vector& grad) {
  if (m_.size() != params.size()) {
    m_ = Vector::Zero(params.size());
    v_ = Vector::Zero(params.size());
    t_ = 0;
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void MomentumSgd::step(Vector& params, const Vector& grad) {
  if (velocity_.size() != params.size()) velocity_ = Vector::Zero(params.size());
  velocity_ = momentum_ * velocity_ - lr_ * grad;
  params += velocity_;
}

std::unique_ptr<Optimizer> make_optimizer(std::string_view name) {
  if (name == "adam") return std::make_unique<Adam>();
  if (name == "momentum_sgd") return std::make_unique<MomentumSgd>();
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::vector<double> train_epochs(DanNetwork& net, const TrainBatch& data, Optimizer& optimizer,
                                 int epochs, int batch_size, Rng& rng) {
  data.validate();
  if (epochs <= 0 || batch_size <= 0) throw TrainingError("epochs and batch size must be positive");
  const Matrix x = net.normalizer().normalize_rows(data.inputs);
  const int n = data.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(epochs));
  Vector grad;
  BatchStats stats;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += batch_size) {
      const int rows = std::min(batch_size, n - start);
      Matrix xb(rows, x.cols());
      Vector yb(rows);
      for (int r = 0; r < rows; ++r) {
        const int idx = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = x.row(idx);
        yb[r] = data.labels[idx];
      }
      const double loss = net.loss_and_gradient(xb, yb, &grad, &stats);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch starting at " << start << " (loss=" << loss
           << ", optimizer=" << optimizer.name() << ")";
        throw TrainingError(os.str());
      }
      optimizer.step(net.parameters(), grad);
      net.update_running_stats(stats);
      sum += loss;
      ++batches;
    }
    history.push_back(sum / batches);
  }
  return history;
}

// ---------------------------------------------------------------------------
// Weight files

namespace {

void put_values(std::ostringstream& os, const char* name, const double* data, Eigen::Index count) {
  os << name << ' ' << count;
  char buf[64];
  for (Eigen::Index i = 0; i < count; ++i) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), data[i]);
    os << ' ' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
  }
  os << '\n';
}

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  std::string_view token(const std::string& field) {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) throw LoadError("weight file truncated while reading '" + field + "'");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(const std::string& name) {
    const auto got = token(name);
    if (got != name) throw LoadError("expected field '" + name + "', found '" + std::string(got) + "'");
  }

  long integer(const std::string& field) {
    const auto tok = token(field);
    long v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw LoadError("field '" + field + "' is not an integer");
    return v;
  }

  double real(const std::string& field) {
    const auto tok = token(field);
    double v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      throw LoadError("field '" + field + "' has a malformed number");
    return v;
  }

  void values(const std::string& name, double* out, Eigen::Index count) {
    expect(name);
    const long n = integer(name);
    if (n != count) {
      std::ostringstream os;
      os << "field '" << name << "' has " << n << " values, expected " << count;
      throw LoadError(os.str());
    }
    for (Eigen::Index i = 0; i < count; ++i) out[i] = real(name);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string save_weights(const DanNetwork& net) {
  std::ostringstream os;
  os << "dan-weights " << kFormatVersion << '\n';
  os << "muscles " << net.n_inputs() << '\n';
  os << "widths";
  for (int w : net.widths()) os << ' ' << w;
  os << '\n';
  const auto& norm = net.normalizer();
  put_values(os, "normalizer.center", norm.center.data(), norm.center.size());
  put_values(os, "normalizer.scale", norm.scale.data(), norm.scale.size());
  for (int k = 0; k < 3; ++k) {
    const std::string bn = "bn" + std::to_string(k);
    const std::string dense = "dense" + std::to_string(k);
    put_values(os, (bn + ".gamma").c_str(), net.bn_gamma(k).data(), net.bn_gamma(k).size());
    put_values(os, (bn + ".beta").c_str(), net.bn_beta(k).data(), net.bn_beta(k).size());
    put_values(os, (bn + ".running_mean").c_str(), net.running_mean(k).data(), net.running_mean(k).size());
    put_values(os, (bn + ".running_var").c_str(), net.running_var(k).data(), net.running_var(k).size());
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = net.dense_weight(k);
    put_values(os, (dense + ".weight").c_str(), w.data(), w.size());
    put_values(os, (dense + ".bias").c_str(), net.dense_bias(k).data(), net.dense_bias(k).size());
  }
  os << "end\n";
  return os.str();
}

DanNetwork load_weights(std::string_view text, std::optional<int> expected_inputs) {
  Reader in(text);
  in.expect("dan-weights");
  const long version = in.integer("version");
  if (version != kFormatVersion)
    throw LoadError("unsupported weight format version " + std::to_string(version));
  in.expect("muscles");
  const long m = in.integer("muscles");
  if (m <= 0) throw LoadError("field 'muscles' must be positive");
  if (expected_inputs && m != *expected_inputs) {
    std::ostringstream os;
    os << "field 'muscles' is " << m << " but the arm configuration has " << *expected_inputs << " muscles";
    throw LoadError(os.str());
  }
  in.expect("widths");
  std::array<long, 4> widths{};
  for (auto& w : widths) w = in.integer("widths");
  if (widths[0] != m || widths[1] <= 0 || widths[2] != widths[1] || widths[3] != 1)
    throw LoadError("field 'widths' is inconsistent with a {m, h, h, 1} network");

  InputNormalizer norm{Vector(m), Vector(m)};
  in.values("normalizer.center", norm.center.data(), m);
  in.values("normalizer.scale", norm.scale.data(), m);
  if ((norm.scale.array() <= 0.0).any()) throw LoadError("field 'normalizer.scale' must be positive");

  DanNetwork net(std::move(norm), 0, static_cast<int>(widths[1]));
  for (int k = 0; k < 3; ++k) {
    const std::string bn = "bn" + std::to_string(k);
    const std::string dense = "dense" + std::to_string(k);
    in.values(bn + ".gamma", net.bn_gamma(k).data(), net.bn_gamma(k).size());
    in.values(bn + ".beta", net.bn_beta(k).data(), net.bn_beta(k).size());
    in.values(bn + ".running_mean", net.running_mean(k).data(), net.running_mean(k).size());
    in.values(bn + ".running_var", net.running_var(k).data(), net.running_var(k).size());
    if ((net.running_var(k).array() <= 0.0).any())
      throw LoadError("field '" + bn + ".running_var' must be positive");
    auto w = net.dense_weight(k);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rw(w.rows(), w.cols());
    in.values(dense + ".weight", rw.data(), rw.size());
    w = rw;
    in.values(dense + ".bias", net.dense_bias(k).data(), net.dense_bias(k).size());
  }
  in.expect("end");
  if (!net.parameters().allFinite()) throw LoadError("weight file contains non-finite parameters");
  return net;
}

void save_weights_file(const DanNetwork& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << save_weights(net);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

DanNetwork load_weights_file(const std::string& path, std::optional<int> expected_inputs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open weight file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_weights(buf.str(), expected_inputs);
}

}  // namespace dan
