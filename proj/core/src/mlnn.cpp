#include "treedoa/mlnn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "treedoa/common.hpp"
#include "treedoa/rng.hpp"

namespace treedoa::nn {

void LayerSpec::validate() const {
  if (sizes.size() < 3) throw ConfigError("a node network needs input, at least one hidden and an output layer");
  for (int s : sizes)
    if (s < 1) throw ConfigError("layer widths must be positive");
  if (sizes.back() < 2) throw ConfigError("output layer needs at least 2 classes");
}

std::int64_t LayerSpec::mac_count() const {
  std::int64_t total = 0;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) total += std::int64_t{sizes[k]} * sizes[k + 1];
  return total;
}

Mlnn::Mlnn(LayerSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (int k = 0; k < spec_.num_transforms(); ++k) {
    const auto k_in = static_cast<std::size_t>(k);
    weights_.push_back(Eigen::MatrixXd::Zero(spec_.sizes[k_in + 1], spec_.sizes[k_in]));
    biases_.push_back(Eigen::VectorXd::Zero(spec_.sizes[k_in + 1]));
  }
}

Mlnn Mlnn::initialized(LayerSpec spec, std::uint64_t seed) {
  Mlnn m(std::move(spec));
  RngStream rng(seed);
  for (int k = 0; k < m.num_transforms(); ++k) {
    auto& w = m.weights(k);
    const double fan_in = static_cast<double>(w.cols());
    const double fan_out = static_cast<double>(w.rows());
    const double limit = m.activation(k) == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                              : std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
  }
  return m;
}

Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double peak = logits.col(c).maxCoeff();
    p.col(c) = (logits.col(c).array() - peak).exp();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = static_cast<int>(i);
  return best;
}

Eigen::MatrixXd Mlnn::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_size())
    throw ConfigError("input has " + std::to_string(inputs.rows()) + " features, network expects " +
                      std::to_string(input_size()));
  Eigen::MatrixXd a = inputs;
  for (int k = 0; k < num_transforms(); ++k) {
    Eigen::MatrixXd z = weights(k) * a;
    z.colwise() += biases(k);
    if (activation(k) == Activation::relu)
      a = z.cwiseMax(0.0);
    else
      a = softmax_columns(z);
  }
  return a;
}

Eigen::VectorXd Mlnn::forward(const Eigen::VectorXd& input) const { return forward_batch(input); }

int Mlnn::predict_class(const Eigen::VectorXd& input) const { return argmax(forward(input)); }

std::size_t Mlnn::parameter_count() const {
  std::size_t n = 0;
  for (int k = 0; k < num_transforms(); ++k) n += static_cast<std::size_t>(weights(k).size() + biases(k).size());
  return n;
}

bool Mlnn::all_finite() const {
  for (int k = 0; k < num_transforms(); ++k)
    if (!weights(k).allFinite() || !biases(k).allFinite()) return false;
  return true;
}

bool Mlnn::operator==(const Mlnn& other) const {
  if (!(spec_ == other.spec_)) return false;
  for (int k = 0; k < num_transforms(); ++k)
    if (weights(k) != other.weights(k) || biases(k) != other.biases(k)) return false;
  return true;
}

double bce_loss(const Eigen::VectorXd& predicted, const Eigen::VectorXd& target) {
  if (predicted.size() != target.size()) throw ConfigError("bce_loss: length mismatch");
  double sum = 0.0;
  for (Eigen::Index l = 0; l < predicted.size(); ++l) {
    const double p = std::clamp(predicted(l), kProbabilityClamp, 1.0 - kProbabilityClamp);
    sum += target(l) * std::log(p) + (1.0 - target(l)) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(predicted.size());
}

double categorical_ce_loss(const Eigen::VectorXd& predicted, const Eigen::VectorXd& target) {
  if (predicted.size() != target.size()) throw ConfigError("categorical_ce_loss: length mismatch");
  double sum = 0.0;
  for (Eigen::Index l = 0; l < predicted.size(); ++l)
    if (target(l) != 0.0) sum += target(l) * std::log(std::max(predicted(l), kProbabilityClamp));
  return -sum;
}

double loss(LossKind kind, const Eigen::VectorXd& predicted, const Eigen::VectorXd& target) {
  return kind == LossKind::bce ? bce_loss(predicted, target) : categorical_ce_loss(predicted, target);
}

namespace {

// dLoss/dProbability, elementwise; zero where the clamp is active.
Eigen::MatrixXd loss_gradient_wrt_probabilities(LossKind kind, const Eigen::MatrixXd& p, const Eigen::MatrixXd& z) {
  Eigen::MatrixXd g(p.rows(), p.cols());
  const double inv_l = 1.0 / static_cast<double>(p.rows());
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double pv = p(r, c);
      const double zv = z(r, c);
      if (kind == LossKind::bce) {
        const bool clamped = pv < kProbabilityClamp || pv > 1.0 - kProbabilityClamp;
        g(r, c) = clamped ? 0.0 : -inv_l * (zv / pv - (1.0 - zv) / (1.0 - pv));
      } else {
        g(r, c) = (pv < kProbabilityClamp || zv == 0.0) ? 0.0 : -zv / pv;
      }
    }
  }
  return g;
}

double batch_loss(LossKind kind, const Eigen::MatrixXd& p, const Eigen::MatrixXd& z) {
  double total = 0.0;
  for (Eigen::Index c = 0; c < p.cols(); ++c) total += loss(kind, p.col(c), z.col(c));
  return total;
}

}  // namespace

Gradients batch_gradients(const Mlnn& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                          LossKind kind, double* mean_loss_out) {
  if (inputs.rows() != model.input_size()) throw ConfigError("batch_gradients: input dimension mismatch");
  if (targets.rows() != model.output_size() || targets.cols() != inputs.cols())
    throw ConfigError("batch_gradients: target dimension mismatch");

  const int n_layers = model.num_transforms();
  const double inv_batch = 1.0 / static_cast<double>(inputs.cols());

  // activations[k] is the input of transform k; activations[n_layers] is the output.
  std::vector<Eigen::MatrixXd> activations;
  activations.reserve(static_cast<std::size_t>(n_layers) + 1);
  activations.push_back(inputs);
  for (int k = 0; k < n_layers; ++k) {
    Eigen::MatrixXd z = model.weights(k) * activations.back();
    z.colwise() += model.biases(k);
    activations.push_back(model.activation(k) == Activation::relu ? Eigen::MatrixXd(z.cwiseMax(0.0))
                                                                   : softmax_columns(z));
  }
  const Eigen::MatrixXd& p = activations.back();
  if (mean_loss_out) *mean_loss_out = batch_loss(kind, p, targets) * inv_batch;

  // Back through the softmax: dq_j = p_j (g_j - sum_i p_i g_i).
  const Eigen::MatrixXd g = loss_gradient_wrt_probabilities(kind, p, targets);
  const Eigen::RowVectorXd pg = (p.array() * g.array()).colwise().sum();
  Eigen::MatrixXd delta = p.array() * (g.rowwise() - pg).array();
  delta *= inv_batch;

  Gradients grads;
  grads.weights.resize(static_cast<std::size_t>(n_layers));
  grads.biases.resize(static_cast<std::size_t>(n_layers));
  for (int k = n_layers - 1; k >= 0; --k) {
    const auto ku = static_cast<std::size_t>(k);
    grads.weights[ku].noalias() = delta * activations[ku].transpose();
    grads.biases[ku] = delta.rowwise().sum();
    if (k > 0) {
      Eigen::MatrixXd upstream = model.weights(k).transpose() * delta;
      // ReLU derivative, taken as 0 at the kink.
      delta = upstream.cwiseProduct((activations[ku].array() > 0.0).cast<double>().matrix());
    }
  }
  return grads;
}

Gradients backprop_gradients(const Mlnn& model, const Eigen::VectorXd& input, const Eigen::VectorXd& target,
                             LossKind kind) {
  return batch_gradients(model, input, target, kind);
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be finite and >= 0");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (init_scheme != "he_glorot_uniform") throw ConfigError("unknown init scheme: " + init_scheme);
}

double mean_loss(const Mlnn& model, const Dataset& data, LossKind kind) {
  if (data.empty()) return 0.0;
  return batch_loss(kind, model.forward_batch(data.inputs), data.targets) / static_cast<double>(data.size());
}

double accuracy(const Mlnn& model, const Dataset& data) {
  if (data.empty()) return 0.0;
  const Eigen::MatrixXd p = model.forward_batch(data.inputs);
  Eigen::Index hits = 0;
  for (Eigen::Index c = 0; c < p.cols(); ++c)
    if (argmax(p.col(c)) == argmax(data.targets.col(c))) ++hits;
  return static_cast<double>(hits) / static_cast<double>(p.cols());
}

namespace {

struct AdamState {
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;

  explicit AdamState(const Mlnn& m) {
    for (int k = 0; k < m.num_transforms(); ++k) {
      mw.push_back(Eigen::MatrixXd::Zero(m.weights(k).rows(), m.weights(k).cols()));
      vw.push_back(mw.back());
      mb.push_back(Eigen::VectorXd::Zero(m.biases(k).size()));
      vb.push_back(mb.back());
    }
  }
};

template <typename Param, typename Grad>
void adam_update(Param& param, const Grad& grad, Param& m, Param& v, const TrainConfig& cfg, double c1, double c2) {
  m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
  v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
  param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_epsilon);
}

}  // namespace

TrainResult train(Mlnn model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw ConfigError("training dataset is empty");
  if (data.inputs.rows() != model.input_size()) throw ConfigError("training inputs do not match the network input size");
  if (data.targets.rows() != model.output_size() || data.targets.cols() != data.inputs.cols())
    throw ConfigError("training targets do not match the network output size");

  const Eigen::Index n = data.size();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 shuffle_engine(derive_seed(cfg.seed, 0x5bu));

  AdamState adam(model);
  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));

  const Eigen::Index batch = std::min<Eigen::Index>(cfg.batch_size, n);
  Eigen::MatrixXd xb(data.inputs.rows(), batch);
  Eigen::MatrixXd zb(data.targets.rows(), batch);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_engine);
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index len = std::min(batch, n - start);
      xb.resize(Eigen::NoChange, len);
      zb.resize(Eigen::NoChange, len);
      for (Eigen::Index i = 0; i < len; ++i) {
        xb.col(i) = data.inputs.col(order[static_cast<std::size_t>(start + i)]);
        zb.col(i) = data.targets.col(order[static_cast<std::size_t>(start + i)]);
      }
      const Gradients g = batch_gradients(model, xb, zb, cfg.loss);
      if (cfg.optimizer == OptimizerKind::sgd) {
        for (int k = 0; k < model.num_transforms(); ++k) {
          const auto ku = static_cast<std::size_t>(k);
          model.weights(k) -= cfg.learning_rate * g.weights[ku];
          model.biases(k) -= cfg.learning_rate * g.biases[ku];
        }
      } else {
        ++adam.step;
        const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.step));
        const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.step));
        for (int k = 0; k < model.num_transforms(); ++k) {
          const auto ku = static_cast<std::size_t>(k);
          adam_update(model.weights(k), g.weights[ku], adam.mw[ku], adam.vw[ku], cfg, c1, c2);
          adam_update(model.biases(k), g.biases[ku], adam.mb[ku], adam.vb[ku], cfg, c1, c2);
        }
      }
    }
    const double epoch_loss = mean_loss(model, data, cfg.loss);
    if (!std::isfinite(epoch_loss) || !model.all_finite()) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << epoch << " (loss " << epoch_loss << ", lr " << cfg.learning_rate << ")";
      throw RuntimeError(msg.str());
    }
    result.loss_history.push_back(epoch_loss);
  }
  result.train_accuracy = accuracy(model, data);
  result.model = std::move(model);
  return result;
}

}  // namespace treedoa::nn
