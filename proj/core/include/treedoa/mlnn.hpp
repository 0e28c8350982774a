#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace treedoa::nn {

enum class Activation : std::uint8_t { relu = 1, softmax = 2 };

// Layer widths [input, hidden..., output].
struct LayerSpec {
  std::vector<int> sizes;

  void validate() const;
  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }
  // Number of weight layers, K-1 in a K-layer network.
  int num_transforms() const { return static_cast<int>(sizes.size()) - 1; }
  // Multiply-accumulates of one forward pass: sum of W^k * W^{k+1}.
  std::int64_t mac_count() const;
  bool operator==(const LayerSpec&) const = default;
};

// Fully-connected classifier: ReLU hidden layers, softmax output.
class Mlnn {
 public:
  Mlnn() = default;
  // All parameters zero.
  explicit Mlnn(LayerSpec spec);
  // He-uniform for ReLU layers, Glorot-uniform for the softmax layer, zero biases.
  static Mlnn initialized(LayerSpec spec, std::uint64_t seed);

  const LayerSpec& spec() const { return spec_; }
  int input_size() const { return spec_.input_size(); }
  int output_size() const { return spec_.output_size(); }
  int num_transforms() const { return spec_.num_transforms(); }
  Activation activation(int transform) const {
    return transform + 1 == num_transforms() ? Activation::softmax : Activation::relu;
  }

  Eigen::MatrixXd& weights(int k) { return weights_[static_cast<std::size_t>(k)]; }
  const Eigen::MatrixXd& weights(int k) const { return weights_[static_cast<std::size_t>(k)]; }
  Eigen::VectorXd& biases(int k) { return biases_[static_cast<std::size_t>(k)]; }
  const Eigen::VectorXd& biases(int k) const { return biases_[static_cast<std::size_t>(k)]; }

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  // Column-wise forward pass; input is input_size x batch.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;
  // argmax of forward(); ties go to the lowest index.
  int predict_class(const Eigen::VectorXd& input) const;

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool operator==(const Mlnn& other) const;

 private:
  LayerSpec spec_;
  std::vector<Eigen::MatrixXd> weights_;  // W^k has shape sizes[k+1] x sizes[k]
  std::vector<Eigen::VectorXd> biases_;
};

// Column-wise numerically stable softmax.
Eigen::MatrixXd softmax_columns(const Eigen::MatrixXd& logits);
// Index of the largest entry, lowest index on ties.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& v);

inline constexpr double kProbabilityClamp = 1e-12;

enum class LossKind { bce, categorical_ce };

// -(1/L) sum_l [z log p + (1-z) log(1-p)], p clamped to [eps, 1-eps].
double bce_loss(const Eigen::VectorXd& predicted, const Eigen::VectorXd& target);
// -sum_l z log p, p clamped to [eps, 1].
double categorical_ce_loss(const Eigen::VectorXd& predicted, const Eigen::VectorXd& target);
double loss(LossKind kind, const Eigen::VectorXd& predicted, const Eigen::VectorXd& target);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// Gradient of loss(forward(input), target) with respect to every parameter.
Gradients backprop_gradients(const Mlnn& model, const Eigen::VectorXd& input, const Eigen::VectorXd& target,
                             LossKind kind = LossKind::bce);
// Mean gradient and mean loss over the columns of inputs/targets.
Gradients batch_gradients(const Mlnn& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                          LossKind kind, double* mean_loss = nullptr);

// Training examples stored column-wise.
struct Dataset {
  Eigen::MatrixXd inputs;   // input_size x n
  Eigen::MatrixXd targets;  // output_size x n

  Eigen::Index size() const { return inputs.cols(); }
  bool empty() const { return inputs.cols() == 0; }
};

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 100;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LossKind loss = LossKind::bce;
  std::string init_scheme = "he_glorot_uniform";
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainResult {
  Mlnn model;
  std::vector<double> loss_history;  // mean dataset loss after each epoch
  double train_accuracy = 0.0;       // argmax(prediction) == argmax(target)
};

// Mini-batch training with a seeded shuffle. Throws RuntimeError if the loss
// becomes NaN/Inf.
TrainResult train(Mlnn model, const Dataset& data, const TrainConfig& cfg);

double mean_loss(const Mlnn& model, const Dataset& data, LossKind kind);
double accuracy(const Mlnn& model, const Dataset& data);

// Checkpoint container: magic "TDMLNN\0\0", format version, layer widths,
// activation tags, little-endian IEEE-754 float64 parameters, FNV-1a checksum.
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const Mlnn& model);
Mlnn deserialize_model(const std::vector<std::uint8_t>& bytes);
void save_model(const Mlnn& model, const std::filesystem::path& path);
Mlnn load_model(const std::filesystem::path& path);

}  // namespace treedoa::nn
