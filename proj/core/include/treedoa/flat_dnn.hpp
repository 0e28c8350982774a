#pragma once

#include <filesystem>
#include <vector>

#include "treedoa/mlnn.hpp"
#include "treedoa/tree.hpp"

namespace treedoa {

// Single-level grid classifier over the same leaf cells a tree with
// prod(L_h) == classes would use.
struct FlatDnnSpec {
  int classes = 120;
  double theta_min_deg = -60.0;
  double theta_max_deg = 60.0;
  std::vector<int> hidden_sizes;

  void validate() const;
  // The equivalent one-level tree; its cells and decoder are the flat grid.
  TreeSpec as_tree() const;
  static FlatDnnSpec matching(const TreeSpec& tree);
  bool operator==(const FlatDnnSpec&) const = default;
};

// Targets carry a one for every source's cell (multi-hot for Q > 1).
nn::Dataset flat_dataset(const FlatDnnSpec& spec, const FeatureSet& set);

class FlatDnnModel {
 public:
  FlatDnnModel() = default;
  FlatDnnModel(FlatDnnSpec spec, nn::Mlnn net, FeatureScaling scaling);

  const FlatDnnSpec& spec() const { return spec_; }
  const nn::Mlnn& network() const { return net_; }
  FeatureScaling scaling() const { return scaling_; }

  // The num_sources most probable cells, reported as cell midpoints in
  // ascending order. Probability ties go to the lower class index.
  std::vector<double> predict(const Eigen::VectorXd& features, int num_sources = 1) const;
  std::vector<int> top_classes(const Eigen::VectorXd& features, int num_sources) const;

  bool operator==(const FlatDnnModel&) const = default;

 private:
  FlatDnnSpec spec_;
  nn::Mlnn net_;
  FeatureScaling scaling_ = FeatureScaling::unit_norm;
};

struct FlatDnnTrainResult {
  FlatDnnModel model;
  std::vector<double> loss_history;
  double train_accuracy = 0.0;
};

FlatDnnTrainResult train_flat_dnn(const FlatDnnSpec& spec, const FeatureSet& set, const nn::TrainConfig& cfg);

void save_flat_dnn(const FlatDnnModel& model, const std::filesystem::path& dir);
FlatDnnModel load_flat_dnn(const std::filesystem::path& dir);

}  // namespace treedoa
