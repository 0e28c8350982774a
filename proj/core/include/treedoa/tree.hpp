#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "treedoa/array_signal.hpp"
#include "treedoa/common.hpp"
#include "treedoa/mlnn.hpp"

namespace treedoa {

// Shape of a tree classifier: level h splits each level-(h-1) cell into
// fanouts[h] equal sub-cells. Levels are 0-based here.
struct TreeSpec {
  std::vector<int> fanouts;
  double theta_min_deg = -60.0;
  double theta_max_deg = 60.0;
  std::vector<int> hidden_sizes;  // shared by every node of every level

  void validate() const;
  int depth() const { return static_cast<int>(fanouts.size()); }
  int fanout(int level) const { return fanouts[static_cast<std::size_t>(level)]; }
  double span() const { return theta_max_deg - theta_min_deg; }
  // G_h: 1 at level 0, then G_{h+1} = G_h * L_h.
  std::int64_t nodes_at_level(int level) const;
  // N = prod L_h.
  std::int64_t total_classes() const;
  std::int64_t total_nodes() const;
  // Leaf cell width (final resolution).
  double resolution() const { return span() / static_cast<double>(total_classes()); }
  nn::LayerSpec node_layers(int level, int input_dim) const;
  bool operator==(const TreeSpec&) const = default;
};

std::vector<std::int64_t> level_node_counts(const TreeSpec& spec);
// Cell width at each level, (theta_max - theta_min) / (G_h L_h).
std::vector<double> level_resolutions(const TreeSpec& spec);

// Per-level class indices, 0-based: 0 <= labels[h] < fanouts[h].
using LabelPath = std::vector<int>;

struct AngleInterval {
  double lo = 0.0;
  double hi = 0.0;  // exclusive
  bool contains(double theta) const { return theta >= lo && theta < hi; }
  double width() const { return hi - lo; }
  double midpoint() const { return 0.5 * (lo + hi); }
};

// Cell addressed by a (possibly partial) label prefix. The empty prefix is the
// whole domain.
AngleInterval cell_interval(const TreeSpec& spec, std::span<const int> prefix);

// Leaf cell index in [0, N) containing theta.
std::int64_t leaf_index(const TreeSpec& spec, double theta_deg);
LabelPath leaf_path(const TreeSpec& spec, std::int64_t leaf);
std::int64_t path_to_leaf(const TreeSpec& spec, std::span<const int> path);
// Index of the node addressed by prefix within its level, in [0, G_h).
std::int64_t node_index(const TreeSpec& spec, std::span<const int> prefix);
LabelPath node_prefix(const TreeSpec& spec, int level, std::int64_t index);

LabelPath doa_to_labels(const TreeSpec& spec, double theta_deg);

enum class DoaDecoder {
  midpoint,   // centre of the selected leaf cell
  left_edge,  // theta_min + sum_h l_h * dtheta_h with 0-based labels
};

double labels_to_doa(const TreeSpec& spec, std::span<const int> labels, DoaDecoder decoder = DoaDecoder::midpoint);
void validate_path(const TreeSpec& spec, std::span<const int> labels);

// Visited nodes, (level, index within level), in routing order.
struct RouteTrace {
  std::vector<std::pair<int, std::int64_t>> visited;
};

// Returns the class chosen at (level, prefix).
using NodeClassifier = std::function<int(int level, std::span<const int> prefix)>;

// Walks the tree from the root, evaluating exactly one node per level.
LabelPath route_labels(const TreeSpec& spec, const NodeClassifier& classify, RouteTrace* trace = nullptr);

// Labelled features, one column per example. Each example carries its sorted
// source angles; single-source sets have one angle per example.
struct FeatureSet {
  Eigen::MatrixXd features;
  std::vector<std::vector<double>> doas;
  FeatureScaling scaling = FeatureScaling::unit_norm;

  Eigen::Index size() const { return features.cols(); }
  Eigen::Index dim() const { return features.rows(); }
  void append(const FeatureSet& other);
};

struct GridOptions {
  // Training angles per leaf cell sit at fractions (i + 1/2)/(offsets + 1),
  // i = 0..offsets. The default 4 gives the midpoint plus 4 off-centre angles.
  int offsets_per_cell = 4;
  // Extra sample-covariance copies of every grid angle at these SNRs.
  std::vector<double> augment_snr_db;
  int augment_realizations = 1;
  int augment_snapshots = 50;
  FeatureScaling scaling = FeatureScaling::unit_norm;
  std::uint64_t seed = 7;
  std::size_t workers = 0;
};

std::vector<double> training_angles(const TreeSpec& spec, int offsets_per_cell);
// Noise-free analytic features at every training angle, followed by the
// augmentation copies.
FeatureSet build_training_grid(const ArrayConfig& array, const TreeSpec& spec, const GridOptions& options);

class EmptyNodeError : public RuntimeError {
 public:
  using RuntimeError::RuntimeError;
};

struct NodeTrainingSet {
  nn::Dataset data;
  std::vector<Eigen::Index> source_columns;  // columns of the FeatureSet used
};

// Examples whose rank-th angle falls in the cell of `prefix`, labelled with
// the level-`level` digit of that angle. prefix.size() must equal level.
NodeTrainingSet build_node_training_set(const TreeSpec& spec, int level, std::span<const int> prefix,
                                        const FeatureSet& set, std::size_t rank = 0);

// Used when a node's own cell has no examples: the parent's examples, with the
// rank-th angle clamped into this node's cell before labelling.
NodeTrainingSet build_borrowed_node_training_set(const TreeSpec& spec, int level, std::span<const int> prefix,
                                                 const FeatureSet& set, std::size_t rank = 0);

class TdnnModel {
 public:
  struct Estimate {
    LabelPath labels;
    double theta_deg = 0.0;
  };

  TdnnModel() = default;
  TdnnModel(TreeSpec spec, int input_dim, FeatureScaling scaling);

  const TreeSpec& spec() const { return spec_; }
  int input_dim() const { return input_dim_; }
  FeatureScaling scaling() const { return scaling_; }

  nn::Mlnn& node(int level, std::int64_t index);
  const nn::Mlnn& node(int level, std::int64_t index) const;
  const nn::Mlnn& node(int level, std::span<const int> prefix) const { return node(level, node_index(spec_, prefix)); }
  void set_node(int level, std::int64_t index, nn::Mlnn model);

  // features are raw extract_features() output; scaling is applied here.
  Estimate route_predict(const Eigen::VectorXd& features, RouteTrace* trace = nullptr,
                         DoaDecoder decoder = DoaDecoder::midpoint) const;

  bool operator==(const TdnnModel& other) const;

 private:
  TreeSpec spec_;
  int input_dim_ = 0;
  FeatureScaling scaling_ = FeatureScaling::unit_norm;
  std::vector<std::vector<nn::Mlnn>> levels_;
};

enum class EmptyNodePolicy { error, borrow_parent };

struct TreeTrainConfig {
  nn::TrainConfig node;
  EmptyNodePolicy empty_nodes = EmptyNodePolicy::error;
  std::size_t rank = 0;  // which sorted source angle the tree learns
  std::size_t workers = 0;
};

struct NodeReport {
  int level = 0;
  LabelPath prefix;
  std::int64_t samples = 0;
  double train_accuracy = 0.0;
  double final_loss = 0.0;
  bool borrowed = false;
};

struct TreeTrainResult {
  TdnnModel model;
  std::vector<NodeReport> nodes;  // level-major, index order within a level
};

// Trains every node independently; nodes of one level run in parallel with
// per-node seeds derived from cfg.node.seed, so results do not depend on the
// worker count.
TreeTrainResult train_tree(const TreeSpec& spec, const FeatureSet& set, const TreeTrainConfig& cfg);

struct ComplexityReport {
  std::int64_t model_classes = 0;    // sum L_h
  std::int64_t flat_equivalent = 0;  // prod L_h
  std::int64_t mac_count = 0;        // sum over the H activated nodes of sum_k W^k W^{k+1}
  std::int64_t node_count = 0;       // sum G_h
};

ComplexityReport complexity_report(const TreeSpec& spec, int input_dim);

// Checkpoint: <dir>/manifest.json plus one model file per node under <dir>/nodes/.
void save_tree(const TdnnModel& model, const std::filesystem::path& dir);
TdnnModel load_tree(const std::filesystem::path& dir);

}  // namespace treedoa
