#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "treedoa/tree.hpp"

namespace treedoa {

// Q structurally identical trees; branch q estimates the q-th smallest DOA.
class QTdnnModel {
 public:
  QTdnnModel() = default;
  explicit QTdnnModel(std::vector<TdnnModel> branches);

  int num_sources() const { return static_cast<int>(branches_.size()); }
  const TdnnModel& branch(int q) const { return branches_.at(static_cast<std::size_t>(q)); }
  const TreeSpec& spec() const { return branches_.front().spec(); }

  // One estimate per branch, sorted ascending.
  std::vector<double> predict_multi(const Eigen::VectorXd& features) const;

  bool operator==(const QTdnnModel&) const = default;

 private:
  std::vector<TdnnModel> branches_;
};

struct TupleSampling {
  std::size_t count = 0;          // 0 means 50 * N
  double min_separation_deg = 0;  // 0 means 2 * resolution
  std::uint64_t seed = 11;
};

// Stratified random Q-tuples: tuple i anchors one of its angles (rank
// i / N mod Q where feasible) uniformly inside leaf cell i mod N, the rest are
// drawn uniformly subject to ordering and the minimum separation.
std::vector<std::vector<double>> sample_source_tuples(const TreeSpec& spec, int num_sources,
                                                      const TupleSampling& sampling);

// Uniform over sorted Q-tuples in the domain with consecutive gaps of at
// least min_separation_deg.
std::vector<double> random_separated_tuple(const TreeSpec& spec, int num_sources, double min_separation_deg,
                                           std::uint64_t seed);

void validate_tuple(const TreeSpec& spec, const std::vector<double>& tuple, double min_separation_deg);

struct MultiFeatureOptions {
  // Empty: noise-free analytic covariance. Otherwise each tuple gets one
  // sample-covariance realization per listed SNR.
  std::vector<double> snr_db;
  int snapshots = 50;
  FeatureScaling scaling = FeatureScaling::unit_norm;
  std::uint64_t seed = 13;
  std::size_t workers = 0;
};

// Features of the combined Q-source covariance for every tuple (equal unit
// powers). Tuples are validated against the domain and minimum separation.
FeatureSet build_multi_training_set(const ArrayConfig& array, const TreeSpec& spec,
                                    const std::vector<std::vector<double>>& tuples, double min_separation_deg,
                                    const MultiFeatureOptions& options);

// Branch q's view of a multi-source set: the rank-q node training set.
NodeTrainingSet build_branch_node_training_set(const TreeSpec& spec, int level, std::span<const int> prefix,
                                               const FeatureSet& set, int branch);

struct QTdnnTrainResult {
  QTdnnModel model;
  std::vector<std::vector<NodeReport>> branch_nodes;
};

// Trains branch q on rank q. Cells no rank-q angle can reach (e.g. the top
// cell for the smallest of three separated angles) borrow their parent's data.
QTdnnTrainResult train_qtdnn(const TreeSpec& spec, int num_sources, const FeatureSet& set, const TreeTrainConfig& cfg);

// sqrt(mean over trials and sources of squared error), pairing sorted truths
// with sorted estimates.
double multi_rmse(const std::vector<std::vector<double>>& truths, const std::vector<std::vector<double>>& estimates);

// Checkpoint: <dir>/manifest.json plus branch_<q>/ tree checkpoints.
void save_qtdnn(const QTdnnModel& model, const std::filesystem::path& dir);
QTdnnModel load_qtdnn(const std::filesystem::path& dir);

}  // namespace treedoa
