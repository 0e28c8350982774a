#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treedoa/array_signal.hpp"
#include "treedoa/flat_dnn.hpp"
#include "treedoa/mlnn.hpp"
#include "treedoa/qtdnn.hpp"
#include "treedoa/results.hpp"
#include "treedoa/tree.hpp"

namespace treedoa {

struct TrainingOptions {
  int offsets_per_cell = 4;
  std::vector<double> augment_snr_db = {-10.0, -5.0, 0.0, 10.0};
  int augment_realizations = 2;
  int augment_snapshots = 50;
  FeatureScaling scaling = FeatureScaling::unit_norm;
  nn::TrainConfig node;
  // Multi-source training: tuples_per_cell * N stratified tuples, each with a
  // noise-free copy (if include_clean) plus one sample-covariance copy per SNR.
  int tuples_per_cell = 10;
  double min_separation_deg = 0.0;  // 0 means 2 * resolution
  std::vector<double> multi_snr_db = {-10.0, -5.0, 0.0, 10.0};
  bool multi_include_clean = true;
};

struct ExperimentConfig {
  std::string profile = "desk";
  ArrayConfig array;
  TreeSpec tree{{6, 5, 4}, -60.0, 60.0, {128, 64, 32}};
  std::vector<std::string> methods = {"tdnn", "dnn", "root-music", "crlb"};
  std::vector<double> snr_db = {-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0};
  int snapshots = 50;
  std::vector<int> q_values = {1, 2, 3, 4, 5};
  double q_snr_db = -8.0;
  int trials = 500;
  std::uint64_t seed = 2024;
  std::string theta_mode = "random";  // "random" (off-grid) or "fixed"
  double fixed_theta_deg = 27.0;
  double eval_min_separation_deg = 0.0;  // 0 means the training separation
  std::vector<int> class_sweep = {2, 12, 30, 60, 120};
  double class_val_snr_db = 0.0;
  TrainingOptions training;
  bool record_timing = false;
  std::size_t workers = 0;
  std::string output_dir = "results";

  void validate() const;
  double min_separation() const;
  double eval_min_separation() const;

  // Desk: M=16, 3-level [6,5,4], hidden [128,64,32]. Full: M=64, hidden
  // [512,256,128,64,32,16], 2000 trials.
  static ExperimentConfig desk();
  static ExperimentConfig full();
  static ExperimentConfig for_profile(const std::string& name);
};

// JSON text. Missing keys keep the defaults of the profile named in the text
// (desk if absent).
ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& cfg);

// Shared single-source training data: grid angles with noise-free features
// plus augmentation copies.
FeatureSet build_single_source_set(const ExperimentConfig& cfg);
FeatureSet build_multi_source_set(const ExperimentConfig& cfg, int num_sources);

struct SingleSourceModels {
  std::optional<TdnnModel> tdnn;
  std::optional<FlatDnnModel> dnn;
  std::vector<NodeReport> tdnn_nodes;
  double dnn_train_accuracy = 0.0;
};

// Trains the tree and the flat DNN on the identical feature set.
SingleSourceModels train_single_source_models(const ExperimentConfig& cfg, const FeatureSet& set);

struct MultiSourceModels {
  std::optional<QTdnnModel> qtdnn;
  std::optional<FlatDnnModel> dnn;
};

MultiSourceModels train_multi_source_models(const ExperimentConfig& cfg, int num_sources, const FeatureSet& set);

// Per-trial seeds split by (sweep point, trial), so parallel execution
// reproduces the sequential table exactly.
ResultTable run_rmse_vs_snr(const ExperimentConfig& cfg, const SingleSourceModels& models);
ResultTable run_rmse_vs_q(const ExperimentConfig& cfg, const std::map<int, MultiSourceModels>& models);
std::vector<AccuracyRow> run_accuracy_vs_classes(const ExperimentConfig& cfg);

// Writes <dir>/<name>.csv, <name>.plot.csv and <name>.config.json (resolved
// config and library version).
void write_experiment_outputs(const std::filesystem::path& dir, const std::string& name, const ExperimentConfig& cfg,
                              const ResultTable& table, SweepAxis axis);

// Binary feature-set container used by `gen-data`.
void save_feature_set(const FeatureSet& set, const std::filesystem::path& path);
FeatureSet load_feature_set(const std::filesystem::path& path);

}  // namespace treedoa
