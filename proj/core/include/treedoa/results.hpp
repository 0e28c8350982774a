#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace treedoa {

// One row per (trial, method). Multi-source fields hold Q values each.
struct TrialResult {
  std::string method;
  double snr_db = 0.0;
  int snapshots = 0;
  int num_sources = 0;
  int trial = 0;
  std::vector<double> truth;
  std::vector<double> estimate;  // sorted; NaN entries mark a failed method
  std::vector<double> error;     // estimate - truth after sorting both
  std::uint64_t seed = 0;
  double ms = 0.0;

  bool failed() const;
  bool operator==(const TrialResult&) const;
};

using ResultTable = std::vector<TrialResult>;

// Fills error from truth/estimate, pairing both in ascending order.
void compute_errors(TrialResult& row);

inline constexpr const char* kTrialCsvHeader = "method,snr_db,T,Q,trial,theta_true,theta_est,error,seed,ms";

// Lists inside a field are ';'-separated; numbers use round-trip precision.
std::string trials_to_csv(const ResultTable& table);
ResultTable trials_from_csv(const std::string& text);
void emit_results(const ResultTable& table, const std::filesystem::path& path);
ResultTable load_results(const std::filesystem::path& path);

enum class SweepAxis { snr, num_sources };

// Plot-ready aggregate of one (method, x) series point. stderr is the
// delta-method standard error of the RMSE.
struct PlotPoint {
  std::string series;
  double x = 0.0;
  std::size_t count = 0;     // squared-error samples (trials x sources)
  std::size_t failures = 0;  // failed trials, excluded from the statistics
  double mse = 0.0;
  double rmse = 0.0;
  double rmse_stderr = 0.0;
};

// Points ordered by first appearance of each method, then ascending x.
std::vector<PlotPoint> aggregate(const ResultTable& table, SweepAxis axis);
inline constexpr const char* kPlotCsvHeader = "series,x,n,failures,mse,rmse,rmse_stderr";
std::string plot_to_csv(const std::vector<PlotPoint>& points);
void emit_plot_data(const std::vector<PlotPoint>& points, const std::filesystem::path& path);

// Classifier accuracy versus output size.
struct AccuracyRow {
  std::string series;  // "flat" or "tree-<fanouts>"
  int classes = 0;     // output size of the network
  int level = -1;      // tree level for per-node rows
  std::int64_t node = -1;
  std::int64_t train_samples = 0;
  std::int64_t val_samples = 0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kAccuracyCsvHeader =
    "series,classes,level,node,train_samples,val_samples,train_accuracy,val_accuracy,seed";
std::string accuracy_to_csv(const std::vector<AccuracyRow>& rows);
void emit_accuracy(const std::vector<AccuracyRow>& rows, const std::filesystem::path& path);

}  // namespace treedoa
