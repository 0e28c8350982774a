#pragma once

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <vector>

namespace treedoa {

using cd = std::complex<double>;

// Uniform linear array geometry and the angular search domain
// [theta_min_deg, theta_max_deg).
struct ArrayConfig {
  int num_elements = 16;
  double spacing_wavelengths = 0.5;
  double theta_min_deg = -60.0;
  double theta_max_deg = 60.0;

  void validate() const;
  // Length of the real feature vector, M(M-1).
  int feature_dim() const { return num_elements * (num_elements - 1); }
  bool in_domain(double theta_deg) const { return theta_deg >= theta_min_deg && theta_deg < theta_max_deg; }
};

// Q uncorrelated far-field sources plus white noise.
struct SourceSet {
  std::vector<double> doas_deg;  // strictly increasing
  std::vector<double> powers;    // sigma_s^2 per source
  double noise_power = 0.0;      // sigma_v^2

  std::size_t size() const { return doas_deg.size(); }
  void validate(const ArrayConfig& cfg) const;

  // Unit-power sources at a common SNR (dB). Angles are sorted.
  static SourceSet equal_power(std::vector<double> doas_deg, double snr_db);
  // Unit-power sources with no noise.
  static SourceSet noiseless(std::vector<double> doas_deg);
};

double snr_db_to_noise_power(double snr_db, double signal_power = 1.0);

// M x T complex samples, one snapshot per column.
struct SnapshotBatch {
  Eigen::MatrixXcd samples;
  int snapshot_count() const { return static_cast<int>(samples.cols()); }
};

using CovarianceMatrix = Eigen::MatrixXcd;

Eigen::VectorXcd steering_vector(const ArrayConfig& cfg, double theta_deg);
// Columns are steering vectors, in the order given.
Eigen::MatrixXcd steering_matrix(const ArrayConfig& cfg, const std::vector<double>& doas_deg);
// Derivative of the steering vector with respect to theta in radians.
Eigen::VectorXcd steering_derivative(const ArrayConfig& cfg, double theta_deg);

SnapshotBatch synth_snapshots(const ArrayConfig& cfg, const SourceSet& src, int snapshots, std::uint64_t seed);
CovarianceMatrix sample_covariance(const SnapshotBatch& batch);
CovarianceMatrix analytic_covariance(const ArrayConfig& cfg, const SourceSet& src);

// [Re(r), Im(r)] for r = the strictly-upper-triangular entries of R taken row
// by row: R(0,1..M-1), R(1,2..M-1), ..., R(M-2,M-1).
Eigen::VectorXd extract_features(const CovarianceMatrix& r);

// extract_features(sample_covariance(synth_snapshots(...))).
Eigen::VectorXd sample_features(const ArrayConfig& cfg, const SourceSet& src, int snapshots, std::uint64_t seed);

// Input conditioning applied by the classifiers before their first layer.
enum class FeatureScaling { none, unit_norm };

void apply_scaling(FeatureScaling scaling, Eigen::Ref<Eigen::VectorXd> features);
const char* to_string(FeatureScaling scaling);
FeatureScaling feature_scaling_from_string(const std::string& name);

bool is_hermitian(const CovarianceMatrix& r, double rel_tol = 1e-12);

}  // namespace treedoa
