#include "treedoa/array_signal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "treedoa/common.hpp"
#include "treedoa/rng.hpp"

namespace treedoa {

void ArrayConfig::validate() const {
  if (num_elements < 2) throw ConfigError("array needs at least 2 elements");
  if (!(spacing_wavelengths > 0.0) || !std::isfinite(spacing_wavelengths))
    throw ConfigError("element spacing must be positive");
  if (!(theta_min_deg < theta_max_deg)) throw ConfigError("theta_min must be below theta_max");
  if (theta_min_deg < -90.0 || theta_max_deg > 90.0) throw ConfigError("angular domain must lie within [-90, 90]");
}

void SourceSet::validate(const ArrayConfig& cfg) const {
  if (doas_deg.empty()) throw ConfigError("source set is empty");
  if (powers.size() != doas_deg.size()) throw ConfigError("one power per source is required");
  for (std::size_t q = 0; q < doas_deg.size(); ++q) {
    if (!std::isfinite(doas_deg[q])) throw ConfigError("non-finite DOA");
    if (!cfg.in_domain(doas_deg[q])) throw ConfigError("DOA outside the angular domain: " + std::to_string(doas_deg[q]));
    if (q > 0 && !(doas_deg[q] > doas_deg[q - 1])) throw ConfigError("DOAs must be strictly increasing");
    if (!(powers[q] > 0.0)) throw ConfigError("source powers must be positive");
  }
  if (!(noise_power >= 0.0)) throw ConfigError("noise power must be non-negative");
}

SourceSet SourceSet::equal_power(std::vector<double> doas_deg, double snr_db) {
  std::sort(doas_deg.begin(), doas_deg.end());
  SourceSet s;
  s.powers.assign(doas_deg.size(), 1.0);
  s.doas_deg = std::move(doas_deg);
  s.noise_power = snr_db_to_noise_power(snr_db);
  return s;
}

SourceSet SourceSet::noiseless(std::vector<double> doas_deg) {
  std::sort(doas_deg.begin(), doas_deg.end());
  SourceSet s;
  s.powers.assign(doas_deg.size(), 1.0);
  s.doas_deg = std::move(doas_deg);
  return s;
}

double snr_db_to_noise_power(double snr_db, double signal_power) {
  return signal_power * std::pow(10.0, -snr_db / 10.0);
}

Eigen::VectorXcd steering_vector(const ArrayConfig& cfg, double theta_deg) {
  const double phase = 2.0 * std::numbers::pi * cfg.spacing_wavelengths * std::sin(deg_to_rad(theta_deg));
  Eigen::VectorXcd a(cfg.num_elements);
  a(0) = cd(1.0, 0.0);
  for (int m = 1; m < cfg.num_elements; ++m) a(m) = std::polar(1.0, phase * m);
  return a;
}

Eigen::MatrixXcd steering_matrix(const ArrayConfig& cfg, const std::vector<double>& doas_deg) {
  Eigen::MatrixXcd a(cfg.num_elements, static_cast<Eigen::Index>(doas_deg.size()));
  for (std::size_t q = 0; q < doas_deg.size(); ++q) a.col(static_cast<Eigen::Index>(q)) = steering_vector(cfg, doas_deg[q]);
  return a;
}

Eigen::VectorXcd steering_derivative(const ArrayConfig& cfg, double theta_deg) {
  const double theta = deg_to_rad(theta_deg);
  const double dphase = 2.0 * std::numbers::pi * cfg.spacing_wavelengths * std::cos(theta);
  Eigen::VectorXcd a = steering_vector(cfg, theta_deg);
  for (int m = 0; m < cfg.num_elements; ++m) a(m) *= cd(0.0, dphase * m);
  return a;
}

namespace {

cd circular_gaussian(RngStream& rng, double variance) {
  const double s = std::sqrt(variance / 2.0);
  const double re = rng.normal();
  const double im = rng.normal();
  return {s * re, s * im};
}

}  // namespace

SnapshotBatch synth_snapshots(const ArrayConfig& cfg, const SourceSet& src, int snapshots, std::uint64_t seed) {
  cfg.validate();
  if (src.size() == 0) throw ConfigError("synth_snapshots needs at least one source");
  src.validate(cfg);
  if (snapshots < 1) throw ConfigError("snapshot count must be positive");

  const Eigen::MatrixXcd a = steering_matrix(cfg, src.doas_deg);
  const int m_count = cfg.num_elements;
  const auto q_count = static_cast<Eigen::Index>(src.size());

  RngStream rng(seed);
  SnapshotBatch batch;
  batch.samples.resize(m_count, snapshots);
  Eigen::VectorXcd s(q_count);
  for (int t = 0; t < snapshots; ++t) {
    for (Eigen::Index q = 0; q < q_count; ++q) s(q) = circular_gaussian(rng, src.powers[static_cast<std::size_t>(q)]);
    auto y = batch.samples.col(t);
    y.noalias() = a * s;
    if (src.noise_power > 0.0) {
      for (int m = 0; m < m_count; ++m) y(m) += circular_gaussian(rng, src.noise_power);
    }
  }
  return batch;
}

CovarianceMatrix sample_covariance(const SnapshotBatch& batch) {
  const int t = batch.snapshot_count();
  if (t < 1) throw ConfigError("sample covariance needs at least one snapshot");
  CovarianceMatrix r = batch.samples * batch.samples.adjoint();
  r /= static_cast<double>(t);
  // Enforce exact Hermitian symmetry.
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    r(i, i) = cd(r(i, i).real(), 0.0);
    for (Eigen::Index j = i + 1; j < r.cols(); ++j) r(j, i) = std::conj(r(i, j));
  }
  return r;
}

CovarianceMatrix analytic_covariance(const ArrayConfig& cfg, const SourceSet& src) {
  cfg.validate();
  src.validate(cfg);
  const int m_count = cfg.num_elements;
  CovarianceMatrix r = CovarianceMatrix::Zero(m_count, m_count);
  for (std::size_t q = 0; q < src.size(); ++q) {
    const Eigen::VectorXcd a = steering_vector(cfg, src.doas_deg[q]);
    r.noalias() += src.powers[q] * (a * a.adjoint());
  }
  r.diagonal().array() += src.noise_power;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    r(i, i) = cd(r(i, i).real(), 0.0);
    for (Eigen::Index j = i + 1; j < r.cols(); ++j) r(j, i) = std::conj(r(i, j));
  }
  return r;
}

Eigen::VectorXd extract_features(const CovarianceMatrix& r) {
  if (r.rows() != r.cols()) throw ConfigError("covariance matrix must be square");
  const Eigen::Index m = r.rows();
  const Eigen::Index half = m * (m - 1) / 2;
  Eigen::VectorXd f(2 * half);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j, ++k) {
      f(k) = r(i, j).real();
      f(half + k) = r(i, j).imag();
    }
  }
  return f;
}

Eigen::VectorXd sample_features(const ArrayConfig& cfg, const SourceSet& src, int snapshots, std::uint64_t seed) {
  return extract_features(sample_covariance(synth_snapshots(cfg, src, snapshots, seed)));
}

void apply_scaling(FeatureScaling scaling, Eigen::Ref<Eigen::VectorXd> features) {
  if (scaling == FeatureScaling::unit_norm) {
    const double n = features.norm();
    if (n > 0.0) features /= n;
  }
}

const char* to_string(FeatureScaling scaling) {
  return scaling == FeatureScaling::unit_norm ? "unit_norm" : "none";
}

FeatureScaling feature_scaling_from_string(const std::string& name) {
  if (name == "unit_norm") return FeatureScaling::unit_norm;
  if (name == "none") return FeatureScaling::none;
  throw ConfigError("unknown feature scaling: " + name);
}

bool is_hermitian(const CovarianceMatrix& r, double rel_tol) {
  if (r.rows() != r.cols()) return false;
  const double scale = std::max(r.norm(), 1e-300);
  return (r - r.adjoint()).norm() <= rel_tol * scale;
}

}  // namespace treedoa
