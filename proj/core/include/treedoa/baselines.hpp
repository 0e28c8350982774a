#pragma once

#include <Eigen/Core>
#include <vector>

#include "treedoa/array_signal.hpp"

namespace treedoa {

// Eigenvectors of the num_elements - num_sources smallest eigenvalues.
Eigen::MatrixXcd noise_subspace(const CovarianceMatrix& r, int num_sources);

// Coefficients (ascending powers of z) of z^{M-1} a^H(z) C a(z) for a Hermitian
// C: coefficient M-1+k is the sum of the k-th diagonal of C (column - row = k).
std::vector<cd> root_music_polynomial(const Eigen::MatrixXcd& projector);

struct RootMusicResult {
  std::vector<double> doas_deg;  // ascending
  std::vector<cd> selected_roots;
  std::vector<cd> roots;  // every polynomial root
  bool clamped = false;   // some root phase mapped outside [-1, 1] in sin(theta)
};

// Root-MUSIC with the number of sources known. Each root is reflected inside
// the unit circle (z -> 1/conj(z)); roots closest to the circle are taken
// first, and a root whose reflection shares the phase of an already chosen one
// is folded into it.
RootMusicResult root_music(const CovarianceMatrix& r, int num_sources, const ArrayConfig& cfg);

struct MusicSpectrum {
  std::vector<double> grid_deg;
  std::vector<double> spectrum;  // 1 / ||E_n^H a(theta)||^2
  std::vector<double> peaks_deg; // up to num_sources highest local maxima, ascending
};

// Dense-grid MUSIC pseudo-spectrum over the array's angular domain.
MusicSpectrum music_spectrum(const CovarianceMatrix& r, int num_sources, const ArrayConfig& cfg, double grid_step_deg);

// Stochastic (unconditional) Cramer-Rao bound for uncorrelated sources, in deg^2:
//   (sigma_v^2 / 2T) * Re[(D^H P_A^perp D) o (R_s A^H R^-1 A R_s)^T]^-1.
Eigen::MatrixXd crlb_stochastic(const ArrayConfig& cfg, const SourceSet& src, int snapshots);

// Deterministic (conditional) bound with the source powers as the signal
// sample covariance: (sigma_v^2 / 2T) * Re[(D^H P_A^perp D) o R_s^T]^-1, in deg^2.
Eigen::MatrixXd crlb_deterministic(const ArrayConfig& cfg, const SourceSet& src, int snapshots);

}  // namespace treedoa
