#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "treedoa/baselines.hpp"
#include "treedoa/common.hpp"
#include "treedoa/polynomial.hpp"

namespace treedoa {

Eigen::MatrixXcd noise_subspace(const CovarianceMatrix& r, int num_sources) {
  if (r.rows() != r.cols()) throw ConfigError("covariance matrix must be square");
  const auto m = static_cast<int>(r.rows());
  if (num_sources < 1 || num_sources >= m) throw ConfigError("number of sources must lie in [1, M-1]");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(r);
  if (eig.info() != Eigen::Success) throw RuntimeError("covariance eigendecomposition failed");
  // Eigenvalues come back in ascending order.
  return eig.eigenvectors().leftCols(m - num_sources);
}

std::vector<cd> root_music_polynomial(const Eigen::MatrixXcd& projector) {
  const Eigen::Index m = projector.rows();
  std::vector<cd> coeffs(static_cast<std::size_t>(2 * m - 1), cd(0.0, 0.0));
  for (Eigen::Index k = -(m - 1); k <= m - 1; ++k) {
    coeffs[static_cast<std::size_t>(k + m - 1)] = projector.diagonal(k).sum();
  }
  return coeffs;
}

namespace {

double wrapped_phase_gap(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  return std::min(d, 2.0 * std::numbers::pi - d);
}

}  // namespace

RootMusicResult root_music(const CovarianceMatrix& r, int num_sources, const ArrayConfig& cfg) {
  cfg.validate();
  if (r.rows() != cfg.num_elements) throw ConfigError("covariance size does not match the array");
  const Eigen::MatrixXcd en = noise_subspace(r, num_sources);
  const Eigen::MatrixXcd projector = en * en.adjoint();

  RootMusicResult out;
  out.roots = polynomial_roots(root_music_polynomial(projector));

  // Reflect every root inside the unit circle; conjugate-reciprocal pairs then
  // coincide.
  std::vector<cd> inside(out.roots.size());
  for (std::size_t i = 0; i < out.roots.size(); ++i) {
    const cd z = out.roots[i];
    inside[i] = std::abs(z) > 1.0 ? 1.0 / std::conj(z) : z;
  }
  std::vector<std::size_t> order(inside.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double da = 1.0 - std::abs(inside[a]);
    const double db = 1.0 - std::abs(inside[b]);
    if (da != db) return da < db;
    return std::abs(out.roots[a]) > std::abs(out.roots[b]);
  });

  constexpr double kSamePhase = 1e-6;
  std::vector<bool> used(inside.size(), false);
  std::vector<double> phases;
  for (std::size_t oi = 0; oi < order.size() && static_cast<int>(phases.size()) < num_sources; ++oi) {
    const std::size_t i = order[oi];
    if (used[i]) continue;
    const double anchor = std::arg(inside[i]);
    double sum = 0.0;
    int count = 0;
    for (std::size_t j = 0; j < inside.size(); ++j) {
      if (used[j]) continue;
      const double pj = std::arg(inside[j]);
      if (wrapped_phase_gap(pj, anchor) < kSamePhase) {
        used[j] = true;
        double delta = pj - anchor;
        if (delta > std::numbers::pi) delta -= 2.0 * std::numbers::pi;
        if (delta < -std::numbers::pi) delta += 2.0 * std::numbers::pi;
        sum += delta;
        ++count;
      }
    }
    phases.push_back(anchor + sum / count);
    out.selected_roots.push_back(inside[i]);
  }

  for (double phase : phases) {
    double s = phase / (2.0 * std::numbers::pi * cfg.spacing_wavelengths);
    if (s > 1.0 || s < -1.0) {
      out.clamped = true;
      s = std::clamp(s, -1.0, 1.0);
    }
    out.doas_deg.push_back(rad_to_deg(std::asin(s)));
  }
  std::sort(out.doas_deg.begin(), out.doas_deg.end());
  return out;
}

MusicSpectrum music_spectrum(const CovarianceMatrix& r, int num_sources, const ArrayConfig& cfg, double grid_step_deg) {
  cfg.validate();
  if (!(grid_step_deg > 0.0)) throw ConfigError("grid step must be positive");
  const Eigen::MatrixXcd en = noise_subspace(r, num_sources);
  MusicSpectrum out;
  const auto points = static_cast<std::size_t>(std::ceil((cfg.theta_max_deg - cfg.theta_min_deg) / grid_step_deg));
  for (std::size_t i = 0; i < points; ++i) {
    const double theta = cfg.theta_min_deg + grid_step_deg * static_cast<double>(i);
    if (theta >= cfg.theta_max_deg) break;
    out.grid_deg.push_back(theta);
    out.spectrum.push_back(1.0 / (en.adjoint() * steering_vector(cfg, theta)).squaredNorm());
  }
  const auto& p = out.spectrum;
  std::vector<std::size_t> peaks;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool left_ok = i == 0 || p[i] > p[i - 1];
    const bool right_ok = i + 1 == p.size() || p[i] >= p[i + 1];
    if (left_ok && right_ok) peaks.push_back(i);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  if (peaks.size() > static_cast<std::size_t>(num_sources)) peaks.resize(static_cast<std::size_t>(num_sources));
  for (std::size_t i : peaks) out.peaks_deg.push_back(out.grid_deg[i]);
  std::sort(out.peaks_deg.begin(), out.peaks_deg.end());
  return out;
}

}  // namespace treedoa
