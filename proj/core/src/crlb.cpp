#include <Eigen/Dense>
#include <cmath>

#include "treedoa/baselines.hpp"
#include "treedoa/common.hpp"

namespace treedoa {

namespace {

struct BoundTerms {
  Eigen::MatrixXcd a;
  Eigen::MatrixXcd h;  // D^H P_A^perp D
  double scale = 0.0;  // sigma_v^2 / 2T, times (180/pi)^2
};

BoundTerms bound_terms(const ArrayConfig& cfg, const SourceSet& src, int snapshots) {
  cfg.validate();
  src.validate(cfg);
  if (snapshots < 1) throw ConfigError("snapshot count must be positive");
  if (!(src.noise_power > 0.0)) throw ConfigError("the bound needs a positive noise power");
  const auto q = static_cast<Eigen::Index>(src.size());
  const auto m = static_cast<Eigen::Index>(cfg.num_elements);

  BoundTerms t;
  t.a = steering_matrix(cfg, src.doas_deg);
  Eigen::MatrixXcd d(m, q);
  for (Eigen::Index i = 0; i < q; ++i) d.col(i) = steering_derivative(cfg, src.doas_deg[static_cast<std::size_t>(i)]);

  const Eigen::MatrixXcd gram = t.a.adjoint() * t.a;
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(gram);
  if (lu.rank() < q) throw ConfigError("steering matrix is rank deficient (coincident DOAs)");
  const Eigen::MatrixXcd perp = Eigen::MatrixXcd::Identity(m, m) - t.a * lu.solve(t.a.adjoint());
  t.h = d.adjoint() * perp * d;
  const double rad2deg = rad_to_deg(1.0);
  t.scale = src.noise_power / (2.0 * snapshots) * rad2deg * rad2deg;
  return t;
}

Eigen::MatrixXd finish(const Eigen::MatrixXd& fisher, double scale) {
  Eigen::MatrixXd bound = scale * fisher.inverse();
  return 0.5 * (bound + bound.transpose());
}

}  // namespace

Eigen::MatrixXd crlb_stochastic(const ArrayConfig& cfg, const SourceSet& src, int snapshots) {
  const BoundTerms t = bound_terms(cfg, src, snapshots);
  const auto q = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXcd rs = Eigen::MatrixXcd::Zero(q, q);
  for (Eigen::Index i = 0; i < q; ++i) rs(i, i) = src.powers[static_cast<std::size_t>(i)];
  const CovarianceMatrix r = analytic_covariance(cfg, src);
  const Eigen::MatrixXcd rinv_a = r.ldlt().solve(t.a);
  const Eigen::MatrixXcd g = rs * t.a.adjoint() * rinv_a * rs;
  const Eigen::MatrixXd fisher = t.h.cwiseProduct(g.transpose()).real();
  return finish(fisher, t.scale);
}

Eigen::MatrixXd crlb_deterministic(const ArrayConfig& cfg, const SourceSet& src, int snapshots) {
  const BoundTerms t = bound_terms(cfg, src, snapshots);
  const auto q = static_cast<Eigen::Index>(src.size());
  Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(q, q);
  for (Eigen::Index i = 0; i < q; ++i) fisher(i, i) = t.h(i, i).real() * src.powers[static_cast<std::size_t>(i)];
  return finish(fisher, t.scale);
}

}  // namespace treedoa
