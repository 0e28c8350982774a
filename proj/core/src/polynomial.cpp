#include "treedoa/polynomial.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "treedoa/common.hpp"

namespace treedoa {

using cd = std::complex<double>;

namespace {

// Parlett-Reinsch balancing with power-of-two scale factors, so the similarity
// transform introduces no rounding.
void balance(Eigen::MatrixXcd& m) {
  const Eigen::Index n = m.rows();
  constexpr double gamma = 0.95;
  bool changed = true;
  for (int sweep = 0; changed && sweep < 200; ++sweep) {
    changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      double row = 0.0;
      double col = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        row += std::abs(m(i, j));
        col += std::abs(m(j, i));
      }
      if (row == 0.0 || col == 0.0) continue;
      int exponent = 0;
      std::frexp(row / col, &exponent);
      exponent /= 2;
      if (exponent == 0) continue;
      if (std::ldexp(col, exponent) + std::ldexp(row, -exponent) < gamma * (row + col)) {
        m.row(i) *= std::ldexp(1.0, -exponent);
        m.col(i) *= std::ldexp(1.0, exponent);
        changed = true;
      }
    }
  }
}

}  // namespace

cd evaluate_polynomial(std::span<const cd> coeffs, cd z) {
  cd acc(0.0, 0.0);
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * z + *it;
  return acc;
}

std::vector<cd> polynomial_roots(std::span<const cd> coeffs) {
  std::size_t top = coeffs.size();
  while (top > 0 && coeffs[top - 1] == cd(0.0, 0.0)) --top;
  if (top == 0) throw ConfigError("polynomial_roots: zero polynomial");

  std::vector<cd> roots;
  std::size_t low = 0;
  while (low < top - 1 && coeffs[low] == cd(0.0, 0.0)) {
    roots.emplace_back(0.0, 0.0);
    ++low;
  }
  const auto degree = static_cast<Eigen::Index>(top - 1 - low);
  if (degree == 0) return roots;

  const cd lead = coeffs[top - 1];
  Eigen::MatrixXcd companion = Eigen::MatrixXcd::Zero(degree, degree);
  if (degree > 1) companion.diagonal(-1).setOnes();
  for (Eigen::Index k = 0; k < degree; ++k) companion(k, degree - 1) = -coeffs[low + static_cast<std::size_t>(k)] / lead;
  balance(companion);

  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(companion, false);
  if (solver.info() != Eigen::Success) throw RuntimeError("polynomial_roots: eigenvalue iteration failed");
  for (Eigen::Index k = 0; k < degree; ++k) roots.push_back(solver.eigenvalues()(k));
  return roots;
}

}  // namespace treedoa
