#pragma once

#include <complex>
#include <span>
#include <vector>

namespace treedoa {

// Roots of sum_k coeffs[k] z^k (ascending powers) from the eigenvalues of the
// balanced companion matrix. Leading zero coefficients are dropped; a zero
// constant term contributes roots at the origin.
std::vector<std::complex<double>> polynomial_roots(std::span<const std::complex<double>> coeffs);

std::complex<double> evaluate_polynomial(std::span<const std::complex<double>> coeffs, std::complex<double> z);

}  // namespace treedoa
