#pragma once

#include <vector>

namespace lnsr::linalg {

/// Eigenvalues of a symmetric row-major n x n matrix by cyclic Jacobi
/// rotations, sorted descending.
std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t n, double tol = 1e-14,
                                          std::size_t max_sweeps = 100);

/// Centered sample covariance (divisor n-1) of the rows of an n x d matrix.
std::vector<double> covariance(const std::vector<double>& rows, std::size_t n, std::size_t d);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lnsr::linalg
