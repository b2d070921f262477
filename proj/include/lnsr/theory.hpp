#pragma once

// Numerical oracles for the noise-stability expansion of a scalar function
// f: R^d -> R around x with eps ~ N(0, sigma^2 I):
//
//   E[(f(x+eps) - f(x))^2] ~= R_J + R_H + R_JH
//   R_J  = sigma^2 ||J||^2
//   R_H  = E[(eps^T H eps / 2)^2]
//   R_JH = 2 E[(J eps)(eps^T H eps / 2)]  (vanishes: odd Gaussian moments)
//
// R_H is reported twice. `r_h_exact` is the Gaussian fourth-moment value
// sigma^4/4 (tr(H)^2 + 2||H||_F^2). `r_h_paper` is the published closed form
// sigma^4/4 (tr(H)^2 + ||offdiag(H)||_F^2), which drops the E[eps_i^4]
// excess and one pairing; it is kept as a separate column for comparison.

#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

namespace lnsr::theory {

using ScalarFn = std::function<double(std::span<const double>)>;
using Vec = std::vector<double>;

/// Row-major square matrix.
struct Matrix {
  std::size_t n = 0;
  Vec values;

  Matrix() = default;
  explicit Matrix(std::size_t dim) : n(dim), values(dim * dim, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
};

inline constexpr double kJacobianStep = 1e-5;
inline constexpr double kHessianStep = 1e-3;

Vec fd_jacobian(const ScalarFn& f, std::span<const double> x, double h = kJacobianStep);
Matrix fd_hessian(const ScalarFn& f, std::span<const double> x, double h = kHessianStep);

struct McEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Sample mean of (f(x+eps) - f(x))^2 over n draws; n >= 1000.
McEstimate mc_noise_stability(const ScalarFn& f, std::span<const double> x, double sigma,
                              std::size_t n, std::mt19937_64& rng);

/// Sample mean of (J eps)(eps^T H eps / 2).
McEstimate cross_term_mc(std::span<const double> jacobian, const Matrix& hessian, double sigma,
                         std::size_t n, std::mt19937_64& rng);

struct TaylorReport {
  double sigma = 0.0;
  double mc_estimate = 0.0;
  double mc_se = 0.0;
  double r_j = 0.0;
  double r_h_paper = 0.0;
  double r_h_exact = 0.0;
  double r_jh_mc = 0.0;  // 2 * cross_term_mc mean
  double claim14_value = 0.0;
};

/// Closed-form columns of the report (r_j, r_h_paper, r_h_exact,
/// claim14_value). Throws ContractError when H is not symmetric.
TaylorReport taylor_terms(std::span<const double> jacobian, const Matrix& hessian, double sigma);

/// f(x) = J.x + x^T H x / 2.
struct Quadratic {
  Vec j;
  Matrix h;
  double operator()(std::span<const double> x) const;
};

/// J ~ N(0, 1) entries; H = (A + A^T) / 2 with A ~ N(0, 1).
Quadratic random_quadratic(std::size_t dim, std::mt19937_64& rng);

/// f(x) = v . tanh(W x + c), W is [hidden x dim].
struct SmoothNet {
  std::size_t dim = 0;
  std::size_t hidden = 0;
  Vec w, c, v;

  double operator()(std::span<const double> x) const;
  Vec gradient(std::span<const double> x) const;
  Matrix hessian(std::span<const double> x) const;
};

/// Entries of W ~ N(0, weight_scale^2 / dim), c ~ N(0, 0.25), v ~ N(0, 1 / hidden).
SmoothNet random_smooth_net(std::size_t dim, std::size_t hidden, double weight_scale, std::mt19937_64& rng);

/// Fills every column: closed forms from (J, H) and Monte-Carlo columns from
/// f around x.
TaylorReport verify_claim1(const ScalarFn& f, std::span<const double> x, std::span<const double> jacobian,
                           const Matrix& hessian, double sigma, std::size_t n, std::mt19937_64& rng);

void write_taylor_csv_header(std::ostream& os);
void write_taylor_csv_row(std::ostream& os, const TaylorReport& r);

using LinearMap = std::function<Vec(std::span<const double>)>;

/// sqrt of the top eigenvalue of J^T J by power iteration from a fixed
/// start vector. `history`, when given, receives the per-iteration
/// estimates, which are nondecreasing.
double spectral_norm_estimate(const LinearMap& apply, const LinearMap& apply_transpose, std::size_t dim,
                              std::size_t iters, std::vector<double>* history = nullptr);

}  // namespace lnsr::theory
