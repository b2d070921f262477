#include "lnsr/theory.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "lnsr/errors.hpp"

namespace lnsr::theory {

namespace {

double eval(const ScalarFn& f, std::span<const double> x) {
  const double v = f(x);
  if (!std::isfinite(v)) throw std::domain_error("oracle: function returned a non-finite value");
  return v;
}

McEstimate summarize(double sum, double sum_sq, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double mean = sum / nn;
  double var = (sum_sq - nn * mean * mean) / (nn - 1.0);
  if (var < 0.0) var = 0.0;
  return {mean, std::sqrt(var / nn)};
}

}  // namespace

Vec fd_jacobian(const ScalarFn& f, std::span<const double> x, double h) {
  require(h > 0.0, "fd_jacobian: step must be > 0");
  Vec xp(x.begin(), x.end());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    const double fp = eval(f, xp);
    xp[i] = x[i] - h;
    const double fm = eval(f, xp);
    xp[i] = x[i];
    out[i] = (fp - fm) / (2.0 * h);
  }
  return out;
}

Matrix fd_hessian(const ScalarFn& f, std::span<const double> x, double h) {
  require(h > 0.0, "fd_hessian: step must be > 0");
  const auto d = x.size();
  Matrix H(d);
  Vec xp(x.begin(), x.end());
  const double f0 = eval(f, x);
  auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
    xp[i] += di;
    xp[j] += dj;
    const double v = eval(f, xp);
    xp[i] = x[i];
    xp[j] = x[j];
    return v;
  };
  for (std::size_t i = 0; i < d; ++i) {
    H(i, i) = (at(i, h, i, 0.0) - 2.0 * f0 + at(i, -h, i, 0.0)) / (h * h);
    for (std::size_t j = i + 1; j < d; ++j) {
      const double v = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
      H(i, j) = v;
      H(j, i) = v;
    }
  }
  return H;
}

McEstimate mc_noise_stability(const ScalarFn& f, std::span<const double> x, double sigma, std::size_t n,
                              std::mt19937_64& rng) {
  require(n >= 1000, "mc_noise_stability: need at least 1000 draws");
  require(sigma >= 0.0, "mc_noise_stability: sigma must be >= 0");
  const double f0 = eval(f, x);
  if (sigma == 0.0) return {0.0, 0.0};
  std::normal_distribution<double> nd(0.0, sigma);
  Vec xp(x.size());
  double s = 0.0, s2 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < x.size(); ++i) xp[i] = x[i] + nd(rng);
    const double diff = eval(f, xp) - f0;
    const double v = diff * diff;
    s += v;
    s2 += v * v;
  }
  return summarize(s, s2, n);
}

McEstimate cross_term_mc(std::span<const double> jacobian, const Matrix& hessian, double sigma, std::size_t n,
                         std::mt19937_64& rng) {
  const auto d = jacobian.size();
  if (hessian.n != d) throw ShapeError("cross_term_mc: Jacobian and Hessian sizes differ");
  require(n >= 1000, "cross_term_mc: need at least 1000 draws");
  if (sigma == 0.0) return {0.0, 0.0};
  std::normal_distribution<double> nd(0.0, sigma);
  Vec e(d);
  double s = 0.0, s2 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    for (auto& v : e) v = nd(rng);
    double je = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      je += jacobian[i] * e[i];
      double row = 0.0;
      for (std::size_t j = 0; j < d; ++j) row += hessian(i, j) * e[j];
      quad += e[i] * row;
    }
    const double v = je * 0.5 * quad;
    s += v;
    s2 += v * v;
  }
  return summarize(s, s2, n);
}

TaylorReport taylor_terms(std::span<const double> jacobian, const Matrix& hessian, double sigma) {
  const auto d = jacobian.size();
  if (hessian.n != d) throw ShapeError("taylor_terms: Jacobian and Hessian sizes differ");
  double hmax = 0.0;
  for (double v : hessian.values) hmax = std::max(hmax, std::abs(v));
  const double tol = 1e-8 * std::max(1.0, hmax);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j)
      require(std::abs(hessian(i, j) - hessian(j, i)) <= tol, "taylor_terms: Hessian is not symmetric");

  double j2 = 0.0;
  for (double v : jacobian) j2 += v * v;
  double trace = 0.0, fro2 = 0.0, diag2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    trace += hessian(i, i);
    diag2 += hessian(i, i) * hessian(i, i);
    for (std::size_t j = 0; j < d; ++j) fro2 += hessian(i, j) * hessian(i, j);
  }
  const double offdiag2 = fro2 - diag2;
  const double s2 = sigma * sigma, s4 = s2 * s2;

  TaylorReport r;
  r.sigma = sigma;
  r.r_j = s2 * j2;
  r.r_h_paper = s4 / 4.0 * (trace * trace + offdiag2);
  r.r_h_exact = s4 / 4.0 * (trace * trace + 2.0 * fro2);
  r.claim14_value = s2 / 4.0 * (4.0 * j2 + trace * trace + offdiag2);
  return r;
}

double Quadratic::operator()(std::span<const double> x) const {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    lin += j[i] * x[i];
    double row = 0.0;
    for (std::size_t k = 0; k < j.size(); ++k) row += h(i, k) * x[k];
    quad += x[i] * row;
  }
  return lin + 0.5 * quad;
}

Quadratic random_quadratic(std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Quadratic q{Vec(dim), Matrix(dim)};
  for (auto& e : q.j) e = nd(rng);
  Matrix a(dim);
  for (auto& e : a.values) e = nd(rng);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t k = 0; k < dim; ++k) q.h(i, k) = 0.5 * (a(i, k) + a(k, i));
  return q;
}

double SmoothNet::operator()(std::span<const double> x) const {
  double out = 0.0;
  for (std::size_t r = 0; r < hidden; ++r) {
    double z = c[r];
    for (std::size_t i = 0; i < dim; ++i) z += w[r * dim + i] * x[i];
    out += v[r] * std::tanh(z);
  }
  return out;
}

Vec SmoothNet::gradient(std::span<const double> x) const {
  Vec g(dim, 0.0);
  for (std::size_t r = 0; r < hidden; ++r) {
    double z = c[r];
    for (std::size_t i = 0; i < dim; ++i) z += w[r * dim + i] * x[i];
    const double t = std::tanh(z);
    const double s = v[r] * (1.0 - t * t);
    for (std::size_t i = 0; i < dim; ++i) g[i] += s * w[r * dim + i];
  }
  return g;
}

Matrix SmoothNet::hessian(std::span<const double> x) const {
  Matrix h(dim);
  for (std::size_t r = 0; r < hidden; ++r) {
    double z = c[r];
    for (std::size_t i = 0; i < dim; ++i) z += w[r * dim + i] * x[i];
    const double t = std::tanh(z);
    const double s = -2.0 * v[r] * t * (1.0 - t * t);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t k = 0; k < dim; ++k) h(i, k) += s * w[r * dim + i] * w[r * dim + k];
  }
  return h;
}

SmoothNet random_smooth_net(std::size_t dim, std::size_t hidden, double weight_scale, std::mt19937_64& rng) {
  require(dim >= 1 && hidden >= 1, "random_smooth_net: sizes must be >= 1");
  std::normal_distribution<double> nd;
  SmoothNet net{dim, hidden, Vec(hidden * dim), Vec(hidden), Vec(hidden)};
  const double ws = weight_scale / std::sqrt(static_cast<double>(dim));
  for (auto& e : net.w) e = ws * nd(rng);
  for (auto& e : net.c) e = 0.5 * nd(rng);
  for (auto& e : net.v) e = nd(rng) / std::sqrt(static_cast<double>(hidden));
  return net;
}

TaylorReport verify_claim1(const ScalarFn& f, std::span<const double> x, std::span<const double> jacobian,
                           const Matrix& hessian, double sigma, std::size_t n, std::mt19937_64& rng) {
  auto r = taylor_terms(jacobian, hessian, sigma);
  const auto mc = mc_noise_stability(f, x, sigma, n, rng);
  r.mc_estimate = mc.mean;
  r.mc_se = mc.standard_error;
  r.r_jh_mc = 2.0 * cross_term_mc(jacobian, hessian, sigma, n, rng).mean;
  return r;
}

void write_taylor_csv_header(std::ostream& os) {
  os << "sigma,mc_estimate,mc_se,r_j,r_h_paper,r_h_exact,r_jh_mc,claim14_value\n";
}

void write_taylor_csv_row(std::ostream& os, const TaylorReport& r) {
  const auto old = os.precision(17);
  os << r.sigma << ',' << r.mc_estimate << ',' << r.mc_se << ',' << r.r_j << ',' << r.r_h_paper << ','
     << r.r_h_exact << ',' << r.r_jh_mc << ',' << r.claim14_value << '\n';
  os.precision(old);
}

double spectral_norm_estimate(const LinearMap& apply, const LinearMap& apply_transpose, std::size_t dim,
                              std::size_t iters, std::vector<double>* history) {
  require(iters >= 10, "spectral_norm_estimate: need at least 10 iterations");
  require(dim >= 1, "spectral_norm_estimate: dimension must be >= 1");
  // Fixed, dense start vector so no eigen-direction is missed by symmetry.
  std::mt19937_64 rng(0x5eedu);
  std::normal_distribution<double> nd;
  Vec v(dim);
  for (auto& e : v) e = nd(rng);
  auto normalize = [](Vec& u) {
    double n = 0.0;
    for (double e : u) n += e * e;
    n = std::sqrt(n);
    if (n > 0.0)
      for (auto& e : u) e /= n;
    return n;
  };
  normalize(v);
  double estimate = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    Vec w = apply_transpose(apply(v));  // J^T J v
    const double lambda = normalize(w);
    if (lambda == 0.0) {
      if (history) history->push_back(0.0);
      return 0.0;
    }
    estimate = std::sqrt(lambda);
    if (history) history->push_back(estimate);
    v = std::move(w);
  }
  return estimate;
}

}  // namespace lnsr::theory
