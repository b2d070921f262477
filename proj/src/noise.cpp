#include "lnsr/noise.hpp"

#include <cmath>
#include <span>
#include <vector>

#include "lnsr/errors.hpp"

namespace lnsr {

void NoiseSpec::validate() const {
  if (mode == NoiseMode::none) return;
  if (!(sigma > 0.0)) throw ValidationError("noise.sigma must be > 0");
  if (rel_magnitude && !(*rel_magnitude >= 0.0)) {
    throw ValidationError("noise.rel_magnitude must be >= 0");
  }
}

Tensor sample_standard_noise(const Shape& shape, double sigma, std::mt19937_64& rng) {
  require(sigma > 0.0, "sample_standard_noise: sigma must be > 0");
  std::normal_distribution<double> nd(0.0, sigma);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = nd(rng);
  return Tensor::from(shape, std::move(v));
}

namespace {

double sq_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Multiplier applied to `noise` so that it satisfies the rescaling rule.
double rescale_factor(std::span<const double> noise, std::span<const double> x, double rho,
                      RescaleRule rule) {
  const double xn2 = sq_norm(x);
  if (xn2 == 0.0) return 0.0;
  const double nn2 = sq_norm(noise);
  require(nn2 > 0.0, "rescale_relative: noise has zero norm");
  if (rule == RescaleRule::literal_squared) return rho * xn2 / nn2;
  return rho * std::sqrt(xn2) / std::sqrt(nn2);
}

}  // namespace

Tensor rescale_relative(const Tensor& noise, const Tensor& x, double rho, RescaleRule rule) {
  if (noise.shape() != x.shape()) {
    throw ShapeError("rescale_relative: noise " + shape_str(noise.shape()) + " vs x " +
                     shape_str(x.shape()));
  }
  const double f = rescale_factor(noise.data(), x.data(), rho, rule);
  std::vector<double> out(noise.data().begin(), noise.data().end());
  for (auto& v : out) v *= f;
  return Tensor::from(noise.shape(), std::move(out));
}

Tensor rescale_rows(const Tensor& noise, const Tensor& x, double rho, RescaleGranularity granularity,
                    std::span<const std::uint8_t> valid, RescaleRule rule) {
  if (noise.shape() != x.shape()) {
    throw ShapeError("rescale_rows: noise " + shape_str(noise.shape()) + " vs x " +
                     shape_str(x.shape()));
  }
  const auto m = noise.rows(), n = noise.cols();
  if (!valid.empty() && valid.size() != m) throw ShapeError("rescale_rows: mask length mismatch");
  auto keep = [&](std::size_t i) { return valid.empty() || valid[i] != 0; };

  std::vector<double> nz(noise.data().begin(), noise.data().end());
  std::vector<double> xv(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i) {
    if (keep(i)) continue;
    std::fill_n(nz.begin() + static_cast<std::ptrdiff_t>(i * n), n, 0.0);
    std::fill_n(xv.begin() + static_cast<std::ptrdiff_t>(i * n), n, 0.0);
  }
  if (granularity == RescaleGranularity::per_sequence) {
    const double f = rescale_factor(nz, xv, rho, rule);
    for (auto& v : nz) v *= f;
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      if (!keep(i)) continue;
      std::span<double> row(nz.data() + i * n, n);
      const double f = rescale_factor(row, std::span<const double>(xv.data() + i * n, n), rho, rule);
      for (auto& v : row) v *= f;
    }
  }
  return Tensor::from(noise.shape(), std::move(nz));
}

}  // namespace lnsr
