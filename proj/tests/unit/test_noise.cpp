#include <doctest.h>

#include <cmath>
#include <random>

#include "lnsr/errors.hpp"
#include "lnsr/noise.hpp"

using namespace lnsr;

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::pair<double, double> mean_var(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, s / (n - 1.0)};
}

}  // namespace

TEST_CASE("standard noise moments") {
  std::mt19937_64 rng(1);
  auto t = sample_standard_noise({1000, 1000}, 1.0, rng);
  auto [m, v] = mean_var(t.data());
  CHECK(std::abs(m) <= 0.005);
  CHECK(std::abs(v - 1.0) <= 0.01);

  auto s = sample_standard_noise({1000, 1000}, kDefaultRelMagnitude, rng);
  auto [m2, v2] = mean_var(s.data());
  CHECK(std::abs(m2) <= 0.005 * kDefaultRelMagnitude);
  CHECK(std::abs(v2 - 0.0025) <= 0.01 * 0.0025);
}

TEST_CASE("standard noise determinism and contract") {
  std::mt19937_64 a(9), b(9);
  auto x = sample_standard_noise({4, 5}, 0.3, a);
  auto y = sample_standard_noise({4, 5}, 0.3, b);
  CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
  CHECK_THROWS_AS(sample_standard_noise({2}, 0.0, a), ContractError);
  CHECK_THROWS_AS(sample_standard_noise({2}, -1.0, a), ContractError);
}

TEST_CASE("Gaussian second and third moments") {
  // E[e_i e_j] = sigma^2 delta_ij and E[e_i e_j e_k] = 0, checked against
  // 4 Monte-Carlo standard errors.
  const std::size_t n = 100000, d = 3;
  const double sigma = 0.7;
  std::mt19937_64 rng(3);
  auto t = sample_standard_noise({n, d}, sigma, rng);
  auto e = t.data();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::vector<double> prod(n);
      for (std::size_t s = 0; s < n; ++s) prod[s] = e[s * d + i] * e[s * d + j];
      auto [m, v] = mean_var(prod);
      const double expected = i == j ? sigma * sigma : 0.0;
      CHECK(std::abs(m - expected) <= 4.0 * std::sqrt(v / n));
      for (std::size_t k = 0; k < d; ++k) {
        std::vector<double> triple(n);
        for (std::size_t s = 0; s < n; ++s) triple[s] = prod[s] * e[s * d + k];
        auto [m3, v3] = mean_var(triple);
        CHECK(std::abs(m3) <= 4.0 * std::sqrt(v3 / n));
      }
    }
  }
}

TEST_CASE("relative rescaling") {
  auto x = Tensor::vector({6.0, 8.0});  // norm 10
  auto noise = Tensor::vector({0.3, -1.2});
  auto out = rescale_relative(noise, x, 0.05);
  CHECK(std::abs(norm(out.data()) - 0.5) <= 1e-12);
  const double cosine = (out.at(0) * noise.at(0) + out.at(1) * noise.at(1)) / (norm(out.data()) * norm(noise.data()));
  CHECK(std::abs(cosine - 1.0) <= 1e-12);

  auto again = rescale_relative(out, x, 0.05);
  for (std::size_t i = 0; i < 2; ++i) CHECK(std::abs(again.at(i) - out.at(i)) <= 1e-15);

  auto zero = rescale_relative(noise, Tensor::vector({0.0, 0.0}), 0.05);
  CHECK(zero.at(0) == 0.0);
  CHECK(zero.at(1) == 0.0);
  CHECK_THROWS_AS(rescale_relative(Tensor::vector({0.0, 0.0}), x, 0.05), ContractError);
  CHECK_THROWS_AS(rescale_relative(Tensor::vector({1.0}), x, 0.05), ShapeError);
}

TEST_CASE("literal squared rule") {
  auto x = Tensor::vector({6.0, 8.0});
  auto noise = Tensor::vector({0.0, 2.0});
  auto out = rescale_relative(noise, x, 0.05, RescaleRule::literal_squared);
  // eta = 0.05 * 100 / 4
  CHECK(out.at(1) == doctest::Approx(2.0 * 1.25));
}

TEST_CASE("row-wise rescaling respects padding and granularity") {
  auto x = Tensor::matrix({{3, 4}, {0, 1}, {9, 9}});
  auto raw = Tensor::matrix({{1, 1}, {2, -1}, {5, 5}});
  const std::vector<std::uint8_t> valid{1, 1, 0};
  auto per_token = rescale_rows(raw, x, 0.1, RescaleGranularity::per_token, valid);
  CHECK(std::hypot(per_token.at(0, 0), per_token.at(0, 1)) == doctest::Approx(0.5));
  CHECK(std::hypot(per_token.at(1, 0), per_token.at(1, 1)) == doctest::Approx(0.1));
  CHECK(per_token.at(2, 0) == 0.0);
  CHECK(per_token.at(2, 1) == 0.0);

  auto per_seq = rescale_rows(raw, x, 0.1, RescaleGranularity::per_sequence, valid);
  CHECK(norm(per_seq.data()) == doctest::Approx(0.1 * std::sqrt(26.0)));
  CHECK(per_seq.at(2, 0) == 0.0);
}

TEST_CASE("noise spec validation") {
  NoiseSpec s;
  CHECK_NOTHROW(s.validate());
  s.sigma = 0.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.sigma = 1.0;
  s.rel_magnitude = -0.1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.mode = NoiseMode::none;
  CHECK_NOTHROW(s.validate());
}
