#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "lnsr/errors.hpp"
#include "lnsr/manifold.hpp"

using namespace lnsr;

namespace {

std::vector<double> gaussian_vec(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(d);
  for (auto& x : v) x = nd(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Residual of eps after least-squares projection onto span(basis), via a
// dense QR decomposition independent of the library's Gram-Schmidt.
double projection_residual(const std::vector<std::vector<double>>& basis, std::span<const double> eps) {
  const auto d = eps.size();
  Eigen::MatrixXd a(d, basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j)
    for (std::size_t i = 0; i < d; ++i) a(i, j) = basis[j][i];
  Eigen::VectorXd e = Eigen::Map<const Eigen::VectorXd>(eps.data(), static_cast<Eigen::Index>(d));
  Eigen::VectorXd w = a.colPivHouseholderQr().solve(e);
  return (e - a * w).norm() / e.norm();
}

}  // namespace

TEST_CASE("index construction") {
  auto idx = build_index(Tensor::from({4, 1}, {0, 1, 2, 10}));
  CHECK(idx.size() == 4);
  CHECK(idx.dim() == 1);
  CHECK_THROWS_AS(NeighborIndex(std::vector<double>{}, 0, 1), ContractError);
  CHECK_THROWS_AS(NeighborIndex(std::vector<double>{1.0}, 1, 1), ContractError);
  CHECK_THROWS_AS(NeighborIndex(std::vector<double>{1.0, 2.0, 3.0}, 2, 2), ShapeError);
}

TEST_CASE("knn ordering, ties and exclusion") {
  auto idx = build_index(Tensor::from({4, 1}, {0, 1, 2, 10}));
  auto nn = idx.knn(std::vector<double>{1.5}, 2);
  REQUIRE(nn.size() == 2);
  CHECK(nn[0].row == 1);
  CHECK(nn[1].row == 2);
  CHECK(nn[0].distance == 0.25);

  auto ex = idx.knn(std::vector<double>{2.0}, 3, true);
  for (const auto& n : ex) CHECK(n.row != 2);
  CHECK(ex[0].row == 1);

  CHECK_THROWS_AS(idx.knn(std::vector<double>{2.0}, 4, true), ContractError);
  CHECK_THROWS_AS(idx.knn(std::vector<double>{2.0}, 5), ContractError);
  CHECK_THROWS_AS(idx.knn(std::vector<double>{2.0, 1.0}, 1), ShapeError);
}

TEST_CASE("duplicate rows are retrievable") {
  auto idx = build_index(Tensor::from({3, 2}, {1, 1, 1, 1, 5, 5}));
  auto nn = idx.knn(std::vector<double>{1, 1}, 1, true);
  CHECK(nn[0].row == 1);  // the lower-index duplicate was excluded
  CHECK(nn[0].distance == 0.0);
}

TEST_CASE("knn agrees with a brute-force rescan") {
  std::mt19937_64 rng(4);
  const std::size_t n = 300, d = 6, k = 10;
  std::vector<double> pts;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = gaussian_vec(d, rng);
    pts.insert(pts.end(), v.begin(), v.end());
  }
  NeighborIndex idx(pts, n, d);
  for (int q = 0; q < 25; ++q) {
    auto query = gaussian_vec(d, rng);
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (pts[i * d + j] - query[j]) * (pts[i * d + j] - query[j]);
      all.emplace_back(s, i);
    }
    std::sort(all.begin(), all.end());
    auto nn = idx.knn(query, k);
    for (std::size_t i = 0; i < k; ++i) CHECK(nn[i].row == all[i].second);
  }
}

TEST_CASE("index snapshot round trip") {
  std::mt19937_64 rng(5);
  auto pts = gaussian_vec(40, rng);
  NeighborIndex idx(pts, 10, 4);
  const auto path = std::filesystem::temp_directory_path() / "lnsr_test_index.knn";
  idx.save(path);
  auto back = NeighborIndex::load(path);
  CHECK(back.size() == 10);
  CHECK(back.dim() == 4);
  for (std::size_t i = 0; i < 10; ++i) CHECK(std::ranges::equal(back.row(i), idx.row(i)));
  {
    std::ofstream out(path);
    out << "NOPE\n";
  }
  CHECK_THROWS_AS(NeighborIndex::load(path), ValidationError);
  std::filesystem::remove(path);
}

TEST_CASE("Gram-Schmidt examples") {
  auto b = gram_schmidt({{2, 0, 0}, {1, 1, 0}});
  REQUIRE(b.size() == 2);
  CHECK(b.basis[0] == std::vector<double>{1, 0, 0});
  CHECK(std::abs(b.basis[1][0]) <= 1e-15);
  CHECK(b.basis[1][1] == doctest::Approx(1.0));
  CHECK(b.source_count == 2);

  auto dup = gram_schmidt({{1, 0, 0}, {2, 0, 0}});
  REQUIRE(dup.size() == 1);
  CHECK(dup.basis[0] == std::vector<double>{1, 0, 0});

  CHECK_THROWS_AS(gram_schmidt({{0, 0}, {0, 0}}), DegenerateNeighborhood);
}

TEST_CASE("Gram-Schmidt orthonormality and span") {
  std::mt19937_64 rng(6);
  std::vector<std::vector<double>> vs;
  for (int i = 0; i < 10; ++i) vs.push_back(gaussian_vec(32, rng));
  auto b = gram_schmidt(vs);
  REQUIRE(b.size() == 10);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(std::abs(dot(b.basis[i], b.basis[i]) - 1.0) <= 1e-10);
    for (std::size_t j = i + 1; j < b.size(); ++j) CHECK(std::abs(dot(b.basis[i], b.basis[j])) <= 1e-10);
  }
  for (const auto& v : vs) CHECK(projection_residual(b.basis, v) <= 1e-10);
}

TEST_CASE("in-manifold samples stay in the span") {
  OrthoBasis e1;
  e1.basis = {{1, 0, 0}};
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    auto eps = sample_inmanifold_noise(std::vector<double>{0, 0, 0}, e1, 1.0, rng);
    CHECK(eps.at(1) == 0.0);
    CHECK(eps.at(2) == 0.0);
  }

  std::vector<std::vector<double>> vs;
  for (int i = 0; i < 5; ++i) vs.push_back(gaussian_vec(16, rng));
  auto b = gram_schmidt(vs);
  auto x = gaussian_vec(16, rng);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    auto eps = sample_inmanifold_noise(x, b, 0.3, rng);
    worst = std::max(worst, projection_residual(b.basis, eps.data()));
  }
  CHECK(worst <= 1e-10);

  auto scaled = sample_inmanifold_noise(x, b, 1.0, rng, 0.15);
  CHECK(std::sqrt(dot(scaled.data(), scaled.data())) == doctest::Approx(0.15 * std::sqrt(dot(x, x))));

  CHECK_THROWS_AS(sample_inmanifold_noise(x, OrthoBasis{}, 1.0, rng), ContractError);
}

TEST_CASE("projected coefficients are N(0, sigma^2)") {
  std::mt19937_64 rng(8);
  std::vector<std::vector<double>> vs;
  for (int i = 0; i < 4; ++i) vs.push_back(gaussian_vec(12, rng));
  auto b = gram_schmidt(vs);
  const double sigma = 0.4;
  const std::size_t n = 100000;
  std::vector<double> sum(b.size(), 0.0), sum2(b.size(), 0.0);
  std::vector<double> eps(12);
  for (std::size_t s = 0; s < n; ++s) {
    draw_inmanifold(eps, b, sigma, rng);
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double c = dot(eps, b.basis[j]);
      sum[j] += c;
      sum2[j] += c * c;
    }
  }
  for (std::size_t j = 0; j < b.size(); ++j) {
    const double mean = sum[j] / n;
    const double var = (sum2[j] - n * mean * mean) / (n - 1);
    CHECK(std::abs(mean) <= 4.0 * sigma / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - sigma * sigma) <= 0.05 * sigma * sigma);
  }
}

TEST_CASE("LLE reconstruction error") {
  std::vector<std::vector<double>> two{{1, 2, 0}, {3, 0, 0}};
  CHECK(lle_reconstruction_error(std::vector<double>{2, 1, 0}, two) <= 1e-12);
  CHECK(lle_reconstruction_error(std::vector<double>{0, 0, 5}, two) == doctest::Approx(25.0));

  // Five points on a plane through the origin in R^6.
  std::mt19937_64 rng(9);
  auto u = gaussian_vec(6, rng), v = gaussian_vec(6, rng);
  std::uniform_real_distribution<double> ud(-1, 1);
  auto on_plane = [&] {
    const double a = ud(rng), c = ud(rng);
    std::vector<double> p(6);
    for (std::size_t i = 0; i < 6; ++i) p[i] = a * u[i] + c * v[i];
    return p;
  };
  std::vector<std::vector<double>> nbrs;
  for (int i = 0; i < 5; ++i) nbrs.push_back(on_plane());
  CHECK(lle_reconstruction_error(on_plane(), nbrs) <= 1e-10);
  CHECK_THROWS_AS(lle_reconstruction_error(u, {}), ContractError);
}

TEST_CASE("vocabulary sampler") {
  std::mt19937_64 rng(10);
  std::vector<double> table;
  for (int i = 0; i < 20; ++i) {
    auto v = gaussian_vec(8, rng);
    table.insert(table.end(), v.begin(), v.end());
  }
  InManifoldSampler sampler(Tensor::from({20, 8}, table), 5);
  const std::vector<std::size_t> ids{3, 4, 3};
  auto act = Tensor::from({4, 8}, std::vector<double>(32, 1.0));
  auto eps = sampler.sample(ids, act, 1.0, 0.1, rng);
  CHECK(eps.shape() == Shape{4, 8});
  for (std::size_t t = 0; t < 3; ++t) {
    std::span<const double> row(eps.data().data() + t * 8, 8);
    CHECK(std::sqrt(dot(row, row)) == doctest::Approx(0.1 * std::sqrt(8.0)));
    CHECK(projection_residual(sampler.basis_for(ids[t]).basis, row) <= 1e-10);
  }
  for (std::size_t j = 0; j < 8; ++j) CHECK(eps.at(3, j) == 0.0);
  CHECK(sampler.fallback_count() == 0);

  CHECK_THROWS_AS(InManifoldSampler(Tensor::from({5, 8}, std::vector<double>(40, 0.5)), 5), ValidationError);
}

TEST_CASE("degenerate neighborhoods fall back to Gaussian noise") {
  InManifoldSampler sampler(Tensor::from({6, 2}, std::vector<double>(12, 1.0)), 3);
  std::mt19937_64 rng(11);
  const std::vector<std::size_t> ids{2};
  auto eps = sampler.sample(ids, Tensor::from({1, 2}, {1.0, 1.0}), 1.0, std::nullopt, rng);
  CHECK(sampler.fallback_count() == 1);
  CHECK((eps.at(0, 0) != 0.0 || eps.at(0, 1) != 0.0));
  CHECK_THROWS_AS(sampler.basis_for(2), DegenerateNeighborhood);
}
