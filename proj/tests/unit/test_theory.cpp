#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <sstream>

#include "lnsr/encoder.hpp"
#include "lnsr/errors.hpp"
#include "lnsr/ops.hpp"
#include "lnsr/theory.hpp"

using namespace lnsr;
using namespace lnsr::theory;

namespace {

double linear34(std::span<const double> x) { return 3.0 * x[0] + 4.0 * x[1]; }
double sqnorm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

Quadratic diag_quadratic(std::vector<double> d) {
  Quadratic q{Vec(d.size(), 0.0), Matrix(d.size())};
  for (std::size_t i = 0; i < d.size(); ++i) q.h(i, i) = d[i];
  return q;
}

}  // namespace

TEST_CASE("finite-difference Jacobian") {
  for (auto x : {std::vector<double>{0, 0}, std::vector<double>{-3, 7.5}}) {
    auto j = fd_jacobian(linear34, x);
    CHECK(j[0] == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(j[1] == doctest::Approx(4.0).epsilon(1e-9));
  }
  auto g = fd_jacobian(sqnorm, std::vector<double>{1, 2});
  CHECK(std::abs(g[0] - 2.0) <= 1e-6);
  CHECK(std::abs(g[1] - 4.0) <= 1e-6);
  CHECK_THROWS_AS(fd_jacobian(linear34, std::vector<double>{1, 2}, 0.0), ContractError);
  CHECK_THROWS_AS(fd_jacobian([](auto) { return NAN; }, std::vector<double>{1.0}), std::domain_error);
}

TEST_CASE("finite-difference Hessian") {
  auto h = fd_hessian([](std::span<const double> x) { return x[0] * x[0] * x[1]; }, std::vector<double>{1, 1});
  CHECK(std::abs(h(0, 0) - 2.0) <= 1e-4);
  CHECK(std::abs(h(0, 1) - 2.0) <= 1e-4);
  CHECK(std::abs(h(1, 0) - 2.0) <= 1e-4);
  CHECK(std::abs(h(1, 1)) <= 1e-4);

  auto z = fd_hessian(linear34, std::vector<double>{0.3, -0.1});
  for (double v : z.values) CHECK(std::abs(v) <= 1e-6);

  Quadratic q{Vec(3, 0.0), Matrix(3)};
  const double b[9] = {2, -1, 0.5, -1, 3, 0.25, 0.5, 0.25, 1};
  for (int i = 0; i < 9; ++i) q.h.values[i] = b[i];
  auto hq = fd_hessian(q, std::vector<double>{0.2, 0.4, -0.6});
  for (int i = 0; i < 9; ++i) CHECK(std::abs(hq.values[i] - b[i]) <= 1e-6);
}

TEST_CASE("finite differences agree with autodiff on an encoder loss") {
  EncoderConfig cfg;
  cfg.vocab_size = 12;
  cfg.embed_dim = 4;
  cfg.num_layers = 2;
  cfg.num_heads = 2;
  cfg.ffn_dim = 6;
  cfg.max_seq_len = 3;
  cfg.init_std = 0.5;
  auto model = build_encoder(cfg, 3);
  const std::vector<std::size_t> tokens{2, 5, 7};
  // Scalar loss as a function of the noise injected at layer 1.
  auto loss_of = [&](const Tensor& eps) {
    return cross_entropy(forward_with_taps(model, tokens, Injection{1, eps}).logits, 1);
  };
  std::vector<double> x(12, 0.05);
  auto leaf = Tensor::from({3, 4}, x, true);
  const auto autodiff = backward(loss_of(leaf)).at(leaf);
  const auto fd = fd_jacobian([&](std::span<const double> v) {
    return loss_of(Tensor::from({3, 4}, {v.begin(), v.end()})).item();
  }, x);
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    diff += (autodiff[i] - fd[i]) * (autodiff[i] - fd[i]);
    scale += autodiff[i] * autodiff[i];
  }
  CHECK(std::sqrt(diff / scale) <= 1e-5);
}

TEST_CASE("Monte-Carlo noise stability examples") {
  std::mt19937_64 rng(1);
  const std::vector<double> x{0.5, -0.5};
  auto lin = mc_noise_stability(linear34, x, 0.1, 100000, rng);
  CHECK(std::abs(lin.mean - 0.25) <= 3.0 * lin.standard_error);

  auto flat = mc_noise_stability([](auto) { return 2.5; }, x, 0.1, 1000, rng);
  CHECK(flat.mean == 0.0);
  CHECK(flat.standard_error == 0.0);

  auto q = diag_quadratic({2, 4});
  auto est = mc_noise_stability(q, std::vector<double>{0, 0}, 0.1, 200000, rng);
  const double exact = 19.0 * 1e-4;
  CHECK(std::abs(est.mean - exact) <= 3.0 * est.standard_error);
  CHECK(std::abs(est.mean - 9e-4) > 3.0 * est.standard_error);

  CHECK_THROWS_AS(mc_noise_stability(linear34, x, 0.1, 999, rng), ContractError);
  CHECK(mc_noise_stability(linear34, x, 0.0, 1000, rng).mean == 0.0);
}

TEST_CASE("closed-form Taylor terms") {
  auto r = taylor_terms(std::vector<double>{2, 0}, Matrix(2), 0.1);
  CHECK(r.r_j == doctest::Approx(0.04).epsilon(1e-14));
  CHECK(r.r_h_paper == 0.0);
  CHECK(r.r_h_exact == 0.0);

  auto q = diag_quadratic({2, 4});
  auto t = taylor_terms(q.j, q.h, 0.1);
  CHECK(t.r_h_paper == doctest::Approx(9e-4).epsilon(1e-12));
  CHECK(t.r_h_exact == doctest::Approx(1.9e-3).epsilon(1e-12));
  CHECK(t.claim14_value == doctest::Approx(0.01 / 4.0 * 36.0).epsilon(1e-12));

  Matrix asym(2);
  asym(0, 1) = 1.0;
  CHECK_THROWS_AS(taylor_terms(std::vector<double>{0, 0}, asym, 0.1), ContractError);
  CHECK_THROWS_AS(taylor_terms(std::vector<double>{0, 0, 0}, asym, 0.1), ShapeError);
}

TEST_CASE("quadratics have no truncation error") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 3; ++i) {
    auto q = random_quadratic(3, rng);
    const std::vector<double> x{0, 0, 0};
    for (double sigma : {0.2, 0.05}) {
      auto r = verify_claim1(q, x, q.j, q.h, sigma, 100000, rng);
      CHECK(std::abs(r.mc_estimate - r.r_j - r.r_h_exact) <= 3.0 * r.mc_se);
      CHECK(r.r_h_paper != r.r_h_exact);
    }
  }
}

TEST_CASE("cross term vanishes") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    auto q = random_quadratic(4, rng);
    auto est = cross_term_mc(q.j, q.h, 0.5, 100000, rng);
    CHECK(std::abs(est.mean) <= 3.0 * est.standard_error);
  }
  auto q = random_quadratic(4, rng);
  auto zero_j = cross_term_mc(Vec(4, 0.0), q.h, 0.5, 100000, rng);
  CHECK(zero_j.mean == 0.0);
  auto zero_sigma = cross_term_mc(q.j, q.h, 0.0, 1000, rng);
  CHECK(zero_sigma.mean == 0.0);
  CHECK(zero_sigma.standard_error == 0.0);
}

TEST_CASE("Jacobian term dominates as sigma shrinks") {
  std::mt19937_64 rng(4);
  auto net = random_smooth_net(4, 8, 2.0, rng);
  const std::vector<double> x{0.3, -0.2, 0.1, 0.4};
  const auto stream = rng();
  std::vector<double> gaps;
  for (double sigma : {0.1, 0.05, 0.01}) {
    std::mt19937_64 mc(stream);
    auto r = verify_claim1(net, x, net.gradient(x), net.hessian(x), sigma, 200000, mc);
    gaps.push_back(std::abs(r.mc_estimate - r.r_j) / r.mc_estimate);
  }
  CHECK(gaps[0] > gaps[1]);
  CHECK(gaps[1] > gaps[2]);
}

TEST_CASE("smooth network derivatives agree with finite differences") {
  std::mt19937_64 rng(5);
  auto net = random_smooth_net(3, 5, 1.5, rng);
  const std::vector<double> x{0.1, 0.7, -0.4};
  auto g = net.gradient(x);
  auto fg = fd_jacobian(net, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(g[i] - fg[i]) <= 1e-8);
  auto h = net.hessian(x);
  auto fh = fd_hessian(net, x);
  for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(h.values[i] - fh.values[i]) <= 1e-5);
}

TEST_CASE("spectral norm by power iteration") {
  auto mat_map = [](const Eigen::MatrixXd& m) {
    return std::make_pair(
        LinearMap([m](std::span<const double> v) {
          Eigen::VectorXd r = m * Eigen::Map<const Eigen::VectorXd>(v.data(), m.cols());
          return Vec(r.data(), r.data() + r.size());
        }),
        LinearMap([m](std::span<const double> v) {
          Eigen::VectorXd r = m.transpose() * Eigen::Map<const Eigen::VectorXd>(v.data(), m.rows());
          return Vec(r.data(), r.data() + r.size());
        }));
  };
  Eigen::MatrixXd d = Eigen::Vector2d(3, 1).asDiagonal();
  auto [a, at] = mat_map(d);
  CHECK(std::abs(spectral_norm_estimate(a, at, 2, 100) - 3.0) <= 1e-6);

  auto [i, it] = mat_map(Eigen::MatrixXd::Identity(4, 4));
  CHECK(std::abs(spectral_norm_estimate(i, it, 4, 10) - 1.0) <= 1e-12);

  auto [z, zt] = mat_map(Eigen::MatrixXd::Zero(3, 3));
  CHECK(spectral_norm_estimate(z, zt, 3, 10) == 0.0);
  CHECK_THROWS_AS(spectral_norm_estimate(i, it, 4, 9), ContractError);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd m(8, 8);
    for (Eigen::Index r = 0; r < 8; ++r)
      for (Eigen::Index c = 0; c < 8; ++c) m(r, c) = nd(rng);
    const double oracle = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    auto [f, ft] = mat_map(m);
    std::vector<double> history;
    const double est = spectral_norm_estimate(f, ft, 8, 2000, &history);
    CHECK(std::abs(est - oracle) <= 1e-6);
    for (std::size_t k = 1; k < history.size(); ++k) CHECK(history[k] >= history[k - 1] - 1e-12);
  }
}

TEST_CASE("Taylor report CSV layout") {
  std::ostringstream os;
  write_taylor_csv_header(os);
  TaylorReport r;
  r.sigma = 0.1;
  r.r_j = 1.0 / 3.0;
  write_taylor_csv_row(os, r);
  const auto text = os.str();
  CHECK(text.rfind("sigma,mc_estimate,mc_se,r_j,r_h_paper,r_h_exact,r_jh_mc,claim14_value\n", 0) == 0);
  CHECK(text.find("0.33333333333333331") != std::string::npos);
}
