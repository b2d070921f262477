#include <doctest.h>

#include <cmath>
#include <random>

#include "lnsr/errors.hpp"
#include "lnsr/ops.hpp"
#include "support/gradcheck.hpp"

using namespace lnsr;
using testsupport::gradcheck;
using testsupport::random_tensor;

TEST_CASE("matmul examples") {
  auto eye = Tensor::matrix({{1, 0}, {0, 1}});
  auto a = Tensor::matrix({{1, 2}, {3, 4}});
  auto p = matmul(eye, a);
  CHECK(std::vector<double>(p.data().begin(), p.data().end()) == std::vector<double>{1, 2, 3, 4});

  auto c = matmul(a, Tensor::matrix({{5}, {6}}));
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.at(0, 0) == 17.0);
  CHECK(c.at(1, 0) == 39.0);

  auto z = matmul(Tensor::zeros({3, 2}), a);
  for (double v : z.data()) CHECK(v == 0.0);
}

TEST_CASE("matmul shape error names both shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax, layer norm and cross-entropy closed forms") {
  auto s = softmax_rows(Tensor::vector({0.0, 0.0}));
  CHECK(s.at(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.at(1) == doctest::Approx(0.5).epsilon(1e-15));

  std::mt19937_64 rng(3);
  auto x = random_tensor({4, 7}, rng, 5.0);
  auto sm = softmax_rows(x);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 7; ++c) total += sm.at(r, c);
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }

  const std::vector<std::uint8_t> keys{1, 1, 0};
  auto masked = softmax_rows(Tensor::matrix({{1, 2, 3}}), keys);
  CHECK(masked.at(0, 2) == 0.0);
  CHECK(masked.at(0, 0) + masked.at(0, 1) == doctest::Approx(1.0));

  auto ln = layer_norm_rows(Tensor::matrix({{3, 3, 3, 3}}), Tensor::filled({4}, 1.0), Tensor::zeros({4}));
  for (double v : ln.data()) CHECK(v == 0.0);

  CHECK(cross_entropy(Tensor::vector({0.0, 0.0}), 0).item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(cross_entropy(Tensor::vector({0.0, 0.0}), 2), IndexError);
}

TEST_CASE("empty reductions are shape errors") {
  const std::vector<std::uint8_t> none{0, 0};
  CHECK_THROWS_AS(mean_rows_masked(Tensor::zeros({2, 3}), none), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);
  CHECK_THROWS_AS(embedding(Tensor::zeros({3, 2}), std::vector<std::size_t>{}), ShapeError);
  CHECK_THROWS_AS(embedding(Tensor::zeros({3, 2}), std::vector<std::size_t>{3}), IndexError);
}

TEST_CASE("backward examples") {
  auto x = Tensor::vector({1, 2, 3}, true);
  auto g = backward(sum(mul(x, x)));
  CHECK(g.at(x) == std::vector<double>{2, 4, 6});

  auto a = Tensor::matrix({{1, 2}, {3, 4}});
  auto v = Tensor::from({2, 1}, {0.5, -1.0}, true);
  auto ga = backward(sum(matmul(a, v)));
  CHECK(ga.at(v) == std::vector<double>{4, 6});
  CHECK_FALSE(ga.contains(a));
  CHECK(ga.size() == 1);
}

TEST_CASE("backward rejects non-scalar losses") {
  auto x = Tensor::vector({1, 2}, true);
  CHECK_THROWS_AS(backward(scale(x, 2.0)), ContractError);
}

TEST_CASE("gradients accumulate until zero_grads") {
  auto x = Tensor::vector({1, 2}, true);
  backward(sum(mul(x, x)));
  auto g = backward(sum(mul(x, x)));
  CHECK(g.at(x) == std::vector<double>{4, 8});
  std::vector<Tensor> leaves{x};
  zero_grads(leaves);
  CHECK(backward(sum(x)).at(x) == std::vector<double>{1, 1});
}

TEST_CASE("shared subexpressions are visited once") {
  auto x = Tensor::vector({3.0}, true);
  auto y = mul(x, x);
  auto z = add(y, y);  // 2x^2
  CHECK(backward(sum(z)).at(x)[0] == doctest::Approx(12.0));
}

TEST_CASE("non-finite outputs are rejected") {
  CHECK_THROWS_AS(scale(Tensor::vector({1e308}), 10.0), std::domain_error);
}

TEST_CASE("gradient check for every primitive") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 3; ++trial) {
    auto a = random_tensor({3, 4}, rng);
    auto b = random_tensor({4, 2}, rng);
    auto c = random_tensor({3, 4}, rng);
    auto bias = random_tensor({4}, rng);
    auto gain = random_tensor({4}, rng);
    auto w = random_tensor({3, 2}, rng);
    const std::vector<std::uint8_t> mask{1, 0, 1};
    const std::vector<double> maskf{1.0, 0.0, 1.0};
    const std::vector<std::size_t> ids{2, 0, 2, 1};
    const std::vector<double> target{0.3, -0.2, 1.0, 0.0};

    CHECK(gradcheck([&] { return sum(mul(matmul(a, b), matmul(a, b))); }, {a, b}) <= 1e-5);
    CHECK(gradcheck([&] { return sum(mul(transpose(a), transpose(c))); }, {a, c}) <= 1e-5);
    CHECK(gradcheck([&] { return squared_norm(sub(add(a, c), mul(a, c))); }, {a, c}) <= 1e-5);
    CHECK(gradcheck([&] { return sum(mul(scale(a, -1.7), c)); }, {a, c}) <= 1e-5);
    CHECK(gradcheck([&] { return squared_norm(add_row(a, bias)); }, {a, bias}) <= 1e-5);
    CHECK(gradcheck([&] { return sum(mul(gelu(a), c)); }, {a}) <= 1e-5);
    CHECK(gradcheck([&] { return sum(mul(lnsr::tanh(a), c)); }, {a}) <= 1e-5);
    CHECK(gradcheck([&] { return sum(mul(softmax_rows(a), c)); }, {a}) <= 1e-5);
    CHECK(gradcheck([&] { return sum(mul(softmax_rows(transpose(a), mask), transpose(c))); }, {a}) <= 1e-5);
    CHECK(gradcheck([&] { return sum(mul(layer_norm_rows(a, gain, bias), c)); }, {a, gain, bias}) <= 1e-5);
    CHECK(gradcheck([&] { return squared_norm(embedding(w, ids)); }, {w}) <= 1e-5);
    CHECK(gradcheck([&] { return mean(mul(a, c)); }, {a, c}) <= 1e-5);
    CHECK(gradcheck([&] { return squared_norm(slice_cols(a, 1, 2)); }, {a}) <= 1e-5);
    CHECK(gradcheck([&] { return sum(mul(concat_cols({slice_cols(a, 2, 2), slice_cols(a, 0, 2)}), c)); }, {a}) <=
          1e-5);
    CHECK(gradcheck([&] { return squared_norm(mask_rows(a, maskf)); }, {a}) <= 1e-5);
    CHECK(gradcheck([&] { return squared_norm(mean_rows_masked(a, mask)); }, {a}) <= 1e-5);
    CHECK(gradcheck([&] { return cross_entropy(mean_rows_masked(a, mask), 3); }, {a}) <= 1e-5);
    CHECK(gradcheck([&] { return mse(mean_rows_masked(a, mask), target); }, {a}) <= 1e-5);
  }
}

TEST_CASE("dropout is identity at rate 0 and gradient-correct otherwise") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({3, 3}, rng);
  std::mt19937_64 drop(1);
  auto same = dropout(x, 0.0, drop);
  CHECK(std::vector<double>(same.data().begin(), same.data().end()) ==
        std::vector<double>(x.data().begin(), x.data().end()));
  CHECK(gradcheck(
            [&] {
              std::mt19937_64 r(9);  // fixed mask across evaluations
              return squared_norm(dropout(x, 0.4, r));
            },
            {x}) <= 1e-5);
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(21);
  auto a = random_tensor({3, 3}, rng);
  auto b = random_tensor({3, 3}, rng);
  const double alpha = 0.7, beta = -2.3;
  auto l1 = [&] { return squared_norm(matmul(a, b)); };
  auto l2 = [&] { return sum(gelu(mul(a, b))); };
  std::vector<Tensor> leaves{a, b};
  zero_grads(leaves);
  const auto g1 = backward(l1()).at(a);
  zero_grads(leaves);
  const auto g2 = backward(l2()).at(a);
  zero_grads(leaves);
  const auto gc = backward(add(scale(l1(), alpha), scale(l2(), beta))).at(a);
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(std::abs(gc[i] - (alpha * g1[i] + beta * g2[i])) <= 1e-12);
}

TEST_CASE("identical inputs give bit-identical outputs and gradients") {
  auto run = [] {
    std::mt19937_64 rng(77);
    auto a = random_tensor({4, 4}, rng);
    auto out = layer_norm_rows(gelu(matmul(a, a)), Tensor::filled({4}, 1.0), Tensor::zeros({4}));
    auto loss = squared_norm(softmax_rows(out));
    auto g = backward(loss).at(a);
    return std::make_pair(loss.item(), g);
  };
  CHECK(run() == run());
}

TEST_CASE("detach and reshape") {
  auto x = Tensor::vector({1, 2, 3, 4}, true);
  auto d = x.detach();
  CHECK_FALSE(d.requires_grad());
  auto r = x.reshape({2, 2});
  CHECK(r.shape() == Shape{2, 2});
  CHECK(backward(sum(mul(r, r))).at(x) == std::vector<double>{2, 4, 6, 8});
  CHECK_THROWS_AS(x.reshape({3}), ShapeError);
}
