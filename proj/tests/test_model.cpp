#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wclab/model.hpp"

using namespace wclab;

namespace {

TwoLayerParams random_two_layer(int M, int d, double c, bool both, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  TwoLayerParams p;
  p.A.resize(M, d);
  p.v.resize(M);
  p.c = c;
  p.train_second_layer = both;
  for (int j = 0; j < M; ++j) {
    for (int k = 0; k < d; ++k) p.A(j, k) = gauss(rng);
    p.v[j] = gauss(rng);
  }
  return p;
}

ThreeLayerParams random_three_layer(int M1, int M2, int d, double c, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ThreeLayerParams p;
  p.A1.resize(M1, d);
  p.A2.resize(M2, M1);
  p.v.resize(M2);
  p.c = c;
  for (int j = 0; j < M1; ++j)
    for (int k = 0; k < d; ++k) p.A1(j, k) = gauss(rng);
  for (int i = 0; i < M2; ++i) {
    for (int j = 0; j < M1; ++j) p.A2(i, j) = gauss(rng);
    p.v[i] = gauss(rng);
  }
  return p;
}

Vector random_vec(Eigen::Index n, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = gauss(rng);
  return x;
}

const Activation kSigmoid{Activation::Kind::sigmoid};

}  // namespace

TEST_CASE("forward closed-form cases", "[model]") {
  TwoLayerParams p;
  p.A = Matrix::Zero(1, 1);
  p.v = Vector::Constant(1, 2.0);
  p.c = 1.0;
  CHECK(forward(p, kSigmoid, Vector::Zero(1)) == Catch::Approx(1.0).margin(1e-15));

  TwoLayerParams q;
  q.A = Matrix::Zero(4, 3);
  q.v = Vector::Ones(4);
  q.c = 0.5;
  CHECK(forward(q, kSigmoid, random_vec(3, 1)) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("forward matches a term-by-term summation oracle", "[model]") {
  TwoLayerParams p = random_two_layer(3, 2, 0.6, true, 11);
  Vector x = random_vec(2, 12);
  double expected = 0.0;
  for (int j = 0; j < 3; ++j) {
    double z = 0.0;
    for (int k = 0; k < 2; ++k) z += p.A(j, k) * x[k];
    expected += p.v[j] / (1.0 + std::exp(-z));
  }
  expected /= std::pow(3.0, 0.6);
  CHECK(forward(p, kSigmoid, x) == Catch::Approx(expected).margin(1e-14));
}

TEST_CASE("grad_f closed forms at zero", "[model]") {
  TwoLayerParams p = random_two_layer(4, 3, 0.7, true, 2);
  p.A.setZero();
  Vector x = random_vec(3, 3);
  Vector g = grad_f(p, kSigmoid, x);
  const double sc = std::pow(4.0, -0.7);
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 3; ++k)
      CHECK(g[j * 3 + k] == Catch::Approx(sc * p.v[j] * 0.25 * x[k]).margin(1e-14));

  // x = 0 kills the first-layer block, second layer sees sigma(0)
  TwoLayerParams q = random_two_layer(4, 3, 0.7, true, 4);
  Vector gz = grad_f(q, kSigmoid, Vector::Zero(3));
  for (int i = 0; i < 12; ++i) CHECK(gz[i] == 0.0);
  for (int j = 0; j < 4; ++j)
    CHECK(gz[12 + j] == Catch::Approx(std::pow(4.0, -0.7) * 0.5).margin(1e-14));
}

TEST_CASE("grad_f matches central finite differences", "[model]") {
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    bool both = seed % 2 == 0;
    TwoLayerParams p = random_two_layer(5, 4, 0.55, both, 100 + seed);
    Vector x = random_vec(4, 200 + seed);
    Vector g = grad_f(p, kSigmoid, x);
    Vector flat = flatten(p);
    for (Eigen::Index i = 0; i < flat.size(); ++i) {
      Vector up = flat, dn = flat;
      up[i] += h;
      dn[i] -= h;
      double fd = (forward(unflatten(up, p), kSigmoid, x) -
                   forward(unflatten(dn, p), kSigmoid, x)) /
                  (2 * h);
      REQUIRE(std::abs(g[i] - fd) < 1e-7);
    }
  }
}

TEST_CASE("hvp_f trivial cases and finite differences", "[model]") {
  TwoLayerParams p = random_two_layer(4, 3, 0.5, true, 21);
  Vector x0 = Vector::Zero(3);
  Vector u = random_vec(p.flat_dim(), 22);
  CHECK(hvp_f(p, kSigmoid, x0, u).norm() == 0.0);  // x = 0 kills every block
  Vector x = random_vec(3, 23);
  CHECK(hvp_f(p, kSigmoid, x, Vector::Zero(p.flat_dim())).norm() == 0.0);

  const double h = 1e-5;
  Vector flat = flatten(p);
  Vector hv = hvp_f(p, kSigmoid, x, u);
  Vector fd = (grad_f(unflatten(flat + h * u, p), kSigmoid, x) -
               grad_f(unflatten(flat - h * u, p), kSigmoid, x)) /
              (2 * h);
  CHECK((hv - fd).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("hvp_f is linear and symmetric", "[model]") {
  TwoLayerParams p = random_two_layer(6, 4, 0.8, true, 31);
  Vector x = random_vec(4, 32);
  Vector u = random_vec(p.flat_dim(), 33);
  Vector w = random_vec(p.flat_dim(), 34);
  Vector lin = hvp_f(p, kSigmoid, x, 2.0 * u - 3.0 * w);
  Vector composed = 2.0 * hvp_f(p, kSigmoid, x, u) - 3.0 * hvp_f(p, kSigmoid, x, w);
  CHECK((lin - composed).lpNorm<Eigen::Infinity>() < 1e-12);
  double hw_u = hvp_f(p, kSigmoid, x, w).dot(u);
  double hu_w = hvp_f(p, kSigmoid, x, u).dot(w);
  CHECK(std::abs(hw_u - hu_w) < 1e-10);
}

TEST_CASE("three-layer forward and gradient", "[model]") {
  ThreeLayerParams p = random_three_layer(3, 2, 2, 0.5, 41);
  p.A1.setZero();
  double expected = 0.5 * p.v.sum() / std::pow(2.0, 0.5);
  CHECK(forward(p, kSigmoid, random_vec(2, 42)) == Catch::Approx(expected).margin(1e-14));
  Vector g = grad_f(p, kSigmoid, random_vec(2, 43));
  for (int i = 0; i < 2; ++i)
    CHECK(g[6 + i] == Catch::Approx(0.5 / std::pow(2.0, 0.5)).margin(1e-14));

  ThreeLayerParams q = random_three_layer(3, 2, 2, 0.6, 44);
  Vector x = random_vec(2, 45);
  Vector grad = grad_f(q, kSigmoid, x);
  Vector flat = flatten(q);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < flat.size(); ++i) {
    Vector up = flat, dn = flat;
    up[i] += h;
    dn[i] -= h;
    double fd =
        (forward(unflatten(up, q), kSigmoid, x) - forward(unflatten(dn, q), kSigmoid, x)) /
        (2 * h);
    REQUIRE(std::abs(grad[i] - fd) < 1e-7);
  }

  Vector u = random_vec(q.flat_dim(), 46);
  Vector hv = hvp_f(q, kSigmoid, x, u);
  Vector fd_h = (grad_f(unflatten(flat + h * u, q), kSigmoid, x) -
                 grad_f(unflatten(flat - h * u, q), kSigmoid, x)) /
                (2 * h);
  CHECK((hv - fd_h).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("flatten uses row-major first-layer order", "[model]") {
  TwoLayerParams p;
  p.A.resize(2, 2);
  p.A << 1, 2, 3, 4;
  p.v.resize(2);
  p.v << 5, 6;
  Vector flat = flatten(p);
  for (int i = 0; i < 6; ++i) CHECK(flat[i] == i + 1);

  TwoLayerParams back = unflatten(flat, p);
  CHECK(back.A == p.A);
  CHECK(back.v == p.v);

  // index of dA_{jk} is (j-1)d + k in 1-based terms; perturb and compare
  TwoLayerParams r = random_two_layer(3, 4, 0.5, true, 51);
  Vector rf = flatten(r);
  int j = 2, k = 3;  // 1-based
  Eigen::Index idx = (j - 1) * 4 + (k - 1);
  rf[idx] += 1.0;
  TwoLayerParams pert = unflatten(rf, r);
  CHECK(pert.A(j - 1, k - 1) == r.A(j - 1, k - 1) + 1.0);
  CHECK_THROWS_AS(unflatten(Vector::Zero(5), r), std::invalid_argument);
}

TEST_CASE("forward scaling law in c", "[model]") {
  TwoLayerParams p = random_two_layer(7, 3, 0.5, true, 61);
  Vector x = random_vec(3, 62);
  TwoLayerParams q = p;
  q.c = 0.9;
  double lhs = forward(p, kSigmoid, x);
  double rhs = forward(q, kSigmoid, x) * std::pow(7.0, 0.9 - 0.5);
  CHECK(lhs == Catch::Approx(rhs).margin(1e-13));
}

TEST_CASE("activation derivative bounds hold on a dense grid", "[model]") {
  for (auto kind : {Activation::Kind::sigmoid, Activation::Kind::tanh}) {
    Activation act{kind};
    const int n = 1'000'000;
    double max_v = 0, max_d1 = 0, max_d2 = 0;
    for (int i = 0; i <= n; ++i) {
      double u = -50.0 + 100.0 * static_cast<double>(i) / n;
      max_v = std::max(max_v, std::abs(act.value(u)));
      max_d1 = std::max(max_d1, std::abs(act.d1(u)));
      max_d2 = std::max(max_d2, std::abs(act.d2(u)));
    }
    CHECK(max_v <= act.L_sigma() + 1e-12);
    CHECK(max_d1 <= act.L_sigma_prime() + 1e-12);
    CHECK(max_d2 <= act.L_sigma_second() + 1e-12);
  }
}

TEST_CASE("sigmoid second-derivative constant matches the analytic value", "[model]") {
  // max |sigma''| = 1/(6 sqrt 3) at sigma = (3 - sqrt 3)/6
  CHECK(kSigmoid.L_sigma_second() ==
        Catch::Approx(1.0 / (6.0 * std::sqrt(3.0))).epsilon(1e-6));
  CHECK(kSigmoid.L_sigma_second() == Catch::Approx(0.0962).margin(1e-4));
}

TEST_CASE("checkpoint json round-trips exactly", "[model]") {
  TwoLayerParams p = random_two_layer(4, 3, 0.65, true, 71);
  TwoLayerParams back = from_checkpoint_json(to_checkpoint_json(p));
  CHECK(back.A == p.A);
  CHECK(back.v == p.v);
  CHECK(back.c == p.c);
  CHECK(back.train_second_layer == p.train_second_layer);
}

TEST_CASE("dimension mismatches throw", "[model]") {
  TwoLayerParams p = random_two_layer(3, 2, 0.5, true, 81);
  CHECK_THROWS_AS(forward(p, kSigmoid, Vector::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(hvp_f(p, kSigmoid, Vector::Zero(2), Vector::Zero(4)),
                  std::invalid_argument);
}
