#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "wclab/bounds.hpp"
#include "wclab/lab.hpp"

using namespace wclab;

namespace {

const Activation kSigmoid{Activation::Kind::sigmoid};

Dataset random_dataset(int N, int d, std::uint64_t seed) {
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds;
  ds.X.resize(N, d);
  ds.y.resize(N);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < d; ++k) ds.X(i, k) = gauss(rng);
    ds.y[i] = gauss(rng) > 0 ? 1.0 : -1.0;
  }
  return ds;
}

TwoLayerParams random_params(int M, int d, double c, bool both, std::uint64_t seed) {
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

// forward-order nested-loop re-summation of the pointwise bound
double pointwise_oracle(const std::vector<double>& etas, const std::vector<double>& eps,
                        double alpha, double beta, double L, double N, int t) {
  double total = 0.0;
  for (int j = 0; j < t; ++j) {
    double expo = 0.0;
    for (int s = j + 1; s <= t - 1; ++s)
      expo += 2.0 * etas[s] * (eps[s - 1] + 4.0 * beta / N) + std::pow(etas[s], 1.0 / alpha);
    total += std::exp(expo) * etas[j];
  }
  return 4.0 * L * L / N * total;
}

}  // namespace

TEST_CASE("sampled constants on the all-zero dataset", "[bounds]") {
  Dataset ds;
  ds.X = Matrix::Zero(8, 3);
  ds.y = Vector::Ones(8);
  RiskContext ctx{&ds, LossFn{}, kSigmoid};
  TwoLayerParams w0 = random_params(4, 3, 0.5, true, 1);
  BoundConstants sampled = constants_estimate(ctx, w0, 1.0, 6, 2);
  BoundConstants analytic = constants_analytic(ctx, w0, 1.0);
  // x = 0: only the second-layer block contributes, |grad l| <= Lg' Ls sqrt(M)/M^c
  double cap = ctx.loss.L_g_prime() * ctx.act.L_sigma() * 2.0 / 2.0;
  CHECK(analytic.L == Catch::Approx(cap).margin(1e-14));
  CHECK(sampled.L <= 1.2 * cap + 1e-12);
  CHECK(sampled.provenance == Provenance::sampled);
  CHECK(analytic.provenance == Provenance::analytic);
}

TEST_CASE("sampled constants grow with the sample count and dominate the dense norms",
          "[bounds]") {
  Dataset ds = random_dataset(10, 3, 11);
  RiskContext ctx{&ds, LossFn{}, kSigmoid};
  TwoLayerParams w0 = random_params(3, 3, 0.5, true, 12);
  BoundConstants small = constants_estimate(ctx, w0, 0.8, 6, 13);
  BoundConstants big = constants_estimate(ctx, w0, 0.8, 12, 13);
  CHECK(big.L >= small.L);
  CHECK(big.beta >= small.beta);
  CHECK(big.rho >= small.rho);
  CHECK(big.sample_count == 12);

  TwoLayerParams wide = random_params(900, 3, 0.5, true, 15);  // flat 3600 > guard
  CHECK_THROWS_WITH(constants_estimate(ctx, wide, 1.0, 4, 16),
                    Catch::Matchers::ContainsSubstring("analytic"));
}

TEST_CASE("sampled beta dominates dense Hessian norms at sampled points", "[bounds]") {
  Dataset ds = random_dataset(10, 3, 11);
  RiskContext ctx{&ds, LossFn{}, kSigmoid};
  TwoLayerParams w0 = random_params(3, 3, 0.5, true, 12);
  BoundConstants consts = constants_estimate(ctx, w0, 0.8, 10, 13);
  auto rng = make_rng(14);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector flat0 = flatten(w0);
  double max_norm = 0.0;
  for (int rep = 0; rep < 8; ++rep) {
    Vector dir(flat0.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = gauss(rng);
    TwoLayerParams w = unflatten(flat0 + 0.4 * dir / dir.norm(), w0);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      Matrix H = dense_loss_hessian(ctx, w, i);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (H + H.transpose()));
      max_norm = std::max(max_norm, eig.eigenvalues().cwiseAbs().maxCoeff());
    }
  }
  // points live in the same ball the estimate sampled, generous slack
  CHECK(consts.beta >= 0.6 * max_norm - 1e-8);
}

TEST_CASE("analytic constants upper-bound sampled ones", "[bounds]") {
  Dataset ds = random_dataset(12, 3, 21);
  RiskContext ctx{&ds, LossFn{}, kSigmoid};
  for (bool both : {true, false}) {
    TwoLayerParams w0 = random_params(4, 3, 0.6, both, 22);
    BoundConstants sampled = constants_estimate(ctx, w0, 0.5, 10, 23);
    BoundConstants analytic = constants_analytic(ctx, w0, 0.5);
    CHECK(analytic.L >= sampled.L / 1.2 - 1e-12);
    CHECK(analytic.beta >= sampled.beta / 1.2 - 1e-12);
    CHECK(analytic.rho >= sampled.rho / 1.2 - 1e-12);
  }
}

TEST_CASE("loss increments obey the sampled Lipschitz constant", "[bounds]") {
  Dataset ds = random_dataset(8, 3, 31);
  RiskContext ctx{&ds, LossFn{}, kSigmoid};
  TwoLayerParams w0 = random_params(4, 3, 0.5, true, 32);
  const double radius = 1.0;
  BoundConstants consts = constants_estimate(ctx, w0, radius, 16, 33);
  auto rng = make_rng(34);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector flat0 = flatten(w0);
  auto draw = [&]() {
    Vector dir(flat0.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = gauss(rng);
    return Vector(flat0 + radius * unif(rng) * dir / dir.norm());
  };
  for (int rep = 0; rep < 1000; ++rep) {
    Vector a = draw(), b = draw();
    Eigen::Index i = rep % ds.size();
    double la = loss_at(ctx, unflatten(a, w0), i);
    double lb = loss_at(ctx, unflatten(b, w0), i);
    REQUIRE(std::abs(la - lb) <= consts.L * (a - b).norm() + 1e-12);
  }
}

TEST_CASE("pointwise bound: t=1 and reordering oracle", "[bounds]") {
  BoundReport one = gen_bound_pointwise({0.05}, {}, 0.75, 1.0, 2.0, 1.0, 100.0, 1);
  CHECK(one.value == Catch::Approx(4.0 * 4.0 * 0.05 / 100.0).epsilon(1e-15));

  const int t = 100;
  Schedule sched;
  sched.kind = Schedule::Kind::constant;
  sched.eta = 0.01;
  auto etas = step_sizes(sched, t);
  std::vector<double> eps(t - 1, 0.01);
  BoundReport rep = gen_bound_pointwise(etas, eps, 0.75, 1.0, 1.0, 1.0, 1e4, t);
  double oracle = pointwise_oracle(etas, eps, 0.75, 1.0, 1.0, 1e4, t);
  CHECK(rep.value == Catch::Approx(oracle).epsilon(1e-12));
  CHECK(rep.all_ok());
  CHECK(rep.warnings.size() >= 1);
}

TEST_CASE("pointwise bound collapses to the step-size sum", "[bounds]") {
  // tiny steps make eps, beta/N and eta^{1/alpha} vanish in floating point
  const int t = 50;
  std::vector<double> etas(t, 1e-200), eps(t - 1, 0.0);
  BoundReport rep = gen_bound_pointwise(etas, eps, 0.5, 0.0, 1.0, 1.0, 100.0, t);
  CHECK(rep.value == 4.0 / 100.0 * (1e-200 * t));

  // realistic polylog steps stay within the exp(sum eta^{1/alpha}) envelope
  Schedule p;
  p.kind = Schedule::Kind::polylog;
  p.alpha = 0.75;
  p.horizon = 10000;
  auto poly = step_sizes(p, 10000);
  std::vector<double> zeros(9999, 0.0);
  BoundReport asym = gen_bound_pointwise(poly, zeros, 0.75, 0.0, 1.0, 1.0, 1e6, 10000);
  double base = 4.0 / 1e6 * pairwise_sum(poly);
  double env = 0.0;
  for (double e : poly) env += std::pow(e, 1.0 / 0.75);
  CHECK(asym.value >= base);
  CHECK(asym.value <= base * std::exp(env));
}

TEST_CASE("pointwise bound conditions at their boundaries", "[bounds]") {
  // eta beta = 3/2 exactly passes, a hair more fails
  std::vector<double> etas(2, 0.5), eps(1, 0.0);
  BoundReport at = gen_bound_pointwise(etas, eps, 1.0, 3.0, 1.0, 0.0, 100.0, 2);
  CHECK(at.conditions[0].ok);
  BoundReport over = gen_bound_pointwise({0.5, 0.5 + 1e-9}, eps, 1.0, 3.0, 1.0, 0.0, 100.0, 2);
  CHECK_FALSE(over.conditions[0].ok);

  // strict step condition: exactly 1/2 fails
  // eta (eps + 2b/N) + eta^{1/a} = 0.25*1 + 0.25 = 0.5 with a=1, b=0, eps=1
  BoundReport strict = gen_bound_pointwise({0.25, 0.25}, {1.0}, 1.0, 0.0, 1.0, 0.0, 100.0, 2);
  CHECK_FALSE(strict.conditions[1].ok);
  BoundReport under = gen_bound_pointwise({0.25, 0.25 - 1e-9}, {1.0}, 1.0, 0.0, 1.0, 0.0,
                                          100.0, 2);
  CHECK(under.conditions[1].ok);

  CHECK_THROWS_AS(gen_bound_pointwise(etas, eps, 0.0, 1.0, 1.0, 1.0, 10.0, 2),
                  std::invalid_argument);
}

TEST_CASE("global bound: convex recovery, t=1, geometric oracle", "[bounds]") {
  BoundReport conv = gen_bound_global(0.1, 0.0, 1.0, 100.0, 50);
  CHECK(conv.value == Catch::Approx(0.1).epsilon(1e-15));

  BoundReport single = gen_bound_global(0.3, 0.2, 2.0, 40.0, 1);
  CHECK(single.value == Catch::Approx(2.0 * 0.3 * 4.0 / 40.0).epsilon(1e-15));

  const double eta = 0.01, eps = 0.5, L = 2.0, N = 1000.0;
  const int t = 200;
  BoundReport rep = gen_bound_global(eta, eps, L, N, t);
  const double a = eta * eps / (1.0 - 2.0 * eta * eps);
  double geometric = (std::exp(a * t) - 1.0) / (std::exp(a) - 1.0);
  CHECK(rep.value == Catch::Approx(2.0 * eta * L * L / N * geometric).epsilon(1e-12));

  CHECK_THROWS_AS(gen_bound_global(0.5, 1.0, 1.0, 10.0, 5), std::invalid_argument);

  // 2 eta eps = 1 - 1e-9 passes the strict condition
  BoundReport edge = gen_bound_global(0.5, (1.0 - 1e-9) / 1.0, 1.0, 1e6, 2, 3.0);
  CHECK(edge.conditions[0].ok);
  CHECK(edge.conditions[1].ok);  // eta beta = 1.5 exactly
}

TEST_CASE("global bound is monotone in its arguments", "[bounds]") {
  const double base = gen_bound_global(0.02, 0.3, 1.5, 500.0, 100).value;
  CHECK(gen_bound_global(0.03, 0.3, 1.5, 500.0, 100).value >= base);
  CHECK(gen_bound_global(0.02, 0.4, 1.5, 500.0, 100).value >= base);
  CHECK(gen_bound_global(0.02, 0.3, 2.0, 500.0, 100).value >= base);
  CHECK(gen_bound_global(0.02, 0.3, 1.5, 500.0, 150).value >= base);
  CHECK(gen_bound_global(0.02, 0.3, 1.5, 800.0, 100).value <= base);
}

TEST_CASE("test error bound terms and convex case", "[bounds]") {
  // eps = 0: only generalisation + optimisation remain
  BoundReport conv = test_error_bound(1.0, 100, 0.0, 1.0, 1e4, 1.0, 1.0, 1.0);
  CHECK(conv.terms.at("approximation") == 0.0);
  CHECK(conv.value == Catch::Approx(2.0 * 100.0 / 1e4 + 1.0 / 200.0).epsilon(1e-15));
  CHECK(conv.value == Catch::Approx(2.5 / std::sqrt(1e4)).epsilon(1e-15));

  BoundReport rep = test_error_bound(0.05, 40, 0.1, 1.2, 300.0, 0.7, 0.4, 2.0, 4.0);
  CHECK(rep.terms.at("generalisation") >= 0.0);
  CHECK(rep.terms.at("optimisation") >= 0.0);
  CHECK(rep.terms.at("approximation") >= 0.0);
  double sum = rep.terms.at("generalisation") + rep.terms.at("optimisation") +
               rep.terms.at("approximation");
  CHECK(rep.value == Catch::Approx(sum).epsilon(1e-15));

  // eta beta = 1/2 exactly passes
  BoundReport edge = test_error_bound(0.125, 10, 0.0, 1.0, 100.0, 1.0, 1.0, 1.0, 4.0);
  CHECK(edge.conditions[1].ok);
  BoundReport fail = test_error_bound(0.125, 10, 0.0, 1.0, 100.0, 1.0, 1.0, 1.0, 4.0 + 1e-6);
  CHECK_FALSE(fail.conditions[1].ok);
  CHECK_THROWS_AS(test_error_bound(0.5, 10, 1.0, 1.0, 100.0, 1.0, 1.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("total weight formula, paper value and upper bound", "[bounds]") {
  TwoLayerParams zero;
  zero.A = Matrix::Zero(3, 2);
  zero.v = Vector::Zero(3);
  zero.c = 0.5;
  CHECK(total_weight(zero).value == 0.0);

  DisjointSupportResult ds = disjoint_support_construct(2, 4, 16, 1.0, 1.0, 0.5);
  TotalWeight tw = total_weight(ds.omega_star);
  CHECK(tw.value == Catch::Approx(1.0).margin(1e-12));

  for (int rep = 0; rep < 30; ++rep) {
    TwoLayerParams p = random_params(5, 3, 0.7, true, 400 + rep);
    TotalWeight t = total_weight(p);
    CHECK(t.value <= t.upper_bound + 1e-12);
  }
}

TEST_CASE("interaction max: exact vertex enumeration vs surrogate", "[bounds]") {
  // one-hot v(u) reduces to the single row norm
  Matrix Au = Matrix::Zero(4, 3);
  Au << 1, 2, 3, 0, 1, 0, 2, 2, 2, 1, 1, 1;
  Vector vu = Vector::Zero(4);
  vu[0] = 1.0;
  CHECK(interaction_max(Au, vu, MaxMode::exact) ==
        Catch::Approx(Au.row(0).norm()).margin(1e-14));
  CHECK(g_c_functional(Au, vu, 2.0, 0.5, MaxMode::exact) ==
        Catch::Approx(2.0 / 2.0 * (Au.squaredNorm() + Au.row(0).norm())).margin(1e-12));

  // parallel rows with positive weights: exact equals surrogate
  Matrix par(3, 2);
  par << 1, 2, 2, 4, 0.5, 1;
  Vector vpar = Vector::Ones(3);
  CHECK(interaction_max(par, vpar, MaxMode::exact) ==
        Catch::Approx(interaction_max(par, vpar, MaxMode::surrogate)).margin(1e-12));

  // in general the surrogate dominates
  auto rng = make_rng(55);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix A(6, 3);
    Vector v(6);
    for (int j = 0; j < 6; ++j) {
      for (int k = 0; k < 3; ++k) A(j, k) = gauss(rng);
      v[j] = gauss(rng);
    }
    double exact = interaction_max(A, v, MaxMode::exact);
    double sur = interaction_max(A, v, MaxMode::surrogate);
    REQUIRE(exact <= sur + 1e-12);
    // exact really is the max over sampled sign vectors too
    for (int s = 0; s < 50; ++s) {
      Vector z(6);
      for (int j = 0; j < 6; ++j) z[j] = gauss(rng) > 0 ? 1.0 : -1.0;
      REQUIRE((A.transpose() * z.asDiagonal() * v).norm() <= exact + 1e-12);
    }
  }
  Matrix big = Matrix::Zero(21, 2);
  CHECK_THROWS_AS(interaction_max(big, Vector::Zero(21), MaxMode::exact),
                  std::invalid_argument);
}

TEST_CASE("h functional and its tracked pieces", "[bounds]") {
  Matrix Au = Matrix::Zero(3, 2);
  Vector vu = Vector::Zero(3);
  CHECK(h_functional(Au, vu, 0.0, MaxMode::exact) == 0.0);

  Au << 1, 0, 0, 2, 1, 1;
  CHECK(h_functional(Au, vu, 0.0, MaxMode::exact) ==
        Catch::Approx(Au.squaredNorm()).margin(1e-14));

  auto rng = make_rng(66);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int j = 0; j < 3; ++j) vu[j] = gauss(rng);
  double eta_t = 2.5;
  double expected = Au.squaredNorm() + std::sqrt(eta_t) * vu.norm() +
                    interaction_max(Au, vu, MaxMode::exact);
  CHECK(h_functional(Au, vu, eta_t, MaxMode::exact) == Catch::Approx(expected).margin(1e-13));
}

TEST_CASE("theorem A.1 quantities", "[bounds]") {
  Dataset data = random_dataset(20, 3, 71);
  CovarianceSummary cov = empirical_covariance(data);
  LossFn loss;
  TwoLayerParams w0 = random_params(6, 3, 0.5, true, 72);
  TwoLayerParams star = random_params(6, 3, 0.5, true, 73);

  TheoremA1Inputs in;
  in.w0 = &w0;
  in.omega_star = &star;
  in.v0_inf = w0.v.lpNorm<Eigen::Infinity>();
  in.v_star_inf = star.v.lpNorm<Eigen::Infinity>();
  in.eta_t = 0.0;
  in.R0 = 0.9;
  in.R_star = 0.9;
  BoundReport rep = theorem_a1_quantities(in, cov, kSigmoid, loss,
                                          std::max(in.v0_inf, in.v_star_inf), MaxMode::exact);
  CHECK(rep.terms.at("required_L_v") ==
        Catch::Approx(std::max(in.v0_inf, in.v_star_inf)).margin(1e-14));
  const double Mc = std::pow(6.0, 0.5);
  CHECK(rep.terms.at("lambda") ==
        Catch::Approx(3.0 * rep.terms.at("required_C") / Mc).margin(1e-12));
  CHECK(rep.conditions[0].ok);
}

TEST_CASE("appendix-A worked comparison: stat approx under total weight", "[bounds]") {
  // d=9, s=16, M=256, a1=a2=1, c=3/4, trace=1, eta t at the d/9 boundary
  DisjointSupportResult r = disjoint_support_construct(9, 16, 256, 1.0, 1.0, 0.75, 1.0, 1.0);
  const double Mc = std::pow(256.0, 0.75);
  CHECK(r.h_exact == Catch::Approx(9.0 + 12.0 + 12.0).margin(1e-12));
  double lhs = std::sqrt(1.0) * r.h_exact / Mc;
  CHECK(lhs <= r.tw);
  CHECK(r.tw == Catch::Approx(36.0 / 64.0).margin(1e-14));
  CHECK(lhs == Catch::Approx(33.0 / 64.0).margin(1e-14));
}

TEST_CASE("mu_region thresholds and crossing", "[bounds]") {
  // ||A*||_F = sqrt(M) -> mu = 0 -> green for every c < 1
  for (double c : {0.5, 0.7, 0.99}) {
    MuRegion r = mu_region(std::sqrt(64.0), 64, c);
    CHECK(r.mu == Catch::Approx(0.0).margin(1e-14));
    CHECK(r.region == "green");
  }
  // ||A*||_F = 1 -> mu = 1/2: red when c > 1/2, boundary blue at c = 1/2
  MuRegion red = mu_region(1.0, 64, 0.75);
  CHECK(red.mu == Catch::Approx(0.5).margin(1e-14));
  CHECK(red.region == "red");
  MuRegion edge = mu_region(1.0, 64, 0.5);
  CHECK(edge.region == "blue");  // strict comparison at the boundary
  CHECK(edge.on_boundary);

  // c = 0.75, mu = 0.2 sits between the two thresholds
  double frob = std::pow(64.0, 0.5 - 0.2);
  MuRegion blue = mu_region(frob, 64, 0.75);
  CHECK(blue.mu == Catch::Approx(0.2).margin(1e-12));
  CHECK(blue.region == "blue");

  // crossing at c = 1 - 2 mu
  const double mu = 0.2, c_star = 1.0 - 2.0 * mu;
  MuRegion below = mu_region(frob, 64, c_star - 1e-6);
  MuRegion above = mu_region(frob, 64, c_star + 1e-6);
  CHECK(below.region == "green");
  CHECK(above.region == "blue");
  CHECK_THROWS_AS(mu_region(0.0, 64, 0.5), std::invalid_argument);
}

TEST_CASE("decomposition report identity", "[bounds]") {
  Dataset train = random_dataset(30, 3, 81);
  Dataset test = random_dataset(40, 3, 82);
  RiskContext ctx_train{&train, LossFn{}, kSigmoid};
  RiskContext ctx_test{&test, LossFn{}, kSigmoid};
  TwoLayerParams w0 = init_zero_gaussian(4, 3, 0.5, true, 83);
  GDConfig gd;
  gd.schedule.kind = Schedule::Kind::constant;
  gd.schedule.eta = 0.3;
  gd.t_max = 60;
  gd.eval_every = 20;
  gd.record_stride = 10;
  Trajectory traj = run_gd(ctx_train, &ctx_test, gd, w0);

  BoundReport rep = decomposition_report(ctx_train, ctx_test, traj);
  double reconstructed = rep.terms.at("gen_error") + rep.terms.at("opt_approx_error");
  CHECK(rep.value == Catch::Approx(reconstructed).margin(1e-12));

  // train == test makes the empirical generalisation term vanish
  BoundReport same = decomposition_report(ctx_train, ctx_train, traj);
  CHECK(same.terms.at("gen_error") == Catch::Approx(0.0).margin(1e-13));
}

TEST_CASE("penalized minimizer drives the gradient to tolerance", "[bounds]") {
  Dataset ds = random_dataset(15, 2, 91);
  RiskContext ctx{&ds, LossFn{}, kSigmoid};
  TwoLayerParams w0 = init_zero_gaussian(3, 2, 0.5, false, 92);
  SurrogateResult sur = penalized_minimizer(ctx, w0, 0.05, w0, 0.5, 20000, 1e-8);
  CHECK(sur.grad_norm <= 1e-8);
  CHECK(sur.risk <= empirical_risk(ctx, w0));
}

TEST_CASE("bound report json carries terms and conditions", "[bounds]") {
  BoundReport rep = gen_bound_global(0.1, 0.0, 1.0, 100.0, 5, 2.0);
  std::string j = rep.to_json();
  CHECK(j.find("\"name\"") != std::string::npos);
  CHECK(j.find("gen_bound_global") != std::string::npos);
  CHECK(j.find("conditions") != std::string::npos);
  CHECK(j.find("exp_sum") != std::string::npos);
}
