#pragma once

#include <limits>
#include <map>
#include <string>
#include <vector>

#include "wclab/optimizer.hpp"
#include "wclab/risk.hpp"

namespace wclab {

enum class Provenance { analytic, sampled };

struct BoundConstants {
  double L = 0.0;     // Lipschitz loss
  double beta = 0.0;  // Lipschitz gradient
  double rho = 0.0;   // Lipschitz Hessian
  Provenance provenance = Provenance::sampled;
  int sample_count = 0;
  double L_g_prime = 0.0;
  double L_sigma = 0.0;
  double L_sigma_prime = 0.0;
  double L_sigma_second = 0.0;
};

struct Condition {
  std::string desc;
  double required = 0.0;
  double actual = 0.0;
  bool ok = false;
};

struct BoundReport {
  std::string name;
  double value = 0.0;
  std::map<std::string, double> terms;
  std::vector<Condition> conditions;
  std::vector<std::string> warnings;

  bool all_ok() const;
  std::string to_json() const;
};

/// Sampled Assumption-1 constants: maxima of gradient norms, gradient
/// difference ratios and dense per-sample Hessian difference ratios over
/// points drawn in the radius-ball around w0, times a 1.2 safety factor.
/// Extending n_samples extends the sample sequence, so estimates are
/// monotone in n_samples.
BoundConstants constants_estimate(const RiskContext& ctx, const TwoLayerParams& w0,
                                  double radius, int n_samples, std::uint64_t seed);

/// Worst-case product bounds over the radius-ball around w0:
///   ||grad l|| <= L_g' (L_s' X sqrt(M) Lv + [both layers] L_s sqrt(M)) / M^c
///   ||hess l|| <= sup g'' B1^2 + L_g' B2
///   Hessian Lipschitz <= sup|g'''| B1^3 + 3 sup g'' B1 B2 + L_g' B3
/// with B1/B2/B3 the corresponding sup-bounds on the prediction function's
/// first three derivatives, X = max_i ||x_i|| and Lv = ||v0||_inf + radius.
BoundConstants constants_analytic(const RiskContext& ctx, const TwoLayerParams& w0,
                                  double radius);

/// Pointwise-weak-convexity generalisation bound. etas = eta_0..eta_{t-1},
/// eps = eps_1..eps_{t-1}. Conditions over indices present in the inputs.
BoundReport gen_bound_pointwise(const std::vector<double>& etas, const std::vector<double>& eps,
                                double alpha, double beta, double L, double rho, double N,
                                int t);

/// Global-weak-convexity generalisation bound (2 eta L^2 / N) sum exp(...).
/// Pass beta to have the eta*beta <= 3/2 condition evaluated.
BoundReport gen_bound_global(double eta, double eps, double L, double N, int t,
                             double beta = std::numeric_limits<double>::quiet_NaN());

/// Test-error bound: generalisation + optimisation + approximation terms.
BoundReport test_error_bound(double eta, int t, double eps, double L, double N,
                             double E_dist_init_to_pen_min_sq, double E_R0_minus_Rstar,
                             double dist_init_to_popmin_sq,
                             double beta = std::numeric_limits<double>::quiet_NaN());

struct TotalWeight {
  double value = 0.0;        // sum_j |v_j| ||A_j||_2 / M^c
  double upper_bound = 0.0;  // ||v||_2 ||A||_F / M^c
};
TotalWeight total_weight(const TwoLayerParams& p);

enum class MaxMode { exact, surrogate };

/// max over ||z||_inf <= 1 of || A(u)^T Diag(z) v(u) ||_2. Exact mode
/// enumerates sign vertices (attained there; convex in z) and needs M <= 20;
/// surrogate mode is the triangle-inequality bound sum_j |v_j| ||A_j||.
double interaction_max(const Matrix& Au, const Vector& vu, MaxMode mode);

/// G_C(u) = (C/M^c)(||A(u)||_F^2 + max-term)
double g_c_functional(const Matrix& Au, const Vector& vu, double C, double c, MaxMode mode);

/// H(u) = ||A(u)||_F^2 + sqrt(eta t) ||v(u)||_2 + max-term
double h_functional(const Matrix& Au, const Vector& vu, double eta_t, MaxMode mode);

struct TheoremA1Inputs {
  double R0 = 0.0;         // R(w_0)
  double R_star = 0.0;     // R at the empirical-minimiser surrogate
  double v0_inf = 0.0;     // ||v^0||_inf
  double v_star_inf = 0.0; // ||v*||_inf of the candidate population minimiser
  double eta_t = 0.0;
  double opt_error_dist_sq = std::numeric_limits<double>::quiet_NaN();  // E||w_lambda - w0||^2
  const TwoLayerParams* omega_star = nullptr;  // candidate population minimiser
  const TwoLayerParams* w0 = nullptr;
};

BoundReport theorem_a1_quantities(const TheoremA1Inputs& in, const CovarianceSummary& cov,
                                  const Activation& act, const LossFn& loss, double L_v_input,
                                  MaxMode mode);

struct MuRegion {
  double mu = 0.0;
  bool vanishing_tw = false;      // mu > 1 - c
  bool vanishing_approx = false;  // mu > (1 - c) / 2
  std::string region;             // red | blue | green
  bool on_boundary = false;
};
MuRegion mu_region(double A_star_frob, int M, double c);

/// Empirical test-error decomposition over a trajectory's snapshots:
/// total = gen + opt&approx with r(best snapshot) as the minimiser surrogate.
BoundReport decomposition_report(const RiskContext& ctx_train, const RiskContext& ctx_test,
                                 const Trajectory& traj);

struct SurrogateResult {
  TwoLayerParams params;
  double grad_norm = 0.0;  // penalised-objective gradient norm at the surrogate
  double risk = 0.0;       // R at the surrogate
  int steps = 0;
};

/// Long small-step GD on R(w) + eps ||center - w||^2, stopped at grad_tol.
SurrogateResult penalized_minimizer(const RiskContext& ctx, const TwoLayerParams& w0,
                                    double eps_penalty, const TwoLayerParams& center, double eta,
                                    int max_iters, double grad_tol);

}  // namespace wclab
