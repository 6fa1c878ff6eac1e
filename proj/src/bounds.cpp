#include "wclab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace wclab {

bool BoundReport::all_ok() const {
  for (const auto& c : conditions)
    if (!c.ok) return false;
  return true;
}

std::string BoundReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["value"] = value;
  j["terms"] = nlohmann::json::object();
  for (const auto& [k, v] : terms) j["terms"][k] = v;
  j["conditions"] = nlohmann::json::array();
  for (const auto& c : conditions)
    j["conditions"].push_back(
        {{"desc", c.desc}, {"required", c.required}, {"actual", c.actual}, {"ok", c.ok}});
  j["warnings"] = warnings;
  return j.dump(2);
}

namespace {

Vector ball_point(const Vector& center, double radius, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector dir(center.size());
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = gauss(rng);
  double n = dir.norm();
  if (n == 0) return center;
  return center + (radius * unif(rng) / n) * dir;
}

// Per-sample gradient at every training point, rows are samples.
Matrix per_sample_grads(const RiskContext& ctx, const TwoLayerParams& p) {
  Matrix G(ctx.size(), p.flat_dim());
  for (Eigen::Index i = 0; i < ctx.size(); ++i)
    G.row(i) = grad_loss_point(ctx, p, ctx.data->X.row(i).transpose(), ctx.data->y[i]).transpose();
  return G;
}

double spectral_norm_power(const Matrix& H, int iters = 50) {
  Vector u = Vector::Ones(H.cols()).normalized();
  double norm = 0.0;
  for (int k = 0; k < iters; ++k) {
    Vector w = H * u;
    norm = w.norm();
    if (norm <= 1e-300) return 0.0;
    u = w / norm;
  }
  return norm;
}

}  // namespace

BoundConstants constants_estimate(const RiskContext& ctx, const TwoLayerParams& w0,
                                  double radius, int n_samples, std::uint64_t seed) {
  if (!(radius > 0)) throw std::invalid_argument("constants_estimate: radius > 0 required");
  if (n_samples < 2) throw std::invalid_argument("constants_estimate: n_samples >= 2 required");
  if (w0.flat_dim() > 2000)
    throw std::invalid_argument(
        "constants_estimate: flat dimension exceeds the dense guard; use constants_analytic");

  auto rng = make_rng(mix_seed(seed, 0xC0457ULL));
  const Vector flat0 = flatten(w0);

  double L_hat = 0.0, beta_hat = 0.0, rho_hat = 0.0;
  TwoLayerParams prev;
  Matrix prev_grads;
  std::vector<Matrix> prev_hess;
  for (int k = 0; k < n_samples; ++k) {
    TwoLayerParams wk = unflatten(ball_point(flat0, radius, rng), w0);
    Matrix grads = per_sample_grads(ctx, wk);
    for (Eigen::Index i = 0; i < grads.rows(); ++i)
      L_hat = std::max(L_hat, grads.row(i).norm());
    std::vector<Matrix> hess(ctx.size());
    for (Eigen::Index i = 0; i < ctx.size(); ++i) {
      hess[i] = dense_loss_hessian(ctx, wk, i);
      // a pure difference-ratio estimate can undershoot the Hessian norm at
      // the sampled points themselves, so fold those norms in as well
      beta_hat = std::max(beta_hat, spectral_norm_power(hess[i]));
    }

    if (k % 2 == 1) {  // disjoint consecutive pairs keep estimates monotone in n_samples
      double dist = (flatten(wk) - flatten(prev)).norm();
      if (dist > 0) {
        for (Eigen::Index i = 0; i < ctx.size(); ++i) {
          beta_hat = std::max(beta_hat, (grads.row(i) - prev_grads.row(i)).norm() / dist);
          rho_hat = std::max(rho_hat, spectral_norm_power(hess[i] - prev_hess[i]) / dist);
        }
      }
    }
    prev = wk;
    prev_grads = std::move(grads);
    prev_hess = std::move(hess);
  }

  BoundConstants out;
  out.L = 1.2 * L_hat;
  out.beta = 1.2 * beta_hat;
  out.rho = 1.2 * rho_hat;
  out.provenance = Provenance::sampled;
  out.sample_count = n_samples;
  out.L_g_prime = ctx.loss.L_g_prime();
  out.L_sigma = ctx.act.L_sigma();
  out.L_sigma_prime = ctx.act.L_sigma_prime();
  out.L_sigma_second = ctx.act.L_sigma_second();
  return out;
}

BoundConstants constants_analytic(const RiskContext& ctx, const TwoLayerParams& w0,
                                  double radius) {
  if (radius < 0) throw std::invalid_argument("constants_analytic: radius >= 0 required");
  const double M = static_cast<double>(w0.width());
  const double sc = w0.scale();
  double x_max = 0.0;
  for (Eigen::Index i = 0; i < ctx.size(); ++i)
    x_max = std::max(x_max, ctx.data->X.row(i).norm());

  const bool ts = w0.train_second_layer;
  const double Lv = w0.v.lpNorm<Eigen::Infinity>() + (ts ? radius : 0.0);
  const double Ls = ctx.act.L_sigma();
  const double Ls1 = ctx.act.L_sigma_prime();
  const double Ls2 = ctx.act.L_sigma_second();
  const double Ls3 = ctx.act.L_sigma_third();
  const double Lg1 = ctx.loss.L_g_prime();
  const double Lg2 = ctx.loss.sup_d2();
  const double Lg3 = ctx.loss.sup_d3();

  const double B1 = sc * (Ls1 * x_max * std::sqrt(M) * Lv + (ts ? Ls * std::sqrt(M) : 0.0));
  const double B2 = sc * (Lv * Ls2 * x_max * x_max + (ts ? Ls1 * x_max : 0.0));
  const double B3 = sc * (Lv * Ls3 * x_max * x_max * x_max + (ts ? 3.0 * Ls2 * x_max * x_max : 0.0));

  BoundConstants out;
  out.L = Lg1 * B1;
  out.beta = Lg2 * B1 * B1 + Lg1 * B2;
  out.rho = Lg3 * B1 * B1 * B1 + 3.0 * Lg2 * B1 * B2 + Lg1 * B3;
  out.provenance = Provenance::analytic;
  out.sample_count = 0;
  out.L_g_prime = Lg1;
  out.L_sigma = Ls;
  out.L_sigma_prime = Ls1;
  out.L_sigma_second = Ls2;
  return out;
}

BoundReport gen_bound_pointwise(const std::vector<double>& etas, const std::vector<double>& eps,
                                double alpha, double beta, double L, double rho, double N,
                                int t) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw std::invalid_argument("gen_bound_pointwise: alpha must lie in (0,1]");
  if (t < 1 || static_cast<int>(etas.size()) != t)
    throw std::invalid_argument("gen_bound_pointwise: need eta_0..eta_{t-1}");
  if (static_cast<int>(eps.size()) != std::max(0, t - 1))
    throw std::invalid_argument("gen_bound_pointwise: need eps_1..eps_{t-1}");

  auto eps_at = [&](int s) { return eps[s - 1]; };  // eps[0] holds eps_1
  const double inv_alpha = 1.0 / alpha;

  // value = (4L^2/N) sum_j exp( 2 sum_{s>j} eta_s (eps_s + 4 beta/N) + sum_{s>j} eta_s^{1/alpha} ) eta_j
  // computed with backward suffix accumulation; empty sums are zero.
  double value = 0.0;
  double suffix = 0.0;  // exponent for the current j
  for (int j = t - 1; j >= 0; --j) {
    value += std::exp(suffix) * etas[j];
    if (j >= 1) suffix += 2.0 * etas[j] * (eps_at(j) + 4.0 * beta / N) + std::pow(etas[j], inv_alpha);
  }
  value *= 4.0 * L * L / N;

  BoundReport rep;
  rep.name = "gen_bound_pointwise";
  rep.value = value;
  rep.terms["sum_eta"] = pairwise_sum(etas);
  rep.terms["L"] = L;
  rep.terms["beta"] = beta;
  rep.terms["rho"] = rho;
  rep.terms["N"] = N;
  rep.terms["t"] = t;
  rep.terms["alpha"] = alpha;

  double max_eta_beta = 0.0;
  for (double e : etas) max_eta_beta = std::max(max_eta_beta, e * beta);
  rep.conditions.push_back({"max_k eta_k * beta <= 3/2", 1.5, max_eta_beta, max_eta_beta <= 1.5});

  double max_step_cond = 0.0;
  for (int k = 1; k <= t - 1; ++k)
    max_step_cond = std::max(
        max_step_cond, etas[k] * (eps_at(k) + 2.0 * beta / N) + std::pow(etas[k], inv_alpha));
  rep.conditions.push_back({"max_k eta_k (eps_k + 2 beta/N) + eta_k^{1/alpha} < 1/2", 0.5,
                            max_step_cond, max_step_cond < 0.5});

  double exp_full = 0.0;
  for (int s = 1; s <= t - 1; ++s)
    exp_full += 2.0 * etas[s] * (eps_at(s) + 4.0 * beta / N) + std::pow(etas[s], inv_alpha);
  double outer = 0.0, prefix_eta = etas[0];
  for (int j = 1; j <= t - 1; ++j) {
    outer += std::pow(etas[j], 1.0 - 0.5 * inv_alpha) * prefix_eta;
    prefix_eta += etas[j];
  }
  double n_required = 24.0 * rho * L * std::exp(exp_full) * outer;
  rep.terms["sample_size_required"] = n_required;
  rep.conditions.push_back({"N >= 24 rho L exp(...) sum_j eta_j^{1-1/(2a)} sum_{l<j} eta_l",
                            n_required, N, N >= n_required});
  rep.warnings.push_back(
      "step-size condition uses the statement form eta_k(eps_k + 2 beta/N); the proof once "
      "writes 2 eta_s(...) - the two differ by a factor 2");
  rep.warnings.push_back(
      "sample-size condition sums clamp at index t-1; the stated upper limit t would index a "
      "step size beyond the horizon");
  return rep;
}

BoundReport gen_bound_global(double eta, double eps, double L, double N, int t, double beta) {
  if (t < 1) throw std::invalid_argument("gen_bound_global: t >= 1 required");
  if (!(2.0 * eta * eps < 1.0))
    throw std::invalid_argument("gen_bound_global: requires 2 eta eps < 1");
  double sum = 0.0;
  const double rate = eta * eps / (1.0 - 2.0 * eta * eps);
  for (int k = 0; k < t; ++k) sum += std::exp(rate * k);
  BoundReport rep;
  rep.name = "gen_bound_global";
  rep.value = 2.0 * eta * L * L / N * sum;
  rep.terms["exp_sum"] = sum;
  rep.terms["rate"] = rate;
  rep.terms["eta"] = eta;
  rep.terms["eps"] = eps;
  rep.terms["L"] = L;
  rep.terms["N"] = N;
  rep.terms["t"] = t;
  rep.conditions.push_back({"2 eta eps < 1", 1.0, 2.0 * eta * eps, 2.0 * eta * eps < 1.0});
  if (!std::isnan(beta))
    rep.conditions.push_back({"eta beta <= 3/2", 1.5, eta * beta, eta * beta <= 1.5});
  return rep;
}

BoundReport test_error_bound(double eta, int t, double eps, double L, double N,
                             double E_dist_init_to_pen_min_sq, double E_R0_minus_Rstar,
                             double dist_init_to_popmin_sq, double beta) {
  if (t < 1) throw std::invalid_argument("test_error_bound: t >= 1 required");
  if (!(2.0 * eta * eps < 1.0))
    throw std::invalid_argument("test_error_bound: requires 2 eta eps < 1");
  const double eta_t = eta * static_cast<double>(t);
  const double gen = 2.0 * L * L * eta_t / N * std::exp(eta_t * eps / (1.0 - 2.0 * eta * eps));
  const double opt = E_dist_init_to_pen_min_sq / (2.0 * eta_t);
  const double approx = eps * (eta_t * E_R0_minus_Rstar + dist_init_to_popmin_sq);
  BoundReport rep;
  rep.name = "test_error_bound";
  rep.value = gen + opt + approx;
  rep.terms["generalisation"] = gen;
  rep.terms["optimisation"] = opt;
  rep.terms["approximation"] = approx;
  rep.conditions.push_back({"2 eta eps < 1", 1.0, 2.0 * eta * eps, 2.0 * eta * eps < 1.0});
  if (!std::isnan(beta))
    rep.conditions.push_back({"eta beta <= 1/2", 0.5, eta * beta, eta * beta <= 0.5});
  rep.warnings.push_back(
      "optimisation term evaluated with the penalised minimiser w*_eps (the statement writes "
      "w_eps without the star)");
  return rep;
}

TotalWeight total_weight(const TwoLayerParams& p) {
  TotalWeight tw;
  double s = 0.0;
  for (Eigen::Index j = 0; j < p.width(); ++j) s += std::abs(p.v[j]) * p.A.row(j).norm();
  tw.value = s * p.scale();
  tw.upper_bound = p.v.norm() * p.A.norm() * p.scale();
  return tw;
}

double interaction_max(const Matrix& Au, const Vector& vu, MaxMode mode) {
  if (Au.rows() != vu.size()) throw std::invalid_argument("interaction_max: row count mismatch");
  const Eigen::Index M = Au.rows();
  if (mode == MaxMode::surrogate) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < M; ++j) s += std::abs(vu[j]) * Au.row(j).norm();
    return s;
  }
  if (M > 20)
    throw std::invalid_argument("interaction_max: exact mode needs M <= 20; use surrogate");
  // convex norm over the cube attains its max at a sign vertex; z and -z tie
  double best = 0.0;
  const std::uint64_t half = 1ULL << (M - 1);
  for (std::uint64_t bits = 0; bits < half; ++bits) {
    Vector acc = Vector::Zero(Au.cols());
    for (Eigen::Index j = 0; j < M; ++j) {
      double z = (bits >> j) & 1ULL ? -1.0 : 1.0;
      acc += z * vu[j] * Au.row(j).transpose();
    }
    best = std::max(best, acc.norm());
  }
  return best;
}

double g_c_functional(const Matrix& Au, const Vector& vu, double C, double c, MaxMode mode) {
  const double sc = std::pow(static_cast<double>(Au.rows()), -c);
  return C * sc * Au.squaredNorm() + C * sc * interaction_max(Au, vu, mode);
}

double h_functional(const Matrix& Au, const Vector& vu, double eta_t, MaxMode mode) {
  if (eta_t < 0) throw std::invalid_argument("h_functional: eta t >= 0 required");
  return Au.squaredNorm() + std::sqrt(eta_t) * vu.norm() + interaction_max(Au, vu, mode);
}

BoundReport theorem_a1_quantities(const TheoremA1Inputs& in, const CovarianceSummary& cov,
                                  const Activation& act, const LossFn& loss, double L_v_input,
                                  MaxMode mode) {
  if (in.omega_star == nullptr || in.w0 == nullptr)
    throw std::invalid_argument("theorem_a1_quantities: omega_star and w0 surrogates required");
  const double M_c = std::pow(static_cast<double>(in.w0->width()), in.w0->c);
  const double required_Lv =
      std::max(in.v_star_inf,
               in.v0_inf + in.eta_t * loss.L_g_prime() * act.L_sigma() / M_c);
  const double required_C =
      2.0 * loss.L_g_prime() * std::max(act.L_sigma_prime() * std::sqrt(cov.trace),
                                        act.L_sigma_second() * L_v_input * cov.spectral_norm);
  const double gap = in.R0 - in.R_star;
  const double lambda = 3.0 * required_C * std::max(std::sqrt(std::max(gap, 0.0)), 1.0) / M_c;
  const double opt_component = 3.0 * required_C * gap * in.eta_t / M_c;

  Matrix Adiff = in.omega_star->A - in.w0->A;
  Vector vdiff = in.omega_star->v - in.w0->v;
  const double H = h_functional(Adiff, vdiff, in.eta_t, mode);
  const double stat_approx = lambda * H;

  BoundReport rep;
  rep.name = "theorem_a1_quantities";
  rep.terms["required_L_v"] = required_Lv;
  rep.terms["required_C"] = required_C;
  rep.terms["lambda"] = lambda;
  rep.terms["opt_component"] = opt_component;
  rep.terms["H_omega_star"] = H;
  rep.terms["stat_approx"] = stat_approx;
  double opt_error = std::isnan(in.opt_error_dist_sq) || in.eta_t == 0.0
                         ? 0.0
                         : in.opt_error_dist_sq / (2.0 * in.eta_t);
  rep.terms["opt_error"] = opt_error;
  rep.value = opt_error + opt_component + stat_approx;
  rep.conditions.push_back(
      {"L_v >= ||v*||_inf v (||v0||_inf + eta t Lg' Ls / M^c)", required_Lv, L_v_input,
       L_v_input >= required_Lv});
  if (std::isnan(in.opt_error_dist_sq))
    rep.warnings.push_back("opt_error omitted: no ||w_lambda - w0||^2 surrogate supplied");
  return rep;
}

MuRegion mu_region(double A_star_frob, int M, double c) {
  if (!(A_star_frob > 0)) throw std::invalid_argument("mu_region: ||A*||_F > 0 required");
  if (M < 2) throw std::invalid_argument("mu_region: M >= 2 required");
  MuRegion r;
  r.mu = 0.5 - std::log(A_star_frob) / std::log(static_cast<double>(M));
  const double tw_threshold = 1.0 - c;
  const double approx_threshold = 0.5 * (1.0 - c);
  r.vanishing_tw = r.mu > tw_threshold;
  r.vanishing_approx = r.mu > approx_threshold;
  r.region = r.vanishing_tw ? "red" : (r.vanishing_approx ? "blue" : "green");
  const double tol = 1e-12 * (1.0 + std::abs(r.mu));
  r.on_boundary =
      std::abs(r.mu - tw_threshold) <= tol || std::abs(r.mu - approx_threshold) <= tol;
  return r;
}

BoundReport decomposition_report(const RiskContext& ctx_train, const RiskContext& ctx_test,
                                 const Trajectory& traj) {
  // uniform over iterates s = 1..t, approximated at the stored snapshots
  std::vector<double> test_vals, train_vals;
  double best_test = std::numeric_limits<double>::infinity();
  for (const auto& [step, params] : traj.snapshots) {
    if (step == 0) continue;
    double te = population_risk_estimate(ctx_test, params);
    double tr = empirical_risk(ctx_train, params);
    test_vals.push_back(te);
    train_vals.push_back(tr);
    best_test = std::min(best_test, te);
  }
  if (test_vals.empty())
    throw std::invalid_argument("decomposition_report: no post-initialisation snapshots");
  const double ei_test = pairwise_mean(test_vals);
  const double ei_train = pairwise_mean(train_vals);
  BoundReport rep;
  rep.name = "decomposition_report";
  rep.terms["E_I_test_risk"] = ei_test;
  rep.terms["E_I_train_risk"] = ei_train;
  rep.terms["gen_error"] = ei_test - ei_train;
  rep.terms["best_test_risk"] = best_test;
  rep.terms["opt_approx_error"] = ei_train - best_test;
  rep.value = ei_test - best_test;  // = gen_error + opt_approx_error
  return rep;
}

SurrogateResult penalized_minimizer(const RiskContext& ctx, const TwoLayerParams& w0,
                                    double eps_penalty, const TwoLayerParams& center, double eta,
                                    int max_iters, double grad_tol) {
  TwoLayerParams w = w0;
  const Vector flat_center = flatten(center);
  SurrogateResult out;
  int s = 0;
  for (; s < max_iters; ++s) {
    double R = 0.0;
    Vector g = risk_and_grad(ctx, w, R);
    if (eps_penalty != 0.0) g += 2.0 * eps_penalty * (flatten(w) - flat_center);
    double gn = g.norm();
    if (gn <= grad_tol) break;
    const Eigen::Index M = w.width(), d = w.input_dim();
    for (Eigen::Index j = 0; j < M; ++j) w.A.row(j) -= eta * g.segment(j * d, d).transpose();
    if (w.train_second_layer) w.v -= eta * g.segment(M * d, M);
  }
  double R = 0.0;
  Vector g = risk_and_grad(ctx, w, R);
  if (eps_penalty != 0.0) g += 2.0 * eps_penalty * (flatten(w) - flat_center);
  out.params = w;
  out.grad_norm = g.norm();
  out.risk = R;
  out.steps = s;
  return out;
}

}  // namespace wclab
