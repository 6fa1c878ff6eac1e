#include "wclab/lab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace wclab {

namespace {

// Analytic Lipschitz constant covering gradients at train and reservoir
// points (the resampled gradient touches both).
double analytic_L_over(const RiskContext& ctx, const Dataset& reservoir,
                       const TwoLayerParams& w0) {
  double x_max = 0.0;
  for (Eigen::Index i = 0; i < ctx.size(); ++i)
    x_max = std::max(x_max, ctx.data->X.row(i).norm());
  for (Eigen::Index i = 0; i < reservoir.size(); ++i)
    x_max = std::max(x_max, reservoir.X.row(i).norm());
  const double M = static_cast<double>(w0.width());
  const double v_inf = w0.v.lpNorm<Eigen::Infinity>();
  double L = ctx.loss.L_g_prime() * ctx.act.L_sigma_prime() * x_max * v_inf * std::sqrt(M) *
             w0.scale();
  if (w0.train_second_layer)
    L += ctx.loss.L_g_prime() * ctx.act.L_sigma() * std::sqrt(M) * w0.scale();
  return L;
}

}  // namespace

StabilityResult stability_experiment(const RiskContext& ctx_train, const Dataset& reservoir,
                                     const GDConfig& config, const TwoLayerParams& w0,
                                     int k_resamples, std::uint64_t seed) {
  config.validate();
  reservoir.validate();
  const Eigen::Index N = ctx_train.size();
  if (k_resamples < 1 || k_resamples > N)
    throw std::invalid_argument("stability: k_resamples must lie in [1, N]");
  if (reservoir.size() < k_resamples)
    throw std::invalid_argument("stability: reservoir smaller than k_resamples");
  if (reservoir.dim() != ctx_train.data->dim())
    throw std::invalid_argument("stability: reservoir dimension mismatch");

  // k seeded train indices (sorted), paired with the first k reservoir rows.
  // The reservoir is a pre-drawn pool, so consuming it in order stays i.i.d.
  auto rng = make_rng(mix_seed(seed, 0x57ABULL));
  std::vector<Eigen::Index> train_idx(N);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  for (int i = 0; i < k_resamples; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, N - 1);
    std::swap(train_idx[i], train_idx[pick(rng)]);
  }
  std::sort(train_idx.begin(), train_idx.begin() + k_resamples);

  StabilityResult out;
  out.resample_indices.assign(train_idx.begin(), train_idx.begin() + k_resamples);
  out.deviation_series.resize(k_resamples);
  std::vector<double> gaps(k_resamples);

  parallel_for(k_resamples, [&](int k) {
    const Eigen::Index i = out.resample_indices[k];
    const Vector xp = reservoir.X.row(k).transpose();
    const double yp = reservoir.y[k];
    PairedResult pr = run_paired(ctx_train, config, w0, i, xp, yp);
    out.deviation_series[k] = pr.deviation_series;
    gaps[k] = loss_point(ctx_train, pr.traj_i.final_params, xp, yp) -
              loss_point(ctx_train, pr.traj.final_params, xp, yp);
  });

  out.per_step_max_deviation.assign(out.deviation_series[0].size(), 0.0);
  for (const auto& series : out.deviation_series)
    for (std::size_t s = 0; s < series.size(); ++s)
      out.per_step_max_deviation[s] = std::max(out.per_step_max_deviation[s], series[s]);

  out.gap_estimate = pairwise_mean(gaps);
  double var = 0.0;
  for (double g : gaps) var += (g - out.gap_estimate) * (g - out.gap_estimate);
  var = k_resamples > 1 ? var / (k_resamples - 1) : 0.0;
  out.gap_std_error = std::sqrt(var / k_resamples);

  // Certified-eps bound: fixed second layer makes the closed-form floor
  // parameter-free, so it is a global weak convexity constant.
  CovarianceSummary cov = empirical_covariance(*ctx_train.data);
  const double eps = -two_layer_bound(w0, cov, ctx_train.act, ctx_train.loss);
  const double L = analytic_L_over(ctx_train, reservoir, w0);
  BoundConstants sampled = constants_estimate(ctx_train, w0, 1.0, 8, mix_seed(seed, 0xBE7AULL));
  const double eta = config.schedule.kind == Schedule::Kind::constant
                         ? config.schedule.eta
                         : std::numeric_limits<double>::quiet_NaN();
  bool applicable = config.schedule.kind == Schedule::Kind::constant &&
                    !w0.train_second_layer && 2.0 * eta * eps < 1.0;
  if (applicable) {
    out.bound_report = gen_bound_global(eta, eps, L, static_cast<double>(N), config.t_max,
                                        sampled.beta);
    out.bound_value = out.bound_report.value;
    out.bound_conditions_ok = out.bound_report.all_ok();
  } else {
    out.bound_report.name = "gen_bound_global";
    out.bound_report.warnings.push_back(
        "bound not evaluated: needs constant step, fixed second layer and 2 eta eps < 1");
    out.bound_value = std::numeric_limits<double>::quiet_NaN();
    out.bound_conditions_ok = false;
  }
  out.bound_report.terms["certified_eps"] = eps;
  out.bound_report.terms["analytic_L"] = L;
  out.bound_report.terms["sampled_beta"] = sampled.beta;
  return out;
}

namespace {

struct PairEval {
  Vector diff;      // x - y
  Vector grad_diff; // grad R(x) - grad R(y)
};

PairEval eval_pair(const RiskContext& ctx, const TwoLayerParams& shape, const Vector& x,
                   const Vector& y) {
  PairEval pe;
  pe.diff = x - y;
  pe.grad_diff = grad_R(ctx, unflatten(x, shape)) - grad_R(ctx, unflatten(y, shape));
  return pe;
}

}  // namespace

MarginsReport check_cocoercivity_global(const RiskContext& ctx, const TwoLayerParams& shape,
                                        const std::vector<ParamPair>& pairs, double eta,
                                        double eps, double beta) {
  MarginsReport rep;
  rep.margins.resize(pairs.size());
  parallel_for(static_cast<int>(pairs.size()), [&](int k) {
    PairEval pe = eval_pair(ctx, shape, pairs[k].first, pairs[k].second);
    const double lhs = pe.grad_diff.dot(pe.diff);
    const Vector D = pe.diff - eta * pe.grad_diff;
    const double rhs =
        2.0 * eta * (1.0 - 0.5 * beta * eta) * pe.grad_diff.squaredNorm() - eps * D.squaredNorm();
    rep.margins[k] = lhs - rhs;
  });
  rep.min_margin = *std::min_element(rep.margins.begin(), rep.margins.end());
  return rep;
}

MarginsReport check_cocoercivity_pointwise(const RiskContext& ctx, const TwoLayerParams& shape,
                                           const std::vector<PointwisePair>& pairs, double eta,
                                           double beta, double rho) {
  MarginsReport rep;
  rep.margins.resize(pairs.size());
  const double N = static_cast<double>(ctx.size());
  parallel_for(static_cast<int>(pairs.size()), [&](int k) {
    PairEval pe = eval_pair(ctx, shape, pairs[k].x, pairs[k].y);
    const double lhs = pe.grad_diff.dot(pe.diff);
    const Vector D = pe.diff - eta * pe.grad_diff;
    const double d2 = D.squaredNorm();
    const double rhs = 2.0 * eta * (1.0 - 0.5 * beta * eta) * pe.grad_diff.squaredNorm() -
                       (pairs[k].eps_s + 2.0 * beta / N) * d2 - (rho / 3.0) * d2 * std::sqrt(d2);
    rep.margins[k] = lhs - rhs;
  });
  rep.min_margin = *std::min_element(rep.margins.begin(), rep.margins.end());
  return rep;
}

MarginsReport check_expansiveness(const RiskContext& ctx, const TwoLayerParams& shape,
                                  const std::vector<ParamPair>& pairs, double eta, double eps) {
  if (!(2.0 * eta * eps < 1.0))
    throw std::invalid_argument("check_expansiveness: requires 2 eta eps < 1");
  MarginsReport rep;
  rep.factor = 1.0 / std::sqrt(1.0 - 2.0 * eta * eps);
  rep.margins.resize(pairs.size());
  std::vector<double> ratios(pairs.size(), 0.0);
  parallel_for(static_cast<int>(pairs.size()), [&](int k) {
    PairEval pe = eval_pair(ctx, shape, pairs[k].first, pairs[k].second);
    const double base = pe.diff.norm();
    const double moved = (pe.diff - eta * pe.grad_diff).norm();
    rep.margins[k] = rep.factor * base - moved;
    if (base > 0) ratios[k] = moved / base;
  });
  rep.min_margin = *std::min_element(rep.margins.begin(), rep.margins.end());
  rep.max_ratio = *std::max_element(ratios.begin(), ratios.end());
  return rep;
}

MarginsReport check_descent(const Trajectory& traj, const Schedule& schedule) {
  MarginsReport rep;
  for (int s = 0; s < traj.steps_run; ++s) {
    const double eta = schedule.step(s);
    const double tol = 1e-9 * (1.0 + std::abs(traj.R_series[s]));
    const double drop = traj.R_series[s] -
                        0.5 * eta * traj.grad_norm_series[s] * traj.grad_norm_series[s];
    rep.margins.push_back(drop + tol - traj.R_series[s + 1]);
  }
  rep.min_margin = rep.margins.empty()
                       ? 0.0
                       : *std::min_element(rep.margins.begin(), rep.margins.end());
  return rep;
}

MarginsReport check_trajectory_norm(const Trajectory& traj, double eta) {
  MarginsReport rep;
  for (int t = 1; t <= traj.steps_run; ++t) {
    const double drop = std::max(0.0, traj.R_series[0] - traj.R_series[t]);
    const double limit = std::sqrt(2.0 * eta * static_cast<double>(t) * drop) + 1e-9;
    rep.margins.push_back(limit - traj.dist_from_init_series[t]);
  }
  rep.min_margin = rep.margins.empty()
                       ? 0.0
                       : *std::min_element(rep.margins.begin(), rep.margins.end());
  return rep;
}

SweepResult scaling_sweep(const SweepSpec& spec) {
  if (spec.c_grid.empty() || spec.M_grid.empty() || spec.replications < 1)
    throw std::invalid_argument("sweep: empty grid");
  spec.gd.validate();

  // one data draw per replication, shared across every (c, M) cell
  std::vector<SynthResult> data(spec.replications);
  for (int r = 0; r < spec.replications; ++r) {
    TeacherSpec ts = spec.teacher;
    ts.seed = mix_seed(spec.seed, 0xD000ULL + r);
    data[r] = synth_teacher(ts);
  }

  SweepResult out;
  const int n_c = static_cast<int>(spec.c_grid.size());
  const int n_m = static_cast<int>(spec.M_grid.size());
  out.cells.resize(static_cast<std::size_t>(n_c) * n_m * spec.replications);

  parallel_for(static_cast<int>(out.cells.size()), [&](int idx) {
    const int ci = idx / (n_m * spec.replications);
    const int mi = (idx / spec.replications) % n_m;
    const int rep = idx % spec.replications;
    SweepCell cell;
    cell.c = spec.c_grid[ci];
    cell.M = spec.M_grid[mi];
    cell.rep = rep;
    try {
      RiskContext ctx_train{&data[rep].train, spec.loss, spec.act};
      RiskContext ctx_test{&data[rep].test, spec.loss, spec.act};
      const std::uint64_t cell_seed =
          mix_seed(spec.seed, (static_cast<std::uint64_t>(ci) << 40) |
                                  (static_cast<std::uint64_t>(mi) << 20) |
                                  static_cast<std::uint64_t>(rep));
      TwoLayerParams w0 = init_zero_gaussian(cell.M, static_cast<int>(data[rep].train.dim()),
                                             cell.c, spec.train_second_layer, cell_seed);
      GDConfig gd = spec.gd;
      gd.seed = cell_seed;
      Trajectory traj = run_gd(ctx_train, &ctx_test, gd, w0);
      cell.frob_A = traj.final_params.A.norm();
      cell.norm_v = traj.final_params.v.norm();
      cell.best_test_risk = traj.best_test_risk;
      cell.steps = traj.steps_run;
      cell.tw = total_weight(traj.final_params).value;
      cell.stop_reason = to_string(traj.stop_reason);
      if (spec.measure_eps) {
        HvpOracle oracle = [&](const Vector& u) {
          return hvp_R(ctx_train, traj.final_params, u);
        };
        SpectralEstimate est =
            lambda_min_estimate(oracle, traj.final_params.flat_dim(), spec.eps_tol,
                                spec.eps_max_iters, cell_seed);
        cell.eps_at_stop = std::max(0.0, -est.lambda_min);
      }
    } catch (const std::exception& e) {
      cell.failed = true;
      cell.fail_reason = e.what();
    }
    out.cells[idx] = cell;
  });

  // replication-averaged final frobenius per (c, M); Spearman against c per M
  for (int mi = 0; mi < n_m; ++mi) {
    std::vector<double> cs, frobs;
    for (int ci = 0; ci < n_c; ++ci) {
      std::vector<double> vals;
      for (int rep = 0; rep < spec.replications; ++rep) {
        const auto& cell = out.cells[(static_cast<std::size_t>(ci) * n_m + mi) *
                                         spec.replications +
                                     rep];
        if (!cell.failed) vals.push_back(cell.frob_A);
      }
      if (!vals.empty()) {
        cs.push_back(spec.c_grid[ci]);
        frobs.push_back(pairwise_mean(vals));
      }
    }
    if (cs.size() >= 2) out.spearman_c_vs_frob_by_M[spec.M_grid[mi]] = spearman(cs, frobs);
  }
  for (int mi = 0; mi < n_m; ++mi) {
    std::vector<double> vals;
    for (int rep = 0; rep < spec.replications; ++rep) {
      const auto& cell = out.cells[static_cast<std::size_t>(mi) * spec.replications + rep];
      if (!cell.failed) vals.push_back(cell.best_test_risk);
    }
    if (!vals.empty()) out.median_best_test_by_M[spec.M_grid[mi]] = median(vals);
  }
  return out;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write sweep csv: " + path);
  out << "c,M,rep,frob_A,norm_v,best_test_risk,steps,tw,eps_at_stop,failed,stop_reason\n";
  for (const auto& cell : result.cells) {
    out << format_double(cell.c) << ',' << cell.M << ',' << cell.rep << ','
        << format_double(cell.frob_A) << ',' << format_double(cell.norm_v) << ','
        << format_double(cell.best_test_risk) << ',' << cell.steps << ','
        << format_double(cell.tw) << ',' << format_double(cell.eps_at_stop) << ','
        << (cell.failed ? 1 : 0) << ',' << (cell.failed ? cell.fail_reason : cell.stop_reason)
        << '\n';
  }
}

DisjointSupportResult disjoint_support_construct(int d, int s, int M, double a1, double a2,
                                                 double c, double trace, double eta_t) {
  if (d < 1 || s < 1 || static_cast<long long>(d) * s > M)
    throw std::invalid_argument("disjoint_support: needs d*s <= M");
  if (!(a1 > 0) || !(a2 > 0)) throw std::invalid_argument("disjoint_support: a1, a2 > 0");

  DisjointSupportResult out;
  out.omega_star.A = Matrix::Zero(M, d);
  out.omega_star.v = Vector::Zero(M);
  out.omega_star.c = c;
  out.omega_star.train_second_layer = true;
  const double entry = a2 / std::sqrt(static_cast<double>(s));
  for (int l = 0; l < d; ++l)
    for (int j = l * s; j < (l + 1) * s; ++j) {
      out.omega_star.A(j, l) = entry;  // a2 * gamma_l xi_l^T with xi_l = e_l
      out.omega_star.v[j] = a1;
    }

  const double Mc = std::pow(static_cast<double>(M), c);
  const double ds = static_cast<double>(d) * s;
  out.tw = a1 * a2 * d * std::sqrt(static_cast<double>(s)) / Mc;
  out.tw_upper_bound = total_weight(out.omega_star).upper_bound;
  out.v_norm = a1 * std::sqrt(ds);
  out.A_frob = a2 * std::sqrt(static_cast<double>(d));
  out.row_norm = entry;
  out.gamma_l1 = std::sqrt(static_cast<double>(s));
  out.h_exact = d * a2 * a2 + std::sqrt(eta_t) * a1 * std::sqrt(ds) + a1 * a2 * std::sqrt(ds);
  out.ratio = std::sqrt(trace) * (1.0 / (a1 * std::sqrt(static_cast<double>(s))) +
                                  std::sqrt(eta_t) / (a2 * std::sqrt(static_cast<double>(d))) +
                                  1.0 / std::sqrt(static_cast<double>(d)));
  return out;
}

}  // namespace wclab
