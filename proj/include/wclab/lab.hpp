#pragma once

#include <map>
#include <string>
#include <vector>

#include "wclab/bounds.hpp"
#include "wclab/data.hpp"
#include "wclab/optimizer.hpp"
#include "wclab/spectral.hpp"

namespace wclab {

struct StabilityResult {
  std::vector<Eigen::Index> resample_indices;
  std::vector<std::vector<double>> deviation_series;  // one series per resampled index
  std::vector<double> per_step_max_deviation;
  double gap_estimate = 0.0;   // Monte-Carlo mean of l(w^(i), Z_i') - l(w, Z_i')
  double gap_std_error = 0.0;
  double bound_value = 0.0;    // global-weak-convexity bound with certified eps
  bool bound_conditions_ok = false;
  BoundReport bound_report;
};

/// Resampling experiment: k paired runs, each replacing one training point
/// with a reservoir point. The reservoir must be disjoint from the train set.
StabilityResult stability_experiment(const RiskContext& ctx_train, const Dataset& reservoir,
                                     const GDConfig& config, const TwoLayerParams& w0,
                                     int k_resamples, std::uint64_t seed);

struct MarginsReport {
  std::vector<double> margins;  // LHS - RHS per pair/step; >= 0 expected
  double min_margin = 0.0;
  double max_ratio = 0.0;  // expansiveness only: max ||update diff|| / ||x - y||
  double factor = 0.0;     // expansiveness only: 1/sqrt(1 - 2 eta eps)
};

using ParamPair = std::pair<Vector, Vector>;  // flat parameter pairs (x, y)

/// Global co-coercivity:
/// <dG, x-y> >= 2 eta (1 - beta eta/2)||dG||^2 - eps ||x - y - eta dG||^2.
MarginsReport check_cocoercivity_global(const RiskContext& ctx, const TwoLayerParams& shape,
                                        const std::vector<ParamPair>& pairs, double eta,
                                        double eps, double beta);

struct PointwisePair {
  Vector x;      // w_s
  Vector y;      // w_s^(i)
  double eps_s;  // valid for both hess R(x) and hess R^(i)(y)
};

/// Pointwise co-coercivity with the cubic remainder:
/// RHS = 2 eta (1 - beta eta/2)||dG||^2 - (eps_s + 2 beta/N)||D||^2 - (rho/3)||D||^3,
/// D = x - y - eta dG.
MarginsReport check_cocoercivity_pointwise(const RiskContext& ctx, const TwoLayerParams& shape,
                                           const std::vector<PointwisePair>& pairs, double eta,
                                           double beta, double rho);

/// ||x - y - eta dG|| <= ||x - y|| / sqrt(1 - 2 eta eps); margins are
/// factor ||x-y|| - ||update diff||.
MarginsReport check_expansiveness(const RiskContext& ctx, const TwoLayerParams& shape,
                                  const std::vector<ParamPair>& pairs, double eta, double eps);

/// R(w_{s+1}) <= R(w_s) - (eta_s/2)||grad R(w_s)||^2 + 1e-9 (1 + |R|).
MarginsReport check_descent(const Trajectory& traj, const Schedule& schedule);

/// ||w_t - w_0|| <= sqrt(2 eta t (R(w_0) - R(w_t))) + 1e-9 along a
/// constant-step run.
MarginsReport check_trajectory_norm(const Trajectory& traj, double eta);

struct SweepCell {
  double c = 0.5;
  int M = 0;
  int rep = 0;
  bool failed = false;
  std::string fail_reason;
  double frob_A = 0.0;
  double norm_v = 0.0;
  double best_test_risk = 0.0;
  int steps = 0;
  double tw = 0.0;
  double eps_at_stop = 0.0;
  std::string stop_reason;
};

struct SweepSpec {
  std::vector<double> c_grid;
  std::vector<int> M_grid;
  int replications = 1;
  TeacherSpec teacher;  // data source; per-replication draw, shared across cells
  GDConfig gd;
  bool train_second_layer = true;
  Activation act;
  LossFn loss;
  std::uint64_t seed = 0;
  bool measure_eps = true;
  double eps_tol = 1e-4;
  int eps_max_iters = 150;
};

struct SweepResult {
  std::vector<SweepCell> cells;  // grid order: c major, then M, then rep
  std::map<int, double> spearman_c_vs_frob_by_M;       // over replication-averaged frob_A
  std::map<int, double> median_best_test_by_M;         // at the first c in the grid
};

SweepResult scaling_sweep(const SweepSpec& spec);
void write_sweep_csv(const SweepResult& result, const std::string& path);

struct DisjointSupportResult {
  TwoLayerParams omega_star;
  double tw = 0.0;            // a1 a2 d sqrt(s) / M^c
  double tw_upper_bound = 0.0;
  double v_norm = 0.0;        // a1 sqrt(d s)
  double A_frob = 0.0;        // a2 sqrt(d)
  double row_norm = 0.0;      // a2 / sqrt(s) on supported rows
  double gamma_l1 = 0.0;      // sqrt(s)
  double h_exact = 0.0;       // d a2^2 + sqrt(eta t) a1 sqrt(ds) + a1 a2 sqrt(ds)
  double ratio = 0.0;         // sqrt(trace)(1/(a1 sqrt s) + sqrt(eta t)/(a2 sqrt d) + 1/sqrt d)
};

/// First-layer rows supported on disjoint index blocks of size s with entries
/// a2/sqrt(s); second layer +a1 on the supported rows. Needs d*s <= M.
DisjointSupportResult disjoint_support_construct(int d, int s, int M, double a1, double a2,
                                                 double c, double trace = 1.0,
                                                 double eta_t = 1.0);

}  // namespace wclab
