#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "wclab/risk.hpp"

namespace wclab {

struct Schedule {
  enum class Kind { constant, polylog };
  Kind kind = Kind::constant;
  double eta = 0.1;    // constant step
  double alpha = 0.75; // polylog exponent
  int horizon = 100;   // polylog t; needs t >= 3 so log t > 1

  // eta_s; polylog gives (s+1)^(-alpha) / log(horizon)
  double step(int s) const;
  void validate() const;
};

std::vector<double> step_sizes(const Schedule& schedule, int t);

enum class InitKind { zero_first_gaussian_second, custom };

struct GDConfig {
  Schedule schedule;
  int t_max = 1000;
  std::uint64_t seed = 0;
  InitKind init = InitKind::zero_first_gaussian_second;
  int eval_every = 500;   // iterations between test-risk estimates
  int patience = 5;       // consecutive increasing eval batches before stop
  int record_stride = 100;

  void validate() const;
};

enum class StopReason { max_iters, early_stop };
std::string to_string(StopReason r);

struct Trajectory {
  int steps_run = 0;
  StopReason stop_reason = StopReason::max_iters;
  // per-step series, indexed s = 0..steps_run
  std::vector<double> R_series;
  std::vector<double> grad_norm_series;
  std::vector<double> dist_from_init_series;
  std::vector<double> v_inf_series;
  // sparse test evaluations (step, estimated population risk)
  std::vector<std::pair<int, double>> testR_points;
  // sparse iterate snapshots (step, params); always includes 0 and the last step
  std::vector<std::pair<int, TwoLayerParams>> snapshots;
  TwoLayerParams final_params;
  double best_test_risk = std::numeric_limits<double>::quiet_NaN();
  int best_test_step = -1;
  TwoLayerParams best_test_params;
};

struct PairedResult {
  Trajectory traj;    // trained on the original sample
  Trajectory traj_i;  // gradient of the risk with Z_i resampled to z'
  std::vector<double> deviation_series;  // ||w_s - w_s^(i)||, s = 0..steps_run
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int step, double risk);
  int step() const { return step_; }

 private:
  int step_;
};

TwoLayerParams init_zero_gaussian(int M, int d, double c, bool train_second_layer,
                                  std::uint64_t seed);

/// Full-batch gradient descent w_{s+1} = w_s - eta_s grad R(w_s), with the
/// every-`eval_every`-iterations test estimate and consecutive-increase stop.
Trajectory run_gd(const RiskContext& ctx_train, const RiskContext* ctx_test,
                  const GDConfig& config, const TwoLayerParams& w0);

/// Lockstep pair: the second run follows grad R^(i) with Z_i resampled to
/// (x_prime, y_prime). Shares schedule and initialisation; no early stop.
PairedResult run_paired(const RiskContext& ctx_train, const GDConfig& config,
                        const TwoLayerParams& w0, Eigen::Index i, const Vector& x_prime,
                        double y_prime);

void write_trajectory_csv(const Trajectory& traj, const std::string& path);

}  // namespace wclab
