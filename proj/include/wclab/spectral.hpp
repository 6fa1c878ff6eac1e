#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wclab/optimizer.hpp"
#include "wclab/risk.hpp"

namespace wclab {

struct SpectralEstimate {
  double lambda_min = 0.0;
  int iterations_used = 0;
  double residual_norm = 0.0;  // ||H u - lambda u|| / ||u|| at the returned pair
  bool converged = false;      // residual_norm <= tol
  enum class Method { shifted_power, dense } method = Method::shifted_power;
};

using HvpOracle = std::function<Vector(const Vector&)>;

/// Smallest eigenvalue of a symmetric operator given only matrix-vector
/// products: power iteration on (mu I - H) with mu a 1.1x overestimate of
/// ||H||_2 from 20 power steps, Rayleigh-quotient value at the end.
/// The oracle is probed for linearity+symmetry on 3 random pairs first.
SpectralEstimate lambda_min_estimate(const HvpOracle& hvp, Eigen::Index p, double tol,
                                     int max_iters, std::uint64_t seed);

double lambda_min_dense(const Matrix& H);

/// Closed-form floor on lambda_min(hess R) for the two-layer network.
/// The cross term is dropped when the second layer is fixed (only the
/// first-layer block of the Hessian is live).
double two_layer_bound(const TwoLayerParams& p, const CovarianceSummary& cov,
                       const Activation& act, const LossFn& loss);

/// Middle-layer empirical covariance (A2^T A2) / M2 with its spectral data.
CovarianceSummary middle_layer_covariance(const Matrix& A2);

double three_layer_bound(const ThreeLayerParams& p, const CovarianceSummary& cov,
                         const CovarianceSummary& cov_A2, const Activation& act,
                         const LossFn& loss);

struct EpsilonPoint {
  int step = 0;
  double lambda_min = 0.0;
  double epsilon = 0.0;  // max(0, -lambda_min)
  double closed_form_bound = 0.0;
  double residual_norm = 0.0;
  bool converged = false;
};

/// epsilon_s along a trajectory's snapshots, via the iterative estimator on
/// the risk Hessian at each stored iterate.
std::vector<EpsilonPoint> epsilon_trajectory(const RiskContext& ctx, const Trajectory& traj,
                                             double tol, int max_iters, std::uint64_t seed);

void write_spectrum_csv(const std::vector<EpsilonPoint>& points, const std::string& path);

}  // namespace wclab
