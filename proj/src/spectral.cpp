#include "wclab/spectral.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace wclab {

namespace {

Vector random_unit(Eigen::Index p, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector u(p);
  for (Eigen::Index i = 0; i < p; ++i) u[i] = gauss(rng);
  double n = u.norm();
  return n > 0 ? Vector(u / n) : Vector(Vector::Unit(p, 0));
}

void probe_oracle(const HvpOracle& hvp, Eigen::Index p, std::mt19937_64& rng) {
  for (int k = 0; k < 3; ++k) {
    Vector a = random_unit(p, rng), b = random_unit(p, rng);
    Vector ha = hvp(a), hb = hvp(b);
    double scale = 1.0 + ha.norm() + hb.norm();
    if (std::abs(ha.dot(b) - a.dot(hb)) > 1e-8 * scale)
      throw std::invalid_argument("lambda_min_estimate: oracle is not symmetric");
    Vector hsum = hvp(a + b);
    if ((hsum - ha - hb).norm() > 1e-8 * scale)
      throw std::invalid_argument("lambda_min_estimate: oracle is not linear");
  }
}

}  // namespace

SpectralEstimate lambda_min_estimate(const HvpOracle& hvp, Eigen::Index p, double tol,
                                     int max_iters, std::uint64_t seed) {
  if (p < 1) throw std::invalid_argument("lambda_min_estimate: p >= 1 required");
  auto rng = make_rng(mix_seed(seed, 0x5EC7ULL));
  probe_oracle(hvp, p, rng);

  // Overestimate ||H||_2 with 20 plain power steps, then shift.
  Vector u = random_unit(p, rng);
  double norm_est = 0.0;
  for (int k = 0; k < 20; ++k) {
    Vector hu = hvp(u);
    norm_est = hu.norm();
    if (norm_est <= 1e-300) break;
    u = hu / norm_est;
  }
  const double mu = 1.1 * norm_est + 1e-12;

  SpectralEstimate est;
  est.method = SpectralEstimate::Method::shifted_power;
  u = random_unit(p, rng);
  double lambda = 0.0;
  int iters = 0;
  for (; iters < max_iters; ++iters) {
    Vector hu = hvp(u);
    lambda = u.dot(hu);  // Rayleigh quotient, ||u|| == 1
    double resid = (hu - lambda * u).norm();
    est.residual_norm = resid;
    if (resid <= tol) {
      est.converged = true;
      break;
    }
    Vector w = mu * u - hu;  // power step on the shifted operator
    double wn = w.norm();
    if (wn <= 1e-300) {  // u already an eigenvector of H with eigenvalue mu
      est.converged = est.residual_norm <= tol;
      break;
    }
    u = w / wn;
  }
  est.lambda_min = lambda;
  est.iterations_used = iters;
  return est;
}

double lambda_min_dense(const Matrix& H) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double two_layer_bound(const TwoLayerParams& p, const CovarianceSummary& cov,
                       const Activation& act, const LossFn& loss) {
  const double v_inf = p.v.lpNorm<Eigen::Infinity>();
  double value = loss.L_g_prime() * act.L_sigma_second() * v_inf * cov.spectral_norm;
  if (p.train_second_layer)
    value += 2.0 * act.L_sigma_prime() * loss.L_g_prime() * std::sqrt(cov.spectral_norm);
  return -value * p.scale();
}

CovarianceSummary middle_layer_covariance(const Matrix& A2) {
  CovarianceSummary cov;
  Matrix s = (A2.transpose() * A2) / static_cast<double>(A2.rows());
  cov.sigma_hat = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov.sigma_hat, Eigen::EigenvaluesOnly);
  cov.spectral_norm = std::max(0.0, eig.eigenvalues().maxCoeff());
  cov.trace = cov.sigma_hat.trace();
  return cov;
}

double three_layer_bound(const ThreeLayerParams& p, const CovarianceSummary& cov,
                         const CovarianceSummary& cov_A2, const Activation& act,
                         const LossFn& loss) {
  const double M1 = static_cast<double>(p.A1.rows());
  const double M2 = static_cast<double>(p.A2.rows());
  const double v_inf = p.v.lpNorm<Eigen::Infinity>();
  const double first = act.L_sigma_second() * loss.L_g_prime() * cov.spectral_norm *
                       cov_A2.spectral_norm * v_inf /
                       (std::pow(M1, 2.0 * p.c) * std::pow(M2, p.c - 1.0));
  const double second = 2.0 * loss.L_g_prime() * act.L_sigma_prime() *
                        std::sqrt(cov.spectral_norm * cov_A2.spectral_norm) /
                        (std::pow(M2, p.c - 0.5) * std::pow(M1, p.c));
  return -(first + second);
}

std::vector<EpsilonPoint> epsilon_trajectory(const RiskContext& ctx, const Trajectory& traj,
                                             double tol, int max_iters, std::uint64_t seed) {
  if (traj.snapshots.empty()) throw std::invalid_argument("epsilon_trajectory: no snapshots");
  CovarianceSummary cov = empirical_covariance(*ctx.data);
  std::vector<EpsilonPoint> out(traj.snapshots.size());
  parallel_for(static_cast<int>(traj.snapshots.size()), [&](int k) {
    const auto& [step, params] = traj.snapshots[k];
    HvpOracle oracle = [&](const Vector& u) { return hvp_R(ctx, params, u); };
    SpectralEstimate est =
        lambda_min_estimate(oracle, params.flat_dim(), tol, max_iters,
                            mix_seed(seed, static_cast<std::uint64_t>(step)));
    EpsilonPoint pt;
    pt.step = step;
    pt.lambda_min = est.lambda_min;
    pt.epsilon = std::max(0.0, -est.lambda_min);
    pt.closed_form_bound = two_layer_bound(params, cov, ctx.act, ctx.loss);
    pt.residual_norm = est.residual_norm;
    pt.converged = est.converged;
    out[k] = pt;
  });
  return out;
}

void write_spectrum_csv(const std::vector<EpsilonPoint>& points, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write spectrum csv: " + path);
  out << "step,lambda_min,epsilon_s,closed_form_bound,residual_norm\n";
  for (const auto& pt : points)
    out << pt.step << ',' << format_double(pt.lambda_min) << ',' << format_double(pt.epsilon)
        << ',' << format_double(pt.closed_form_bound) << ',' << format_double(pt.residual_norm)
        << '\n';
}

}  // namespace wclab
