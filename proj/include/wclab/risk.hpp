#pragma once

#include "wclab/data.hpp"
#include "wclab/model.hpp"
#include "wclab/util.hpp"

namespace wclab {

/// Convex outer loss g(yhat, y) with bounded first derivative.
struct LossFn {
  enum class Kind { logistic };
  Kind kind = Kind::logistic;

  double value(double yhat, double y) const;
  double d1(double yhat, double y) const;  // g'
  double d2(double yhat, double y) const;  // g'' >= 0
  double L_g_prime() const;                // sup |g'|
  double sup_d2() const;                   // sup g''
  double sup_d3() const;                   // sup |g'''|, grid-maximised once
};

struct RiskContext {
  const Dataset* data = nullptr;
  LossFn loss;
  Activation act;

  Eigen::Index size() const { return data->size(); }
};

struct HvpParts {
  Vector gauss_newton;  // (1/N) sum g'' <u,grad f> grad f   (PSD quadratic form)
  Vector residual;      // (1/N) sum g' hess f . u            (sole source of negativity)
  Vector total() const { return gauss_newton + residual; }
};

// Per-sample surface (the definitions; batched paths are checked against these).
double loss_at(const RiskContext& ctx, const TwoLayerParams& p, Eigen::Index i);
double loss_at(const RiskContext& ctx, const ThreeLayerParams& p, Eigen::Index i);
double loss_point(const RiskContext& ctx, const TwoLayerParams& p, const Vector& x, double y);
Vector grad_loss_point(const RiskContext& ctx, const TwoLayerParams& p, const Vector& x, double y);

double empirical_risk(const RiskContext& ctx, const TwoLayerParams& p);
double empirical_risk(const RiskContext& ctx, const ThreeLayerParams& p);
Vector grad_R(const RiskContext& ctx, const TwoLayerParams& p);
Vector grad_R(const RiskContext& ctx, const ThreeLayerParams& p);

// Shared forward pass; cheaper inside the training loop.
Vector risk_and_grad(const RiskContext& ctx, const TwoLayerParams& p, double& risk_out);

// grad R + (grad l(w, z') - grad l(w, Z_i)) / N
Vector grad_R_resampled(const RiskContext& ctx, const TwoLayerParams& p, Eigen::Index i,
                        const Vector& x_prime, double y_prime);

Vector hvp_R(const RiskContext& ctx, const TwoLayerParams& p, const Vector& u);
Vector hvp_R(const RiskContext& ctx, const ThreeLayerParams& p, const Vector& u);
HvpParts hvp_R_parts(const RiskContext& ctx, const TwoLayerParams& p, const Vector& u);
HvpParts hvp_R_parts(const RiskContext& ctx, const ThreeLayerParams& p, const Vector& u);

// Dense risk Hessian assembled column-by-column via hvp_R on basis vectors.
// Guarded at flat dimension <= 2000.
Matrix dense_hessian(const RiskContext& ctx, const TwoLayerParams& p);
Matrix dense_hessian(const RiskContext& ctx, const ThreeLayerParams& p);

// Dense per-sample loss Hessian (for Hessian-Lipschitz sampling).
Matrix dense_loss_hessian(const RiskContext& ctx, const TwoLayerParams& p, Eigen::Index i);

double population_risk_estimate(const RiskContext& ctx_test, const TwoLayerParams& p);

}  // namespace wclab
