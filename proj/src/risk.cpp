#include "wclab/risk.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace wclab {

namespace {

double softplus(double u) {
  // log(1 + e^u), exact at extreme margins
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u)));
}

double logistic_d3_abs(double u) {
  double s = 1.0 / (1.0 + std::exp(-std::abs(u)));
  return std::abs(s * (1.0 - s) * (1.0 - 2.0 * s));
}

}  // namespace

double LossFn::value(double yhat, double y) const { return softplus(-y * yhat); }

double LossFn::d1(double yhat, double y) const {
  // -y * sigma(-y yhat); safe for any margin
  double t = y * yhat;
  if (t >= 0) return -y * std::exp(-t) / (1.0 + std::exp(-t));
  return -y / (1.0 + std::exp(t));
}

double LossFn::d2(double yhat, double y) const {
  double t = std::abs(y * yhat);
  double s = 1.0 / (1.0 + std::exp(t));
  return s * (1.0 - s);
}

double LossFn::L_g_prime() const { return 1.0; }
double LossFn::sup_d2() const { return 0.25; }

double LossFn::sup_d3() const {
  static const double v = [] {
    const int n = 10'000'000;
    double best = 0.0;
    for (int i = 0; i <= n; ++i) {
      double u = -10.0 + 20.0 * static_cast<double>(i) / n;
      best = std::max(best, logistic_d3_abs(u));
    }
    return best;
  }();
  return v;
}

namespace {

void check_index(const RiskContext& ctx, Eigen::Index i) {
  if (i < 0 || i >= ctx.size()) throw std::out_of_range("risk: sample index out of range");
}

struct BatchActivation {
  Matrix S, S1;  // sigma(Z), sigma'(Z)
};

// Vectorised sigma / sigma' for the batched paths; one exp per entry.
BatchActivation batch_eval(const Activation& act, const Matrix& Z) {
  BatchActivation b;
  switch (act.kind) {
    case Activation::Kind::sigmoid: {
      b.S = ((-Z.array()).exp() + 1.0).inverse().matrix();
      b.S1 = (b.S.array() * (1.0 - b.S.array())).matrix();
      break;
    }
    case Activation::Kind::tanh: {
      b.S = Z.array().tanh().matrix();
      b.S1 = (1.0 - b.S.array().square()).matrix();
      break;
    }
    case Activation::Kind::linear: {
      b.S = Z;
      b.S1 = Matrix::Ones(Z.rows(), Z.cols());
      break;
    }
  }
  return b;
}

Matrix batch_d2(const Activation& act, const Matrix& Z, const BatchActivation& b) {
  switch (act.kind) {
    case Activation::Kind::sigmoid:
      return (b.S1.array() * (1.0 - 2.0 * b.S.array())).matrix();
    case Activation::Kind::tanh:
      return (-2.0 * b.S.array() * b.S1.array()).matrix();
    case Activation::Kind::linear:
      return Matrix::Zero(Z.rows(), Z.cols());
  }
  throw std::logic_error("bad activation kind");
}

Vector batch_losses(const LossFn& loss, const Vector& yhat, const Vector& y) {
  (void)loss;  // logistic is the only kind
  Eigen::ArrayXd u = -(y.array() * yhat.array());
  return (u.max(0.0) + (-u.abs()).exp().log1p()).matrix();
}

Vector batch_gprime(const Vector& yhat, const Vector& y) {
  // -y / (1 + e^{y yhat}) evaluated branch-free; e^t -> inf gives the correct 0 limit
  Eigen::ArrayXd t = y.array() * yhat.array();
  Eigen::ArrayXd e = (-t.abs()).exp();
  Eigen::ArrayXd s = e / (1.0 + e);                       // sigma(-|t|)
  Eigen::ArrayXd mag = (t >= 0).select(s, 1.0 / (1.0 + e));  // sigma(-t)
  return (-y.array() * mag).matrix();
}

Vector batch_gsecond(const Vector& yhat, const Vector& y) {
  Eigen::ArrayXd e = (-(y.array() * yhat.array()).abs()).exp();
  Eigen::ArrayXd s = e / (1.0 + e);
  return (s * (1.0 - s)).matrix();
}

struct Forward2 {
  Matrix Z;
  BatchActivation act;
  Vector yhat, gp;
};

Forward2 forward_pass(const RiskContext& ctx, const TwoLayerParams& p) {
  Forward2 f;
  f.Z = ctx.data->X * p.A.transpose();
  f.act = batch_eval(ctx.act, f.Z);
  f.yhat = p.scale() * (f.act.S * p.v);
  f.gp = batch_gprime(f.yhat, ctx.data->y);
  return f;
}

Vector assemble_grad(const RiskContext& ctx, const TwoLayerParams& p, const Forward2& f) {
  const Eigen::Index M = p.width(), d = p.input_dim(), N = ctx.size();
  const double w = p.scale() / static_cast<double>(N);
  Matrix W = f.act.S1.array().colwise() * f.gp.array();
  Matrix Ag = w * (p.v.asDiagonal() * (W.transpose() * ctx.data->X));
  Vector g(p.flat_dim());
  for (Eigen::Index j = 0; j < M; ++j) g.segment(j * d, d) = Ag.row(j).transpose();
  if (p.train_second_layer) g.segment(M * d, M) = w * (f.act.S.transpose() * f.gp);
  return g;
}

}  // namespace

double loss_at(const RiskContext& ctx, const TwoLayerParams& p, Eigen::Index i) {
  check_index(ctx, i);
  return ctx.loss.value(forward(p, ctx.act, ctx.data->X.row(i).transpose()), ctx.data->y[i]);
}

double loss_at(const RiskContext& ctx, const ThreeLayerParams& p, Eigen::Index i) {
  check_index(ctx, i);
  return ctx.loss.value(forward(p, ctx.act, ctx.data->X.row(i).transpose()), ctx.data->y[i]);
}

double loss_point(const RiskContext& ctx, const TwoLayerParams& p, const Vector& x, double y) {
  return ctx.loss.value(forward(p, ctx.act, x), y);
}

Vector grad_loss_point(const RiskContext& ctx, const TwoLayerParams& p, const Vector& x, double y) {
  return ctx.loss.d1(forward(p, ctx.act, x), y) * grad_f(p, ctx.act, x);
}

double empirical_risk(const RiskContext& ctx, const TwoLayerParams& p) {
  Forward2 f;
  f.Z = ctx.data->X * p.A.transpose();
  f.act = batch_eval(ctx.act, f.Z);
  f.yhat = p.scale() * (f.act.S * p.v);
  Vector losses = batch_losses(ctx.loss, f.yhat, ctx.data->y);
  return pairwise_mean({losses.data(), static_cast<std::size_t>(losses.size())});
}

double empirical_risk(const RiskContext& ctx, const ThreeLayerParams& p) {
  std::vector<double> losses(ctx.size());
  for (Eigen::Index i = 0; i < ctx.size(); ++i) losses[i] = loss_at(ctx, p, i);
  return pairwise_mean(losses);
}

Vector grad_R(const RiskContext& ctx, const TwoLayerParams& p) {
  Forward2 f = forward_pass(ctx, p);
  return assemble_grad(ctx, p, f);
}

Vector grad_R(const RiskContext& ctx, const ThreeLayerParams& p) {
  Vector g = Vector::Zero(p.flat_dim());
  for (Eigen::Index i = 0; i < ctx.size(); ++i) {
    const Vector x = ctx.data->X.row(i).transpose();
    g += ctx.loss.d1(forward(p, ctx.act, x), ctx.data->y[i]) * grad_f(p, ctx.act, x);
  }
  return g / static_cast<double>(ctx.size());
}

Vector risk_and_grad(const RiskContext& ctx, const TwoLayerParams& p, double& risk_out) {
  Forward2 f = forward_pass(ctx, p);
  Vector losses = batch_losses(ctx.loss, f.yhat, ctx.data->y);
  risk_out = pairwise_mean({losses.data(), static_cast<std::size_t>(losses.size())});
  return assemble_grad(ctx, p, f);
}

Vector grad_R_resampled(const RiskContext& ctx, const TwoLayerParams& p, Eigen::Index i,
                        const Vector& x_prime, double y_prime) {
  check_index(ctx, i);
  Vector g = grad_R(ctx, p);
  Vector gi = grad_loss_point(ctx, p, ctx.data->X.row(i).transpose(), ctx.data->y[i]);
  Vector gp = grad_loss_point(ctx, p, x_prime, y_prime);
  return g + (gp - gi) / static_cast<double>(ctx.size());
}

HvpParts hvp_R_parts(const RiskContext& ctx, const TwoLayerParams& p, const Vector& u) {
  if (u.size() != p.flat_dim()) throw std::invalid_argument("hvp_R: direction length mismatch");
  const Eigen::Index M = p.width(), d = p.input_dim(), N = ctx.size();
  const double sc = p.scale();
  const double w = sc / static_cast<double>(N);

  Forward2 f = forward_pass(ctx, p);
  Vector gpp = batch_gsecond(f.yhat, ctx.data->y);
  Matrix S2 = batch_d2(ctx.act, f.Z, f.act);

  Matrix Au(M, d);
  for (Eigen::Index j = 0; j < M; ++j) Au.row(j) = u.segment(j * d, d).transpose();
  Matrix P = ctx.data->X * Au.transpose();  // P_ij = <A(u)_j, x_i>

  Vector alpha = sc * ((f.act.S1.array() * P.array()).matrix() * p.v);
  Vector vu;
  if (p.train_second_layer) {
    vu = u.segment(M * d, M);
    alpha += sc * (f.act.S * vu);
  }

  HvpParts parts;
  parts.gauss_newton = Vector::Zero(u.size());
  parts.residual = Vector::Zero(u.size());

  Vector common = (gpp.array() * alpha.array()).matrix();
  Matrix Wgn = f.act.S1.array().colwise() * common.array();
  Matrix gnA = w * (p.v.asDiagonal() * (Wgn.transpose() * ctx.data->X));
  for (Eigen::Index j = 0; j < M; ++j)
    parts.gauss_newton.segment(j * d, d) = gnA.row(j).transpose();

  Matrix Wres = (S2.array() * P.array()).colwise() * f.gp.array();
  Matrix resA = w * (p.v.asDiagonal() * (Wres.transpose() * ctx.data->X));
  if (p.train_second_layer) {
    Matrix Wcross = f.act.S1.array().colwise() * f.gp.array();
    resA += w * (vu.asDiagonal() * (Wcross.transpose() * ctx.data->X));
  }
  for (Eigen::Index j = 0; j < M; ++j)
    parts.residual.segment(j * d, d) = resA.row(j).transpose();

  if (p.train_second_layer) {
    parts.gauss_newton.segment(M * d, M) = w * (f.act.S.transpose() * common);
    parts.residual.segment(M * d, M) =
        w * ((f.act.S1.array() * P.array()).matrix().transpose() * f.gp);
  }
  return parts;
}

HvpParts hvp_R_parts(const RiskContext& ctx, const ThreeLayerParams& p, const Vector& u) {
  if (u.size() != p.flat_dim()) throw std::invalid_argument("hvp_R: direction length mismatch");
  HvpParts parts;
  parts.gauss_newton = Vector::Zero(u.size());
  parts.residual = Vector::Zero(u.size());
  for (Eigen::Index i = 0; i < ctx.size(); ++i) {
    const Vector x = ctx.data->X.row(i).transpose();
    double yhat = forward(p, ctx.act, x);
    Vector gf = grad_f(p, ctx.act, x);
    parts.gauss_newton += ctx.loss.d2(yhat, ctx.data->y[i]) * gf.dot(u) * gf;
    parts.residual += ctx.loss.d1(yhat, ctx.data->y[i]) * hvp_f(p, ctx.act, x, u);
  }
  parts.gauss_newton /= static_cast<double>(ctx.size());
  parts.residual /= static_cast<double>(ctx.size());
  return parts;
}

Vector hvp_R(const RiskContext& ctx, const TwoLayerParams& p, const Vector& u) {
  return hvp_R_parts(ctx, p, u).total();
}

Vector hvp_R(const RiskContext& ctx, const ThreeLayerParams& p, const Vector& u) {
  return hvp_R_parts(ctx, p, u).total();
}

namespace {

template <typename Params>
Matrix dense_hessian_impl(const RiskContext& ctx, const Params& p) {
  const Eigen::Index n = p.flat_dim();
  if (n > 2000) throw std::invalid_argument("dense_hessian: flat dimension exceeds guard (2000)");
  Matrix H(n, n);
  Vector e = Vector::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    e[k] = 1.0;
    H.col(k) = hvp_R(ctx, p, e);
    e[k] = 0.0;
  }
  return H;
}

}  // namespace

Matrix dense_hessian(const RiskContext& ctx, const TwoLayerParams& p) {
  return dense_hessian_impl(ctx, p);
}

Matrix dense_hessian(const RiskContext& ctx, const ThreeLayerParams& p) {
  return dense_hessian_impl(ctx, p);
}

Matrix dense_loss_hessian(const RiskContext& ctx, const TwoLayerParams& p, Eigen::Index i) {
  check_index(ctx, i);
  const Eigen::Index n = p.flat_dim();
  if (n > 2000) throw std::invalid_argument("dense_loss_hessian: flat dimension exceeds guard");
  const Vector x = ctx.data->X.row(i).transpose();
  const double y = ctx.data->y[i];
  double yhat = forward(p, ctx.act, x);
  Vector gf = grad_f(p, ctx.act, x);
  double gp = ctx.loss.d1(yhat, y), gpp = ctx.loss.d2(yhat, y);
  Matrix H = gpp * (gf * gf.transpose());
  Vector e = Vector::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    e[k] = 1.0;
    H.col(k) += gp * hvp_f(p, ctx.act, x, e);
    e[k] = 0.0;
  }
  return H;
}

double population_risk_estimate(const RiskContext& ctx_test, const TwoLayerParams& p) {
  if (ctx_test.data == nullptr || ctx_test.data->size() == 0)
    throw std::invalid_argument("population_risk_estimate: empty test set");
  return empirical_risk(ctx_test, p);
}

}  // namespace wclab
