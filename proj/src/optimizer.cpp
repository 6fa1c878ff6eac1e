#include "wclab/optimizer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace wclab {

double Schedule::step(int s) const {
  switch (kind) {
    case Kind::constant: return eta;
    case Kind::polylog: return std::pow(static_cast<double>(s + 1), -alpha) / std::log(horizon);
  }
  throw std::logic_error("bad schedule kind");
}

void Schedule::validate() const {
  switch (kind) {
    case Kind::constant:
      // eta = 0 is allowed: it gives the degenerate constant trajectory
      if (!(eta >= 0.0) || !std::isfinite(eta))
        throw std::invalid_argument("schedule: eta must be non-negative");
      return;
    case Kind::polylog:
      if (!(alpha > 0.0)) throw std::invalid_argument("schedule: alpha must be positive");
      if (horizon < 3) throw std::invalid_argument("schedule: polylog horizon must be >= 3");
      return;
  }
  throw std::logic_error("bad schedule kind");
}

std::vector<double> step_sizes(const Schedule& schedule, int t) {
  schedule.validate();
  if (t < 1) throw std::invalid_argument("step_sizes: t >= 1 required");
  std::vector<double> etas(t);
  for (int s = 0; s < t; ++s) etas[s] = schedule.step(s);
  return etas;
}

void GDConfig::validate() const {
  schedule.validate();
  if (t_max < 1) throw std::invalid_argument("gd: t_max >= 1 required");
  if (eval_every < 1) throw std::invalid_argument("gd: eval_every >= 1 required");
  if (patience < 1) throw std::invalid_argument("gd: patience >= 1 required");
  if (record_stride < 1) throw std::invalid_argument("gd: record_stride >= 1 required");
}

std::string to_string(StopReason r) {
  return r == StopReason::early_stop ? "early_stop" : "max_iters";
}

DivergenceError::DivergenceError(int step, double risk)
    : std::runtime_error("gradient descent diverged at step " + std::to_string(step) +
                         " (risk " + std::to_string(risk) + ")"),
      step_(step) {}

TwoLayerParams init_zero_gaussian(int M, int d, double c, bool train_second_layer,
                                  std::uint64_t seed) {
  TwoLayerParams p;
  p.A = Matrix::Zero(M, d);
  p.v.resize(M);
  p.c = c;
  p.train_second_layer = train_second_layer;
  auto rng = make_rng(mix_seed(seed, 0x1217ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int j = 0; j < M; ++j) p.v[j] = gauss(rng);
  return p;
}

namespace {

void apply_step(TwoLayerParams& w, const Vector& grad, double eta) {
  const Eigen::Index M = w.width(), d = w.input_dim();
  for (Eigen::Index j = 0; j < M; ++j)
    w.A.row(j) -= eta * grad.segment(j * d, d).transpose();
  if (w.train_second_layer) w.v -= eta * grad.segment(M * d, M);
}

struct Recorder {
  Trajectory traj;
  const TwoLayerParams* w0;
  Vector flat0;
  double R0 = 0.0;
  int stride;

  Recorder(const TwoLayerParams& init, int record_stride) : w0(&init), stride(record_stride) {
    flat0 = flatten(init);
  }

  void record(int s, const TwoLayerParams& w, double R, double grad_norm) {
    traj.R_series.push_back(R);
    traj.grad_norm_series.push_back(grad_norm);
    traj.dist_from_init_series.push_back((flatten(w) - flat0).norm());
    traj.v_inf_series.push_back(w.v.lpNorm<Eigen::Infinity>());
    if (s % stride == 0) traj.snapshots.emplace_back(s, w);
  }

  void finish(int s, const TwoLayerParams& w, StopReason reason) {
    traj.steps_run = s;
    traj.stop_reason = reason;
    traj.final_params = w;
    if (traj.snapshots.empty() || traj.snapshots.back().first != s)
      traj.snapshots.emplace_back(s, w);
  }
};

void check_divergence(int s, double R, double R0) {
  if (!std::isfinite(R) || R > 1e6 * std::max(R0, 1e-300)) throw DivergenceError(s, R);
}

}  // namespace

Trajectory run_gd(const RiskContext& ctx_train, const RiskContext* ctx_test,
                  const GDConfig& config, const TwoLayerParams& w0) {
  config.validate();
  w0.validate();
  TwoLayerParams w = w0;
  Recorder rec(w0, config.record_stride);

  double prev_test = std::numeric_limits<double>::quiet_NaN();
  int increase_streak = 0;
  bool stopped_early = false;
  int s = 0;
  double R0 = 0.0;

  for (;; ++s) {
    double R = 0.0;
    Vector g = risk_and_grad(ctx_train, w, R);
    if (s == 0) R0 = R;
    check_divergence(s, R, R0);
    rec.record(s, w, R, g.norm());

    if (ctx_test != nullptr && s % config.eval_every == 0) {
      double testR = population_risk_estimate(*ctx_test, w);
      rec.traj.testR_points.emplace_back(s, testR);
      if (!(rec.traj.best_test_step >= 0) || testR < rec.traj.best_test_risk) {
        rec.traj.best_test_risk = testR;
        rec.traj.best_test_step = s;
        rec.traj.best_test_params = w;
      }
      if (!std::isnan(prev_test)) {
        increase_streak = testR > prev_test ? increase_streak + 1 : 0;
        if (increase_streak >= config.patience) {
          stopped_early = true;
        }
      }
      prev_test = testR;
    }
    if (stopped_early || s >= config.t_max) break;
    apply_step(w, g, config.schedule.step(s));
  }
  rec.finish(s, w, stopped_early ? StopReason::early_stop : StopReason::max_iters);
  return rec.traj;
}

PairedResult run_paired(const RiskContext& ctx_train, const GDConfig& config,
                        const TwoLayerParams& w0, Eigen::Index i, const Vector& x_prime,
                        double y_prime) {
  config.validate();
  w0.validate();
  if (i < 0 || i >= ctx_train.size()) throw std::out_of_range("run_paired: index out of range");

  TwoLayerParams w = w0;
  TwoLayerParams wi = w0;
  Recorder rec(w0, config.record_stride);
  Recorder rec_i(w0, config.record_stride);
  PairedResult out;

  const double loss_shift_scale = 1.0 / static_cast<double>(ctx_train.size());
  int s = 0;
  double R0 = 0.0;
  for (;; ++s) {
    double R = 0.0;
    Vector g = risk_and_grad(ctx_train, w, R);
    if (s == 0) R0 = R;
    check_divergence(s, R, R0);

    double R_plain = 0.0;
    Vector gi_plain = risk_and_grad(ctx_train, wi, R_plain);
    Vector gi = gi_plain +
                (grad_loss_point(ctx_train, wi, x_prime, y_prime) -
                 grad_loss_point(ctx_train, wi, ctx_train.data->X.row(i).transpose(),
                                 ctx_train.data->y[i])) *
                    loss_shift_scale;
    double Ri = R_plain + (loss_point(ctx_train, wi, x_prime, y_prime) -
                           loss_at(ctx_train, wi, i)) *
                              loss_shift_scale;
    check_divergence(s, Ri, R0);

    rec.record(s, w, R, g.norm());
    rec_i.record(s, wi, Ri, gi.norm());
    out.deviation_series.push_back((flatten(w) - flatten(wi)).norm());

    if (s >= config.t_max) break;
    const double eta = config.schedule.step(s);
    apply_step(w, g, eta);
    apply_step(wi, gi, eta);
  }
  rec.finish(s, w, StopReason::max_iters);
  rec_i.finish(s, wi, StopReason::max_iters);
  out.traj = std::move(rec.traj);
  out.traj_i = std::move(rec_i.traj);
  return out;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write trajectory csv: " + path);
  out << "step,R,testR,grad_norm,dist_init,v_inf\n";
  std::size_t t = 0;
  for (int s = 0; s <= traj.steps_run; ++s) {
    out << s << ',' << format_double(traj.R_series[s]) << ',';
    if (t < traj.testR_points.size() && traj.testR_points[t].first == s) {
      out << format_double(traj.testR_points[t].second);
      ++t;
    }
    out << ',' << format_double(traj.grad_norm_series[s]) << ','
        << format_double(traj.dist_from_init_series[s]) << ','
        << format_double(traj.v_inf_series[s]) << '\n';
  }
}

}  // namespace wclab
