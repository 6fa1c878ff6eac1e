#include "wclab/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wclab/bounds.hpp"
#include "wclab/data.hpp"
#include "wclab/lab.hpp"
#include "wclab/optimizer.hpp"
#include "wclab/spectral.hpp"

namespace wclab {

namespace {

using nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Setup-phase wrapper: anything that fails while materialising the config
// (dataset load, model construction) is a validation error, exit code 1.
template <typename F>
auto setup_phase(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void check_keys(const json& j, const std::string& where, const std::set<std::string>& required,
                const std::set<std::string>& optional) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& key : required)
    if (!j.contains(key)) throw ConfigError(where + ": missing required key \"" + key + "\"");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!required.count(it.key()) && !optional.count(it.key()))
      throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

struct DatasetBundle {
  Dataset train;
  std::optional<Dataset> test;
  std::optional<TwoLayerParams> teacher;
  json echo;
};

DatasetBundle load_dataset(const json& cfg, std::uint64_t seed) {
  check_keys(cfg, "dataset", {"kind"},
             {"M_star", "d", "mu", "c", "seed", "N_train", "N_test", "label_noise", "path",
              "label_column", "has_header", "standardize", "test_path", "subsample_n",
              "subsample_seed"});
  DatasetBundle out;
  const std::string kind = cfg.at("kind").get<std::string>();
  if (kind == "teacher") {
    check_keys(cfg, "dataset(teacher)", {"kind", "M_star", "d"},
               {"mu", "c", "seed", "N_train", "N_test", "label_noise"});
    TeacherSpec ts;
    ts.M_star = cfg.at("M_star").get<int>();
    ts.d = cfg.at("d").get<int>();
    ts.mu = get_or(cfg, "mu", 0.0);
    ts.c = get_or(cfg, "c", 0.5);
    ts.seed = get_or<std::uint64_t>(cfg, "seed", seed);
    ts.N_train = get_or(cfg, "N_train", 100);
    ts.N_test = get_or(cfg, "N_test", 100);
    ts.label_noise = get_or(cfg, "label_noise", false);
    SynthResult synth = synth_teacher(ts);
    out.train = std::move(synth.train);
    out.test = std::move(synth.test);
    out.teacher = std::move(synth.teacher);
    out.echo = {{"kind", "teacher"},   {"M_star", ts.M_star},
                {"d", ts.d},           {"mu", ts.mu},
                {"c", ts.c},           {"seed", ts.seed},
                {"N_train", ts.N_train}, {"N_test", ts.N_test},
                {"label_noise", ts.label_noise}};
    return out;
  }
  if (kind == "csv") {
    check_keys(cfg, "dataset(csv)", {"kind", "path", "label_column"},
               {"has_header", "standardize", "test_path", "subsample_n", "subsample_seed"});
    const std::string path = cfg.at("path").get<std::string>();
    const int label_column = cfg.at("label_column").get<int>();
    const bool has_header = get_or(cfg, "has_header", false);
    const bool standardize = get_or(cfg, "standardize", false);
    out.train = load_csv(path, label_column, has_header);
    if (standardize) out.train = standardize_columns(out.train);
    std::uint64_t sub_seed = get_or<std::uint64_t>(cfg, "subsample_seed", seed);
    int sub_n = get_or(cfg, "subsample_n", 0);
    if (sub_n > 0) out.train = subsample(out.train, sub_n, sub_seed);
    out.echo = {{"kind", "csv"},
                {"path", path},
                {"label_column", label_column},
                {"has_header", has_header},
                {"standardize", standardize},
                {"subsample_n", sub_n},
                {"subsample_seed", sub_seed}};
    if (cfg.contains("test_path")) {
      out.test = load_csv(cfg.at("test_path").get<std::string>(), label_column, has_header);
      if (standardize) out.test = standardize_columns(*out.test);
      out.echo["test_path"] = cfg.at("test_path").get<std::string>();
    }
    return out;
  }
  throw ConfigError("dataset: unknown kind \"" + kind + "\"");
}

struct ModelBundle {
  int M = 0;
  double c = 0.5;
  bool train_second_layer = true;
  Activation act;
  json echo;
};

ModelBundle load_model(const json& cfg, Eigen::Index data_dim) {
  check_keys(cfg, "model", {"M", "c"}, {"d", "train_second_layer", "activation"});
  ModelBundle out;
  out.M = cfg.at("M").get<int>();
  out.c = cfg.at("c").get<double>();
  out.train_second_layer = get_or(cfg, "train_second_layer", true);
  out.act = Activation::parse(get_or<std::string>(cfg, "activation", "sigmoid"));
  if (cfg.contains("d") && cfg.at("d").get<Eigen::Index>() != data_dim)
    throw ConfigError("model: \"d\" does not match the dataset dimension");
  out.echo = {{"M", out.M},
              {"c", out.c},
              {"d", data_dim},
              {"train_second_layer", out.train_second_layer},
              {"activation", out.act.name()}};
  return out;
}

GDConfig load_gd(const json& cfg, std::uint64_t seed, json& echo) {
  check_keys(cfg, "gd", {"schedule"}, {"t_max", "eval_every", "patience", "record_stride"});
  const json& sj = cfg.at("schedule");
  check_keys(sj, "gd.schedule", {"kind"}, {"eta", "alpha", "horizon"});
  GDConfig gd;
  const std::string kind = sj.at("kind").get<std::string>();
  if (kind == "constant") {
    gd.schedule.kind = Schedule::Kind::constant;
    if (!sj.contains("eta")) throw ConfigError("gd.schedule: missing required key \"eta\"");
    gd.schedule.eta = sj.at("eta").get<double>();
  } else if (kind == "polylog") {
    gd.schedule.kind = Schedule::Kind::polylog;
    gd.schedule.alpha = get_or(sj, "alpha", 0.75);
    if (!sj.contains("horizon"))
      throw ConfigError("gd.schedule: missing required key \"horizon\"");
    gd.schedule.horizon = sj.at("horizon").get<int>();
  } else {
    throw ConfigError("gd.schedule: unknown kind \"" + kind + "\"");
  }
  gd.t_max = get_or(cfg, "t_max", 1000);
  gd.eval_every = get_or(cfg, "eval_every", 500);
  gd.patience = get_or(cfg, "patience", 5);
  gd.record_stride = get_or(cfg, "record_stride", std::max(1, gd.t_max / 50));
  gd.seed = seed;
  gd.validate();
  echo["gd"] = {{"schedule", kind == "constant"
                                 ? json{{"kind", "constant"}, {"eta", gd.schedule.eta}}
                                 : json{{"kind", "polylog"},
                                        {"alpha", gd.schedule.alpha},
                                        {"horizon", gd.schedule.horizon}}},
                {"t_max", gd.t_max},
                {"eval_every", gd.eval_every},
                {"patience", gd.patience},
                {"record_stride", gd.record_stride}};
  return gd;
}

struct Outputs {
  std::filesystem::path dir;

  std::filesystem::path path(const std::string& name) const { return dir / name; }
  void write_text(const std::string& name, const std::string& text) const {
    std::ofstream out(path(name), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << text;
  }
  void write_json(const std::string& name, const json& j) const {
    write_text(name, j.dump(2) + "\n");
  }
};

struct Invocation {
  std::string command;
  json config;
  Outputs out;
  std::uint64_t seed = 0;
};

json base_summary(const Invocation& inv, const Dataset& ds) {
  json s;
  s["command"] = inv.command;
  s["seed"] = inv.seed;
  s["dataset_hash"] = ds.content_hash();
  return s;
}

// ---------------------------------------------------------------- train ----

int cmd_train(Invocation& inv) {
  check_keys(inv.config, "config", {"dataset", "model", "gd"}, {"command", "seed", "out", "threads"});
  DatasetBundle data = setup_phase([&] { return load_dataset(inv.config.at("dataset"), inv.seed); });
  ModelBundle model = setup_phase([&] { return load_model(inv.config.at("model"), data.train.dim()); });
  json echo;
  GDConfig gd = setup_phase([&] { return load_gd(inv.config.at("gd"), inv.seed, echo); });
  echo["command"] = "train";
  echo["seed"] = inv.seed;
  echo["dataset"] = data.echo;
  echo["model"] = model.echo;

  RiskContext ctx_train{&data.train, LossFn{}, model.act};
  std::optional<RiskContext> ctx_test;
  if (data.test) ctx_test = RiskContext{&*data.test, LossFn{}, model.act};

  TwoLayerParams w0 = init_zero_gaussian(model.M, static_cast<int>(data.train.dim()), model.c,
                                         model.train_second_layer, inv.seed);
  Trajectory traj = run_gd(ctx_train, ctx_test ? &*ctx_test : nullptr, gd, w0);
  write_trajectory_csv(traj, inv.out.path("results.csv").string());

  json summary = base_summary(inv, data.train);
  summary["stop_reason"] = to_string(traj.stop_reason);
  summary["steps_run"] = traj.steps_run;
  summary["final_R"] = traj.R_series.back();
  summary["final_frob_A"] = traj.final_params.A.norm();
  summary["final_norm_v"] = traj.final_params.v.norm();
  summary["final_v_inf"] = traj.final_params.v.lpNorm<Eigen::Infinity>();
  summary["total_weight"] = total_weight(traj.final_params).value;
  if (traj.best_test_step >= 0) {
    summary["best_test_risk"] = traj.best_test_risk;
    summary["best_test_step"] = traj.best_test_step;
  }
  inv.out.write_json("summary.json", summary);
  inv.out.write_json("config_echo.json", echo);
  return 0;
}

// ------------------------------------------------------------ stability ----

int cmd_stability(Invocation& inv) {
  check_keys(inv.config, "config", {"dataset", "model", "gd", "stability"},
             {"command", "seed", "out", "threads"});
  const json& sj = inv.config.at("stability");
  check_keys(sj, "stability", {"k_resamples"}, {"reservoir_size"});
  DatasetBundle data = setup_phase([&] { return load_dataset(inv.config.at("dataset"), inv.seed); });
  ModelBundle model = setup_phase([&] { return load_model(inv.config.at("model"), data.train.dim()); });
  json echo;
  GDConfig gd = setup_phase([&] { return load_gd(inv.config.at("gd"), inv.seed, echo); });

  const int k = sj.at("k_resamples").get<int>();
  const int reservoir_size = get_or(sj, "reservoir_size", k);
  if (!data.test) throw ConfigError("stability: dataset must provide a test/reservoir split");
  Dataset reservoir = subsample(*data.test, reservoir_size, mix_seed(inv.seed, 0x4E5ULL));

  echo["command"] = "stability";
  echo["seed"] = inv.seed;
  echo["dataset"] = data.echo;
  echo["model"] = model.echo;
  echo["stability"] = {{"k_resamples", k}, {"reservoir_size", reservoir_size}};

  RiskContext ctx{&data.train, LossFn{}, model.act};
  TwoLayerParams w0 = init_zero_gaussian(model.M, static_cast<int>(data.train.dim()), model.c,
                                         model.train_second_layer, inv.seed);
  StabilityResult res = stability_experiment(ctx, reservoir, gd, w0, k, inv.seed);

  std::ostringstream csv;
  csv << "step,max_deviation,mean_deviation\n";
  const std::size_t T = res.per_step_max_deviation.size();
  for (std::size_t s = 0; s < T; ++s) {
    double mean = 0.0;
    for (const auto& series : res.deviation_series) mean += series[s];
    mean /= static_cast<double>(res.deviation_series.size());
    csv << s << ',' << format_double(res.per_step_max_deviation[s]) << ','
        << format_double(mean) << '\n';
  }
  inv.out.write_text("results.csv", csv.str());

  json summary = base_summary(inv, data.train);
  summary["gap_estimate"] = res.gap_estimate;
  summary["gap_std_error"] = res.gap_std_error;
  summary["bound_value"] = res.bound_value;
  summary["bound_conditions_ok"] = res.bound_conditions_ok;
  summary["bound_report"] = json::parse(res.bound_report.to_json());
  summary["resample_indices"] = res.resample_indices;
  summary["final_max_deviation"] = res.per_step_max_deviation.back();
  inv.out.write_json("summary.json", summary);
  inv.out.write_json("config_echo.json", echo);
  return 0;
}

// ------------------------------------------------------------- spectrum ----

int cmd_spectrum(Invocation& inv) {
  check_keys(inv.config, "config", {"dataset", "model", "gd"},
             {"command", "seed", "out", "threads", "spectrum"});
  json spec_cfg = inv.config.contains("spectrum") ? inv.config.at("spectrum") : json::object();
  check_keys(spec_cfg, "spectrum", {}, {"tol", "max_iters"});
  const double tol = get_or(spec_cfg, "tol", 1e-8);
  const int max_iters = get_or(spec_cfg, "max_iters", 5000);

  DatasetBundle data = setup_phase([&] { return load_dataset(inv.config.at("dataset"), inv.seed); });
  ModelBundle model = setup_phase([&] { return load_model(inv.config.at("model"), data.train.dim()); });
  json echo;
  GDConfig gd = setup_phase([&] { return load_gd(inv.config.at("gd"), inv.seed, echo); });
  echo["command"] = "spectrum";
  echo["seed"] = inv.seed;
  echo["dataset"] = data.echo;
  echo["model"] = model.echo;
  echo["spectrum"] = {{"tol", tol}, {"max_iters", max_iters}};

  RiskContext ctx{&data.train, LossFn{}, model.act};
  std::optional<RiskContext> ctx_test;
  if (data.test) ctx_test = RiskContext{&*data.test, LossFn{}, model.act};
  TwoLayerParams w0 = init_zero_gaussian(model.M, static_cast<int>(data.train.dim()), model.c,
                                         model.train_second_layer, inv.seed);
  Trajectory traj = run_gd(ctx, ctx_test ? &*ctx_test : nullptr, gd, w0);
  auto points = epsilon_trajectory(ctx, traj, tol, max_iters, inv.seed);
  write_spectrum_csv(points, inv.out.path("results.csv").string());

  json summary = base_summary(inv, data.train);
  double max_eps = 0.0, min_lambda = 0.0, worst_slack = std::numeric_limits<double>::infinity();
  bool all_converged = true;
  for (const auto& pt : points) {
    max_eps = std::max(max_eps, pt.epsilon);
    min_lambda = std::min(min_lambda, pt.lambda_min);
    worst_slack = std::min(worst_slack, pt.lambda_min - pt.closed_form_bound);
    all_converged = all_converged && pt.converged;
  }
  summary["snapshots"] = points.size();
  summary["max_epsilon"] = max_eps;
  summary["min_lambda"] = min_lambda;
  summary["min_slack_over_bound"] = worst_slack;
  summary["all_converged"] = all_converged;
  summary["steps_run"] = traj.steps_run;
  inv.out.write_json("summary.json", summary);
  inv.out.write_json("config_echo.json", echo);
  return 0;
}

// ---------------------------------------------------------------- sweep ----

int cmd_sweep(Invocation& inv) {
  check_keys(inv.config, "config", {"dataset", "model", "gd", "sweep"},
             {"command", "seed", "out", "threads"});
  const json& sj = inv.config.at("sweep");
  check_keys(sj, "sweep", {"c_grid", "M_grid", "replications"},
             {"measure_eps", "eps_tol", "eps_max_iters"});
  DatasetBundle probe = setup_phase([&] { return load_dataset(inv.config.at("dataset"), inv.seed); });
  if (inv.config.at("dataset").at("kind").get<std::string>() != "teacher")
    throw ConfigError("sweep: only the teacher dataset kind is supported");
  ModelBundle model = setup_phase([&] { return load_model(inv.config.at("model"), probe.train.dim()); });
  json echo;
  GDConfig gd = setup_phase([&] { return load_gd(inv.config.at("gd"), inv.seed, echo); });

  SweepSpec spec;
  spec.c_grid = sj.at("c_grid").get<std::vector<double>>();
  spec.M_grid = sj.at("M_grid").get<std::vector<int>>();
  spec.replications = sj.at("replications").get<int>();
  spec.measure_eps = get_or(sj, "measure_eps", true);
  spec.eps_tol = get_or(sj, "eps_tol", 1e-4);
  spec.eps_max_iters = get_or(sj, "eps_max_iters", 150);
  spec.gd = gd;
  spec.act = model.act;
  spec.train_second_layer = model.train_second_layer;
  spec.seed = inv.seed;
  {
    const json& dj = inv.config.at("dataset");
    spec.teacher.M_star = dj.at("M_star").get<int>();
    spec.teacher.d = dj.at("d").get<int>();
    spec.teacher.mu = get_or(dj, "mu", 0.0);
    spec.teacher.c = get_or(dj, "c", 0.5);
    spec.teacher.N_train = get_or(dj, "N_train", 100);
    spec.teacher.N_test = get_or(dj, "N_test", 100);
    spec.teacher.label_noise = get_or(dj, "label_noise", false);
  }

  echo["command"] = "sweep";
  echo["seed"] = inv.seed;
  echo["dataset"] = probe.echo;
  echo["model"] = model.echo;
  echo["sweep"] = {{"c_grid", spec.c_grid},
                   {"M_grid", spec.M_grid},
                   {"replications", spec.replications},
                   {"measure_eps", spec.measure_eps},
                   {"eps_tol", spec.eps_tol},
                   {"eps_max_iters", spec.eps_max_iters}};

  SweepResult res = scaling_sweep(spec);
  write_sweep_csv(res, inv.out.path("results.csv").string());

  json summary = base_summary(inv, probe.train);
  json sp = json::object(), med = json::object();
  for (const auto& [M, rho] : res.spearman_c_vs_frob_by_M) sp[std::to_string(M)] = rho;
  for (const auto& [M, m] : res.median_best_test_by_M) med[std::to_string(M)] = m;
  summary["spearman_c_vs_frob_by_M"] = sp;
  summary["median_best_test_by_M"] = med;
  int failed = 0;
  for (const auto& cell : res.cells) failed += cell.failed ? 1 : 0;
  summary["cells"] = res.cells.size();
  summary["failed_cells"] = failed;
  inv.out.write_json("summary.json", summary);
  inv.out.write_json("config_echo.json", echo);
  return 0;
}

// --------------------------------------------------------------- bounds ----

int cmd_bounds(Invocation& inv) {
  check_keys(inv.config, "config", {"bounds"}, {"command", "seed", "out", "threads"});
  const json& bj = inv.config.at("bounds");
  check_keys(bj, "bounds", {}, {"pointwise", "global", "test_error", "mu_region"});

  json echo;
  echo["command"] = "bounds";
  echo["seed"] = inv.seed;
  echo["bounds"] = bj;

  std::vector<BoundReport> reports;
  json summary;
  summary["command"] = inv.command;
  summary["seed"] = inv.seed;

  if (bj.contains("pointwise")) {
    const json& p = bj.at("pointwise");
    check_keys(p, "bounds.pointwise", {"alpha", "beta", "L", "rho", "N", "t", "schedule"},
               {"eps_const", "eps_list"});
    const json& sj = p.at("schedule");
    check_keys(sj, "bounds.pointwise.schedule", {"kind"}, {"eta", "alpha", "horizon"});
    Schedule sched;
    if (sj.at("kind").get<std::string>() == "constant") {
      sched.kind = Schedule::Kind::constant;
      sched.eta = sj.at("eta").get<double>();
    } else {
      sched.kind = Schedule::Kind::polylog;
      sched.alpha = get_or(sj, "alpha", 0.75);
      sched.horizon = sj.at("horizon").get<int>();
    }
    const int t = p.at("t").get<int>();
    auto etas = step_sizes(sched, t);
    std::vector<double> eps;
    if (p.contains("eps_list"))
      eps = p.at("eps_list").get<std::vector<double>>();
    else
      eps.assign(std::max(0, t - 1), get_or(p, "eps_const", 0.0));
    reports.push_back(gen_bound_pointwise(etas, eps, p.at("alpha").get<double>(),
                                          p.at("beta").get<double>(), p.at("L").get<double>(),
                                          p.at("rho").get<double>(), p.at("N").get<double>(), t));
  }
  if (bj.contains("global")) {
    const json& g = bj.at("global");
    check_keys(g, "bounds.global", {"eta", "eps", "L", "N", "t"}, {"beta"});
    reports.push_back(gen_bound_global(
        g.at("eta").get<double>(), g.at("eps").get<double>(), g.at("L").get<double>(),
        g.at("N").get<double>(), g.at("t").get<int>(),
        get_or(g, "beta", std::numeric_limits<double>::quiet_NaN())));
  }
  if (bj.contains("test_error")) {
    const json& te = bj.at("test_error");
    check_keys(te, "bounds.test_error",
               {"eta", "t", "eps", "L", "N", "E_dist_init_to_pen_min_sq", "E_R0_minus_Rstar",
                "dist_init_to_popmin_sq"},
               {"beta"});
    reports.push_back(test_error_bound(
        te.at("eta").get<double>(), te.at("t").get<int>(), te.at("eps").get<double>(),
        te.at("L").get<double>(), te.at("N").get<double>(),
        te.at("E_dist_init_to_pen_min_sq").get<double>(),
        te.at("E_R0_minus_Rstar").get<double>(), te.at("dist_init_to_popmin_sq").get<double>(),
        get_or(te, "beta", std::numeric_limits<double>::quiet_NaN())));
  }
  if (bj.contains("mu_region")) {
    const json& mr = bj.at("mu_region");
    check_keys(mr, "bounds.mu_region", {"A_star_frob", "M", "c"}, {});
    MuRegion r = mu_region(mr.at("A_star_frob").get<double>(), mr.at("M").get<int>(),
                           mr.at("c").get<double>());
    summary["mu_region"] = {{"mu", r.mu},
                            {"vanishing_tw", r.vanishing_tw},
                            {"vanishing_approx", r.vanishing_approx},
                            {"region", r.region},
                            {"on_boundary", r.on_boundary}};
  }

  std::ostringstream csv;
  csv << "report,term,value\n";
  json jreports = json::array();
  for (const auto& rep : reports) {
    jreports.push_back(json::parse(rep.to_json()));
    csv << rep.name << ",value," << format_double(rep.value) << '\n';
    for (const auto& [k, v] : rep.terms) csv << rep.name << ',' << k << ',' << format_double(v) << '\n';
  }
  summary["reports"] = jreports;
  inv.out.write_text("results.csv", csv.str());
  inv.out.write_json("summary.json", summary);
  inv.out.write_json("config_echo.json", echo);
  return 0;
}

// ---------------------------------------------------------------- check ----

int cmd_check(Invocation& inv) {
  check_keys(inv.config, "config", {"dataset", "model", "check"},
             {"command", "seed", "out", "threads", "gd"});
  const json& cj = inv.config.at("check");
  check_keys(cj, "check", {},
             {"pairs", "radius", "eta", "steps", "beta_samples", "suites"});
  const int n_pairs = get_or(cj, "pairs", 200);
  const double radius = get_or(cj, "radius", 1.0);
  const double eta = get_or(cj, "eta", 0.05);
  const int steps = get_or(cj, "steps", 200);
  const int beta_samples = get_or(cj, "beta_samples", 8);
  std::vector<std::string> suites = get_or<std::vector<std::string>>(
      cj, "suites",
      {"cocoercivity_global", "expansiveness", "descent", "trajectory_norm"});

  DatasetBundle data = setup_phase([&] { return load_dataset(inv.config.at("dataset"), inv.seed); });
  ModelBundle model = setup_phase([&] { return load_model(inv.config.at("model"), data.train.dim()); });
  json echo;
  echo["command"] = "check";
  echo["seed"] = inv.seed;
  echo["dataset"] = data.echo;
  echo["model"] = model.echo;
  echo["check"] = {{"pairs", n_pairs},   {"radius", radius},
                   {"eta", eta},         {"steps", steps},
                   {"beta_samples", beta_samples}, {"suites", suites}};

  RiskContext ctx{&data.train, LossFn{}, model.act};
  TwoLayerParams w0 = init_zero_gaussian(model.M, static_cast<int>(data.train.dim()), model.c,
                                         model.train_second_layer, inv.seed);
  if (model.train_second_layer)
    throw ConfigError("check: model.train_second_layer must be false (certified eps needs a fixed second layer)");

  CovarianceSummary cov = empirical_covariance(data.train);
  const double eps = -two_layer_bound(w0, cov, ctx.act, ctx.loss);
  BoundConstants consts =
      constants_estimate(ctx, w0, radius, beta_samples, mix_seed(inv.seed, 0xC0117ULL));

  // seeded parameter pairs inside the radius ball around the init
  auto rng = make_rng(mix_seed(inv.seed, 0x9A185ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Vector flat0 = flatten(w0);
  auto draw_point = [&]() {
    Vector dir(flat0.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = gauss(rng);
    double n = dir.norm();
    return n > 0 ? Vector(flat0 + (radius * unif(rng) / n) * dir) : flat0;
  };
  std::vector<ParamPair> pairs(n_pairs);
  for (auto& pr : pairs) pr = {draw_point(), draw_point()};

  std::map<std::string, MarginsReport> runs;
  json per_suite = json::object();
  double min_margin = std::numeric_limits<double>::infinity();
  for (const auto& suite : suites) {
    MarginsReport rep;
    if (suite == "cocoercivity_global") {
      rep = check_cocoercivity_global(ctx, w0, pairs, eta, eps, consts.beta);
    } else if (suite == "expansiveness") {
      rep = check_expansiveness(ctx, w0, pairs, eta, eps);
    } else if (suite == "descent" || suite == "trajectory_norm") {
      GDConfig gd;
      gd.schedule.kind = Schedule::Kind::constant;
      gd.schedule.eta = std::min(eta, 0.95 / std::max(consts.beta, 1e-12));
      gd.t_max = steps;
      gd.eval_every = steps + 1;
      gd.record_stride = std::max(1, steps / 10);
      Trajectory traj = run_gd(ctx, nullptr, gd, w0);
      rep = suite == "descent" ? check_descent(traj, gd.schedule)
                               : check_trajectory_norm(traj, gd.schedule.eta);
      per_suite[suite + "_eta_used"] = gd.schedule.eta;
    } else if (suite == "cocoercivity_pointwise") {
      GDConfig gd;
      gd.schedule.kind = Schedule::Kind::constant;
      gd.schedule.eta = eta;
      gd.t_max = steps;
      gd.eval_every = steps + 1;
      gd.record_stride = std::max(1, steps / 10);
      Dataset reservoir = subsample(data.train, 1, mix_seed(inv.seed, 0xF00ULL));
      // perturb the reservoir point so it differs from every training row
      reservoir.X.array() += 0.5;
      PairedResult pr = run_paired(ctx, gd, w0, 0, reservoir.X.row(0).transpose(),
                                   reservoir.y[0]);
      Dataset swapped = *ctx.data;
      swapped.X.row(0) = reservoir.X.row(0);
      swapped.y[0] = reservoir.y[0];
      RiskContext ctx_i{&swapped, ctx.loss, ctx.act};
      std::vector<PointwisePair> ppairs;
      for (std::size_t k = 0; k < pr.traj.snapshots.size(); ++k) {
        PointwisePair pp;
        pp.x = flatten(pr.traj.snapshots[k].second);
        pp.y = flatten(pr.traj_i.snapshots[k].second);
        double lx = lambda_min_dense(dense_hessian(ctx, pr.traj.snapshots[k].second));
        double ly = lambda_min_dense(dense_hessian(ctx_i, pr.traj_i.snapshots[k].second));
        pp.eps_s = std::max({0.0, -lx, -ly});
        ppairs.push_back(std::move(pp));
      }
      rep = check_cocoercivity_pointwise(ctx, w0, ppairs, gd.schedule.eta, consts.beta,
                                         consts.rho);
    } else {
      throw ConfigError("check: unknown suite \"" + suite + "\"");
    }
    min_margin = std::min(min_margin, rep.min_margin);
    per_suite[suite] = {{"min_margin", rep.min_margin}, {"count", rep.margins.size()}};
    if (suite == "expansiveness") {
      per_suite[suite]["factor"] = rep.factor;
      per_suite[suite]["max_ratio"] = rep.max_ratio;
    }
    runs[suite] = std::move(rep);
  }

  std::ostringstream csv;
  csv << "suite,index,margin\n";
  for (const auto& [suite, rep] : runs)
    for (std::size_t k = 0; k < rep.margins.size(); ++k)
      csv << suite << ',' << k << ',' << format_double(rep.margins[k]) << '\n';
  inv.out.write_text("results.csv", csv.str());

  json summary = base_summary(inv, data.train);
  summary["suites"] = per_suite;
  summary["min_margin"] = min_margin;
  summary["certified_eps"] = eps;
  summary["sampled_beta"] = consts.beta;
  summary["sampled_rho"] = consts.rho;
  inv.out.write_json("summary.json", summary);
  inv.out.write_json("config_echo.json", echo);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"weak-convexity learning lab"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int threads = 0;
  std::int64_t seed_override = -1;

  std::vector<std::string> commands = {"train", "stability", "spectrum",
                                       "sweep", "bounds",    "check"};
  for (const auto& name : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path)->required();
    sub->add_option("--out", out_dir);
    sub->add_option("--threads", threads);
    sub->add_option("--seed", seed_override);
  }

  try {
    std::vector<const char*> argv;
    argv.push_back("wclab");
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 1;
  }

  Invocation inv;
  for (const auto& name : commands)
    if (app.got_subcommand(name)) inv.command = name;

  try {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + config_path);
    inv.config = json::parse(in);
    if (!inv.config.is_object()) throw ConfigError("config: expected a JSON object");
    if (inv.config.contains("command") &&
        inv.config.at("command").get<std::string>() != inv.command)
      throw ConfigError("config: \"command\" does not match the subcommand");
    inv.seed = seed_override >= 0 ? static_cast<std::uint64_t>(seed_override)
                                  : get_or<std::uint64_t>(inv.config, "seed", 0);
    if (threads > 0)
      set_max_threads(threads);
    else if (inv.config.contains("threads"))
      set_max_threads(inv.config.at("threads").get<int>());
    inv.out.dir = out_dir.empty() ? get_or<std::string>(inv.config, "out", "out_" + inv.command)
                                  : out_dir;
    std::filesystem::create_directories(inv.out.dir);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (inv.command == "train") return cmd_train(inv);
    if (inv.command == "stability") return cmd_stability(inv);
    if (inv.command == "spectrum") return cmd_spectrum(inv);
    if (inv.command == "sweep") return cmd_sweep(inv);
    if (inv.command == "bounds") return cmd_bounds(inv);
    if (inv.command == "check") return cmd_check(inv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace wclab
