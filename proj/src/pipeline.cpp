#include "koop/pipeline.hpp"

#include <cmath>
#include <sstream>

#include "koop/csv.hpp"
#include "koop/errors.hpp"
#include "koop/serialize.hpp"

namespace koop {

using nlohmann::json;

PlantModel plant_from_config(const RunConfig& cfg, bool controlled) {
  const std::string name = cfg.get_string("plant.name");
  std::map<std::string, double> params;
  if (name == "column") {
    params["trays"] = cfg.get_int("plant.trays");
    params["feed_tray"] = cfg.get_int("plant.feed_tray");
    params["alpha"] = cfg.get_double("plant.alpha");
    params["z_feed"] = cfg.get_double("plant.z_feed");
    params["tray_holdup"] = cfg.get_double("plant.tray_holdup");
    params["drum_holdup"] = cfg.get_double("plant.drum_holdup");
    params["vapor_flow"] = cfg.get_double("plant.vapor_flow");
    if (controlled) {
      // Plant-model mismatch knob; zero by default.
      const double p = cfg.get_double("scenario.plant_perturbation");
      params["alpha"] *= 1.0 + p;
      params["tray_holdup"] *= 1.0 + p;
    }
  } else if (name == "vdp") {
    params["mu"] = cfg.get_double("plant.mu");
  } else if (name == "cstr") {
    params["Da"] = cfg.get_double("plant.cstr_Da");
    params["B"] = cfg.get_double("plant.cstr_B");
    params["gamma"] = cfg.get_double("plant.cstr_gamma");
    params["beta"] = cfg.get_double("plant.cstr_beta");
  }
  return make_plant(name, params);
}

double sampling_dt(const RunConfig& cfg) {
  return cfg.get_double("sampling.dt_minutes") / 60.0;
}

Vec map_config_inputs(const RunConfig& cfg, const PlantModel& plant,
                      const Vec& u_cfg) {
  Vec u = u_cfg;
  if (plant.name == "column") {
    // Config exposes the reflux ratio; the plant takes the reflux flow.
    u(0) = u_cfg(0) * cfg.get_double("plant.vapor_flow");
  }
  return u;
}

namespace {

Mat excitation_bounds(const RunConfig& cfg, const PlantModel& plant) {
  Mat bounds(plant.n_u, 2);
  for (int i = 0; i < plant.n_u; ++i) {
    const std::string base = "sampling.u" + std::to_string(i + 1);
    bounds(i, 0) = cfg.get_double(base + "_min");
    bounds(i, 1) = cfg.get_double(base + "_max");
  }
  if (plant.name == "column") {
    const double v = cfg.get_double("plant.vapor_flow");
    bounds(0, 0) *= v;
    bounds(0, 1) *= v;
  }
  return bounds;
}

Vec steady_guess(const PlantModel& plant) {
  Vec g = Vec::Constant(plant.n_x, 0.5);
  if (plant.name != "column") g.setZero();
  return g;
}

void write_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
  ensure_directory(out_dir);
  write_text_file(out_dir + "/resolved.cfg", cfg.resolved_text());
}

void apply_bound_string(const RunConfig& cfg, const std::string& key, Box& box) {
  const std::string text = cfg.get_string(key);
  if (text.empty()) return;
  std::stringstream ss(text);
  std::string entry;
  while (std::getline(ss, entry, ';')) {
    if (entry.empty()) continue;
    std::stringstream es(entry);
    std::string ch, lo, hi;
    if (!std::getline(es, ch, ':') || !std::getline(es, lo, ':') ||
        !std::getline(es, hi, ':')) {
      throw ConfigError("bad bound entry '" + entry + "' in " + key);
    }
    int idx = 0;
    try {
      idx = std::stoi(ch) - 1;
    } catch (const std::exception&) {
      throw ConfigError("bad channel in bound entry '" + entry + "'");
    }
    if (idx < 0 || idx >= box.lo.size()) {
      throw ConfigError("bound channel out of range in '" + entry + "'");
    }
    try {
      box.lo(idx) = std::stod(lo);
      box.hi(idx) = std::stod(hi);
    } catch (const std::exception&) {
      throw ConfigError("bad bound values in '" + entry + "'");
    }
  }
}

}  // namespace

Dataset pipeline_sample(const RunConfig& cfg, const std::string& out_dir) {
  const PlantModel plant = plant_from_config(cfg);
  const double dt = sampling_dt(cfg);
  const int n_steps = cfg.get_int("sampling.n_steps");
  const double step_hours = cfg.get_double("sampling.step_hours");
  const std::uint64_t seed = cfg.get_seed("sampling.seed");
  const int N = cfg.get_int("sampling.delays");
  const int s = cfg.get_int("sampling.window");
  const int stride = cfg.get_int("sampling.stride");

  const Mat bounds = excitation_bounds(cfg, plant);
  const InputProfile profile =
      random_step_sequence(bounds, n_steps, step_hours, seed);

  // The record starts from the steady state at the center of the
  // excitation box (the base operating point).
  Vec u_base(plant.n_u);
  for (int i = 0; i < plant.n_u; ++i) u_base(i) = 0.5 * (bounds(i, 0) + bounds(i, 1));
  const Vec x0 = steady_state(plant, u_base, steady_guess(plant));

  const double t_end = n_steps * step_hours;
  const Trajectory record =
      simulate(plant, x0, profile, dt, t_end, cfg.get_int("plant.substeps"),
               cfg.get_double("plant.bound_slack"));

  std::vector<TrainingWindow> windows = window_dataset(record, s, stride, N);
  if (cfg.get_bool("sampling.steady_windows")) {
    std::vector<TrainingWindow> steady =
        augment_steady_windows(plant, profile.levels, s, N, dt);
    for (auto& w : steady) windows.push_back(std::move(w));
  }

  Dataset ds = split_and_batch(std::move(windows),
                               cfg.get_double("sampling.train_fraction"),
                               cfg.get_int("training.batch_size"), seed);
  ds.meta.plant = plant.name;
  ds.meta.stride = stride;
  ds.meta.embed_inputs = cfg.get_bool("sampling.embed_inputs");

  // Log-transform all composition-like channels of the column: every
  // stage composition and the composition output.
  std::vector<bool> log_in(plant.n_u, false);
  std::vector<bool> log_st(plant.n_x, false);
  std::vector<bool> log_out(plant.n_y, false);
  if (plant.name == "column") {
    log_st.assign(plant.n_x, true);
    log_out[2] = true;
  }
  ds.scaling = fit_scaling(ds.train, log_in, log_st, log_out,
                           cfg.get_bool("sampling.pin_degenerate"));

  if (!out_dir.empty()) {
    write_resolved_config(cfg, out_dir);
    save_dataset(out_dir, ds);
  }
  return ds;
}

namespace {

ModelSpec model_spec_from_config(const RunConfig& cfg) {
  ModelSpec spec;
  spec.n_z = cfg.get_int("model.n_z");
  spec.encoder_hidden = cfg.get_int_list("model.encoder_hidden");
  spec.decoder_hidden = cfg.get_int_list("model.decoder_hidden");
  spec.decoder = decoder_kind_from_string(cfg.get_string("model.decoder"));
  spec.structure =
      latent_structure_from_string(cfg.get_string("model.structure"));
  return spec;
}

TrainConfig train_config_from_config(const RunConfig& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_int("training.epochs");
  t.batch_size = cfg.get_int("training.batch_size");
  t.learning_rate = cfg.get_double("training.learning_rate");
  t.beta1 = cfg.get_double("training.beta1");
  t.beta2 = cfg.get_double("training.beta2");
  t.epsilon = cfg.get_double("training.epsilon");
  t.seed = cfg.get_seed("sampling.seed");
  t.validation_every = cfg.get_int("training.validation_every");
  t.clip_norm = cfg.get_double("training.clip_norm");
  t.multi_step_weight = cfg.get_double("training.multi_step_weight");
  t.cosine_decay = cfg.get_bool("training.cosine_decay");
  return t;
}

}  // namespace

void write_train_artifacts(const RunConfig& cfg, const TrainArtifacts& art,
                           const std::string& out_dir) {
  write_resolved_config(cfg, out_dir);
  save_checkpoint(art.model, out_dir + "/best.ckpt");
  json rep;
  rep["best_epoch"] = art.report.best_epoch;
  rep["best_val_loss"] = art.report.best_val_loss;
  rep["epochs_run"] = static_cast<int>(art.report.train_loss.size());
  rep["diverged"] = art.report.diverged;
  rep["final_train_loss"] =
      art.report.train_loss.empty() ? 0.0 : art.report.train_loss.back();
  rep["wall_seconds"] = art.report.wall_seconds;
  write_text_file(out_dir + "/report.json", rep.dump(2) + "\n");

  CsvTable losses;
  losses.header = {"epoch", "train_loss", "val_loss"};
  losses.rows.resize(art.report.train_loss.size(), 3);
  for (std::size_t e = 0; e < art.report.train_loss.size(); ++e) {
    losses.rows(e, 0) = static_cast<double>(e + 1);
    losses.rows(e, 1) = art.report.train_loss[e];
    losses.rows(e, 2) = art.report.val_loss[e];
  }
  write_csv(out_dir + "/losses.csv", losses);
}

TrainArtifacts pipeline_train(const RunConfig& cfg, const Dataset& dataset,
                              const std::string& out_dir,
                              std::optional<DecoderKind> decoder_override) {
  ModelSpec spec = model_spec_from_config(cfg);
  if (decoder_override) spec.decoder = *decoder_override;
  const TrainConfig tcfg = train_config_from_config(cfg);
  TrainArtifacts art;
  auto [model, report] = train(dataset, spec, tcfg);
  art.model = std::move(model);
  art.report = std::move(report);
  if (!out_dir.empty()) write_train_artifacts(cfg, art, out_dir);
  return art;
}

OpenLoopReport pipeline_eval(const RunConfig& cfg, const KoopmanModel& model,
                             const std::string& out_dir,
                             const std::string& tag) {
  const PlantModel plant = plant_from_config(cfg);
  const double dt = sampling_dt(cfg);
  const Schedule sched =
      parse_schedule(cfg.get_string("scenario.eval_inputs"), plant.n_u);
  InputProfile profile;
  profile.breakpoints = sched.times;
  for (const auto& vals : sched.values) {
    Vec u(plant.n_u);
    for (int i = 0; i < plant.n_u; ++i) u(i) = vals[i];
    profile.levels.push_back(map_config_inputs(cfg, plant, u));
  }
  const double t_end = cfg.get_double("scenario.eval_duration_hours");
  const Vec x0 =
      steady_state(plant, profile.levels.front(), steady_guess(plant));
  OpenLoopReport report =
      evaluate_openloop(model, plant, x0, profile, dt, t_end,
                        cfg.get_int("plant.substeps"));
  if (!out_dir.empty()) {
    write_resolved_config(cfg, out_dir);
    report.write_csv(out_dir + "/openloop_" + tag + ".csv");
    json j;
    j["rmse_y"] = std::vector<double>(report.rmse_y.begin(), report.rmse_y.end());
    j["rel_rmse_y"] =
        std::vector<double>(report.rel_rmse_y.begin(), report.rel_rmse_y.end());
    j["max_err_y"] =
        std::vector<double>(report.max_err_y.begin(), report.max_err_y.end());
    j["rmse_x"] = std::vector<double>(report.rmse_x.begin(), report.rmse_x.end());
    j["diverged"] = report.diverged;
    json plats = json::array();
    for (const auto& p : report.plateaus) {
      plats.push_back({{"t_end", p.t_end},
                       {"output_offset", std::vector<double>(
                                             p.output_offset.begin(),
                                             p.output_offset.end())},
                       {"impurity_offset", p.impurity_offset}});
    }
    j["plateaus"] = plats;
    write_text_file(out_dir + "/openloop_" + tag + ".json", j.dump(2) + "\n");
  }
  return report;
}

ControlProblem problem_from_config(const RunConfig& cfg,
                                   const PlantModel& plant) {
  ControlProblem p;
  p.horizon = cfg.get_int("mpc.horizon");
  p.tracked_output = cfg.get_int("mpc.tracked_output") - 1;
  p.tracking_weight = cfg.get_double("mpc.tracking_weight");
  p.move_weight = cfg.get_double("mpc.move_weight");
  p.setpoints = Vec::Zero(p.horizon);

  p.input_bounds.lo.resize(plant.n_u);
  p.input_bounds.hi.resize(plant.n_u);
  for (int i = 0; i < plant.n_u; ++i) {
    const std::string base = "mpc.u" + std::to_string(i + 1);
    p.input_bounds.lo(i) = cfg.get_double(base + "_min");
    p.input_bounds.hi(i) = cfg.get_double(base + "_max");
  }
  if (plant.name == "column") {
    const double v = cfg.get_double("plant.vapor_flow");
    p.input_bounds.lo(0) *= v;
    p.input_bounds.hi(0) *= v;
  }

  p.output_bounds = Box::unbounded(plant.n_y);
  p.state_bounds = Box::unbounded(plant.n_x);
  apply_bound_string(cfg, "mpc.output_bounds", p.output_bounds);
  apply_bound_string(cfg, "mpc.state_bounds", p.state_bounds);

  // The impurity 1 - x_condenser maps onto a box for the last state.
  const double imp_lo = cfg.get_double("mpc.impurity_min");
  const double imp_hi = cfg.get_double("mpc.impurity_max");
  if (plant.name == "column" && (!std::isnan(imp_lo) || !std::isnan(imp_hi))) {
    if (!std::isnan(imp_hi)) p.state_bounds.lo(plant.n_x - 1) = 1.0 - imp_hi;
    if (!std::isnan(imp_lo)) p.state_bounds.hi(plant.n_x - 1) = 1.0 - imp_lo;
  }
  return p;
}

SolverConfig solver_from_config(const RunConfig& cfg) {
  SolverConfig s;
  s.max_iterations = cfg.get_int("mpc.max_iterations");
  s.tolerance = cfg.get_double("mpc.tolerance");
  s.penalty_initial = cfg.get_double("mpc.penalty_initial");
  s.penalty_growth = cfg.get_double("mpc.penalty_growth");
  s.penalty_max = cfg.get_double("mpc.penalty_max");
  s.violation_tolerance = cfg.get_double("mpc.violation_tolerance");
  s.warm_start = cfg.get_bool("mpc.warm_start");
  return s;
}

Scenario scenario_from_config(const RunConfig& cfg, const PlantModel& plant) {
  Scenario sc;
  sc.duration = cfg.get_double("scenario.duration_hours");
  sc.dt = sampling_dt(cfg);
  sc.substeps = cfg.get_int("plant.substeps");
  sc.controller =
      controller_kind_from_string(cfg.get_string("scenario.controller"));
  const Schedule sp = parse_schedule(cfg.get_string("scenario.setpoints"), 1);
  sc.setpoint_times = sp.times;
  for (const auto& v : sp.values) sc.setpoint_values.push_back(v[0]);
  const std::vector<double> init =
      cfg.get_double_list("scenario.initial_inputs");
  if (static_cast<int>(init.size()) != plant.n_u) {
    throw ConfigError("scenario.initial_inputs needs " +
                      std::to_string(plant.n_u) + " value(s)");
  }
  Vec u0(plant.n_u);
  for (int i = 0; i < plant.n_u; ++i) u0(i) = init[i];
  sc.initial_input = map_config_inputs(cfg, plant, u0);
  return sc;
}

ClosedLoopLog pipeline_control(const RunConfig& cfg, const KoopmanModel* model,
                               const std::string& out_dir) {
  const PlantModel plant = plant_from_config(cfg, /*controlled=*/true);
  const Scenario sc = scenario_from_config(cfg, plant);
  const ControlProblem problem = problem_from_config(cfg, plant);
  const SolverConfig solver = solver_from_config(cfg);
  const ClosedLoopLog log = run_closed_loop(plant, model, sc, problem, solver,
                                            cfg.get_seed("sampling.seed"));
  if (!out_dir.empty()) {
    write_resolved_config(cfg, out_dir);
    log.write_csv(out_dir + "/closedloop_" + to_string(sc.controller) + ".csv");
  }
  return log;
}

BenchmarkTable pipeline_benchmark(const RunConfig& cfg,
                                  const KoopmanModel* wiener,
                                  const KoopmanModel* linear,
                                  const std::string& out_dir) {
  const PlantModel plant = plant_from_config(cfg, /*controlled=*/true);
  const Scenario sc = scenario_from_config(cfg, plant);
  const ControlProblem problem = problem_from_config(cfg, plant);
  const SolverConfig solver = solver_from_config(cfg);
  std::vector<ControllerKind> controllers;
  if (wiener) controllers.push_back(ControllerKind::koopman_nmpc);
  if (linear) controllers.push_back(ControllerKind::koopman_lmpc);
  controllers.push_back(ControllerKind::ideal_nmpc);
  const BenchmarkTable table =
      benchmark_cpu(plant, wiener, linear, sc, problem, solver, controllers);
  if (!out_dir.empty()) {
    write_resolved_config(cfg, out_dir);
    table.write_csv(out_dir + "/benchmark.csv");
    write_text_file(out_dir + "/benchmark.txt", table.text());
  }
  return table;
}

}  // namespace koop
