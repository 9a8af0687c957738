#include "koop/closedloop.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "koop/csv.hpp"
#include "koop/errors.hpp"

namespace koop {

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::koopman_nmpc: return "koopman_nmpc";
    case ControllerKind::koopman_lmpc: return "koopman_lmpc";
    case ControllerKind::ideal_nmpc: return "ideal_nmpc";
  }
  return "?";
}

ControllerKind controller_kind_from_string(const std::string& s) {
  if (s == "koopman_nmpc") return ControllerKind::koopman_nmpc;
  if (s == "koopman_lmpc") return ControllerKind::koopman_lmpc;
  if (s == "ideal_nmpc") return ControllerKind::ideal_nmpc;
  throw ConfigError("unknown controller: " + s);
}

double Scenario::setpoint_at(double t) const {
  if (setpoint_times.empty()) throw InterfaceError("empty setpoint schedule");
  auto it = std::upper_bound(setpoint_times.begin(), setpoint_times.end(), t);
  const std::size_t idx =
      (it == setpoint_times.begin())
          ? 0
          : static_cast<std::size_t>(it - setpoint_times.begin()) - 1;
  return setpoint_values[idx];
}

Vec Scenario::setpoint_preview(double t, int horizon, double dt_preview) const {
  Vec sp(horizon);
  for (int k = 0; k < horizon; ++k) sp(k) = setpoint_at(t + (k + 1) * dt_preview);
  return sp;
}

void ClosedLoopLog::write_csv(const std::string& path) const {
  CsvTable table;
  table.header = {"k", "t"};
  for (int i = 0; i < n_y; ++i) table.header.push_back("y" + std::to_string(i + 1));
  for (int i = 0; i < n_u; ++i) table.header.push_back("u" + std::to_string(i + 1));
  for (int i = 0; i < n_x; ++i) table.header.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < n_y; ++i) {
    table.header.push_back("yhat" + std::to_string(i + 1));
  }
  table.header.insert(table.header.end(),
                      {"solve_ms", "iters", "objective", "violation",
                       "held_flag"});
  const int K = instants();
  table.rows.resize(K, table.header.size());
  for (int k = 0; k < K; ++k) {
    int c = 0;
    table.rows(k, c++) = k;
    table.rows(k, c++) = t[k];
    for (int i = 0; i < n_y; ++i) table.rows(k, c++) = y(k, i);
    for (int i = 0; i < n_u; ++i) table.rows(k, c++) = u(k, i);
    for (int i = 0; i < n_x; ++i) table.rows(k, c++) = x(k, i);
    for (int i = 0; i < n_y; ++i) table.rows(k, c++) = yhat(k, i);
    table.rows(k, c++) = solve_ms[k];
    table.rows(k, c++) = iters[k];
    table.rows(k, c++) = objective[k];
    table.rows(k, c++) = violation[k];
    table.rows(k, c++) = held[k];
  }
  write_csv(path, table);
}

ClosedLoopLog run_closed_loop(const PlantModel& plant,
                              const KoopmanModel* model,
                              const Scenario& scenario,
                              const ControlProblem& problem_template,
                              const SolverConfig& solver_cfg,
                              std::uint64_t /*seed*/) {
  const bool needs_model = scenario.controller != ControllerKind::ideal_nmpc;
  if (needs_model && !model) {
    throw InterfaceError("closed loop: Koopman controller needs a model");
  }
  if (needs_model && model->dynamics.dt != scenario.dt) {
    throw InterfaceError("closed loop: scenario dt differs from model dt");
  }
  if (scenario.controller == ControllerKind::koopman_lmpc &&
      model->decoder_kind != DecoderKind::linear) {
    throw InterfaceError("koopman_lmpc scenario needs a linear-decoder model");
  }

  const int K =
      static_cast<int>(std::floor(scenario.duration / scenario.dt + 1e-9)) + 1;
  const int N = needs_model ? model->delays : 0;

  Vec x_guess = Vec::Constant(plant.n_x, 0.5);
  if (plant.name != "column") x_guess.setZero();
  Vec x = steady_state(plant, scenario.initial_input, x_guess);
  Vec u_prev = scenario.initial_input;

  // Warm-up: the plant sits at steady state, so the measurement buffer is
  // the steady output tiled N+1 times (newest first).
  const Vec y_ss = plant.outputs(x, u_prev);
  std::deque<Vec> buffer(N + 1, y_ss);
  std::deque<Vec> input_buffer(std::max(N, 1), u_prev);

  ClosedLoopLog log;
  log.n_y = plant.n_y;
  log.n_u = plant.n_u;
  log.n_x = plant.n_x;
  log.t.resize(K);
  log.y.resize(K, plant.n_y);
  log.u.resize(K, plant.n_u);
  log.x.resize(K, plant.n_x);
  log.yhat.resize(K, plant.n_y);
  log.solve_ms.assign(K, 0.0);
  log.iters.assign(K, 0);
  log.objective.assign(K, 0.0);
  log.violation.assign(K, 0.0);
  log.held.assign(K, 0);

  MpcSolution previous;
  bool have_previous = false;
  const double h = scenario.dt / scenario.substeps;

  for (int k = 0; k < K; ++k) {
    const double t = k * scenario.dt;
    const Vec y_meas = plant.outputs(x, u_prev);
    if (needs_model) {
      buffer.push_front(y_meas);
      buffer.pop_back();
    }

    ControlProblem problem = problem_template;
    problem.setpoints =
        scenario.setpoint_preview(t, problem.horizon, scenario.dt);

    Vec u_apply = u_prev;
    bool held = true;
    MpcSolution sol;
    const bool injected =
        scenario.inject_solver_failure && scenario.inject_solver_failure(k);
    if (!injected) {
      try {
        switch (scenario.controller) {
          case ControllerKind::koopman_nmpc:
          case ControllerKind::koopman_lmpc: {
            DelayWindow chi;
            chi.delays = N;
            chi.values.resize((N + 1) * plant.n_y);
            for (int j = 0; j <= N; ++j) {
              chi.values.segment(j * plant.n_y, plant.n_y) = buffer[j];
            }
            Vec hist;
            if (model->embed_inputs) {
              hist.resize(N * plant.n_u);
              for (int j = 0; j < N; ++j) {
                hist.segment(j * plant.n_u, plant.n_u) = input_buffer[j];
              }
            }
            if (scenario.controller == ControllerKind::koopman_lmpc &&
                !model->embed_inputs) {
              sol = koopman_lmpc_solve(*model, chi, problem,
                                       have_previous ? &previous : nullptr,
                                       solver_cfg);
            } else {
              sol = solve_mpc(*model, chi, hist, problem,
                              have_previous ? &previous : nullptr, solver_cfg);
            }
            break;
          }
          case ControllerKind::ideal_nmpc:
            sol = ideal_nmpc_solve(plant, x, problem, solver_cfg, scenario.dt,
                                   scenario.substeps,
                                   have_previous ? &previous : nullptr);
            break;
        }
        if (sol.inputs.allFinite() && std::isfinite(sol.objective)) {
          u_apply = sol.inputs.row(0).transpose();
          held = false;
          previous = sol;
          have_previous = true;
        }
      } catch (const NumericError&) {
        // fail-operational: keep the previous input
      }
    }

    log.t[k] = t;
    log.y.row(k) = y_meas.transpose();
    log.u.row(k) = u_apply.transpose();
    log.x.row(k) = x.transpose();
    if (!held) {
      log.yhat.row(k) = sol.pred_outputs.row(0);
      log.solve_ms[k] = sol.wall_ms;
      log.iters[k] = sol.iterations;
      log.objective[k] = sol.objective;
      log.violation[k] = sol.max_violation;
    } else {
      log.yhat.row(k) = y_meas.transpose();
      log.held[k] = 1;
    }

    if (k + 1 < K) {
      for (int j = 0; j < scenario.substeps; ++j) {
        x = rk4_step(plant, x, u_apply, h);
      }
    }
    u_prev = u_apply;
    input_buffer.push_front(u_apply);
    input_buffer.pop_back();
  }
  return log;
}

std::string BenchmarkTable::text() const {
  std::ostringstream out;
  out << "controller        mean_ms     max_ms   reduction\n";
  for (const auto& row : rows) {
    char buf[96];
    if (std::isnan(row.reduction)) {
      std::snprintf(buf, sizeof(buf), "%-14s %10.2f %10.2f %11s\n",
                    row.controller.c_str(), row.mean_ms, row.max_ms, "-");
    } else {
      std::snprintf(buf, sizeof(buf), "%-14s %10.2f %10.2f %10.1f%%\n",
                    row.controller.c_str(), row.mean_ms, row.max_ms,
                    100.0 * row.reduction);
    }
    out << buf;
  }
  return out.str();
}

void BenchmarkTable::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open for writing: " + path);
  out << "controller,mean_ms,max_ms,reduction\n";
  for (const auto& row : rows) {
    out << row.controller << ',' << format_double(row.mean_ms) << ','
        << format_double(row.max_ms) << ',';
    if (!std::isnan(row.reduction)) out << format_double(row.reduction);
    out << '\n';
  }
}

BenchmarkTable benchmark_cpu(const PlantModel& plant,
                             const KoopmanModel* wiener,
                             const KoopmanModel* linear,
                             const Scenario& scenario,
                             const ControlProblem& problem_template,
                             const SolverConfig& solver_cfg,
                             const std::vector<ControllerKind>& controllers) {
  BenchmarkTable table;
  double ideal_mean = std::numeric_limits<double>::quiet_NaN();
  for (ControllerKind kind : controllers) {
    Scenario sc = scenario;
    sc.controller = kind;
    const KoopmanModel* model =
        kind == ControllerKind::koopman_lmpc ? linear : wiener;
    const ClosedLoopLog log =
        run_closed_loop(plant, model, sc, problem_template, solver_cfg);
    BenchmarkRow row;
    row.controller = to_string(kind);
    double total = 0.0;
    int count = 0;
    for (int k = 0; k < log.instants(); ++k) {
      if (log.held[k]) continue;
      total += log.solve_ms[k];
      row.max_ms = std::max(row.max_ms, log.solve_ms[k]);
      ++count;
    }
    row.mean_ms = count ? total / count : 0.0;
    if (kind == ControllerKind::ideal_nmpc) ideal_mean = row.mean_ms;
    table.rows.push_back(row);
  }
  for (auto& row : table.rows) {
    if (row.controller != to_string(ControllerKind::ideal_nmpc) &&
        std::isfinite(ideal_mean) && ideal_mean > 0) {
      row.reduction = 1.0 - row.mean_ms / ideal_mean;
    }
  }
  return table;
}

void OpenLoopReport::write_csv(const std::string& path) const {
  CsvTable table;
  table.header = header;
  table.rows = aligned;
  koop::write_csv(path, table);
}

OpenLoopReport evaluate_openloop(const KoopmanModel& model,
                                 const PlantModel& plant, const Vec& x0,
                                 const InputProfile& profile, double dt,
                                 double t_end, int substeps,
                                 double plateau_hold) {
  const Trajectory truth =
      simulate(plant, x0, profile, dt, t_end, substeps);
  const int N = model.delays;
  const int s = truth.samples();
  if (s < N + 2) throw NumericError("insufficient history for the delay window");

  // Encoder input at sample N, in scaled units.
  Vec enc_input(model.encoder_input_dim());
  for (int j = 0; j <= N; ++j) {
    for (int c = 0; c < plant.n_y; ++c) {
      enc_input(j * plant.n_y + c) =
          ScalingSpec::fwd(truth.outputs(N - j, c), model.scaling.outputs[c]);
    }
  }
  if (model.embed_inputs) {
    for (int j = 1; j <= N; ++j) {
      for (int c = 0; c < plant.n_u; ++c) {
        enc_input((N + 1) * plant.n_y + (j - 1) * plant.n_u + c) =
            ScalingSpec::fwd(truth.inputs(N - j, c), model.scaling.inputs[c]);
      }
    }
  }

  const int K = s - 1 - N;  // predicted samples N+1 .. s-1
  OpenLoopReport report;
  report.has_impurity = plant.name == "column";
  report.predicted_samples = K;

  Mat pred_x(K, plant.n_x), pred_y(K, plant.n_y);
  pred_x.setConstant(std::numeric_limits<double>::quiet_NaN());
  pred_y.setConstant(std::numeric_limits<double>::quiet_NaN());
  int valid = 0;
  {
    Vec z = encode_vector(model, enc_input);
    for (int k = 0; k < K; ++k) {
      Vec u_scaled(plant.n_u);
      for (int c = 0; c < plant.n_u; ++c) {
        u_scaled(c) =
            ScalingSpec::fwd(truth.inputs(N + k, c), model.scaling.inputs[c]);
      }
      z = latent_step(model.dynamics, z, u_scaled);
      if (!z.allFinite()) {
        report.diverged = true;
        break;
      }
      const auto [x_hat, y_hat] = decode(model, z);
      const Vec x_raw = model.scaling.unscale(x_hat, model.scaling.states);
      const Vec y_raw = model.scaling.unscale(y_hat, model.scaling.outputs);
      if (!x_raw.allFinite() || !y_raw.allFinite()) {
        report.diverged = true;
        break;
      }
      pred_x.row(k) = x_raw.transpose();
      pred_y.row(k) = y_raw.transpose();
      valid = k + 1;
    }
  }

  // Error metrics over the valid prediction range, raw units. Relative
  // RMSE divides by the true signal range over the whole test.
  report.rmse_y = Vec::Zero(plant.n_y);
  report.rel_rmse_y = Vec::Zero(plant.n_y);
  report.max_err_y = Vec::Zero(plant.n_y);
  report.rmse_x = Vec::Zero(plant.n_x);
  for (int c = 0; c < plant.n_y; ++c) {
    double sq = 0.0, max_err = 0.0;
    for (int k = 0; k < valid; ++k) {
      const double e = pred_y(k, c) - truth.outputs(N + 1 + k, c);
      sq += e * e;
      max_err = std::max(max_err, std::abs(e));
    }
    const double rmse = valid ? std::sqrt(sq / valid) : NAN;
    const double range = truth.outputs.col(c).maxCoeff() -
                         truth.outputs.col(c).minCoeff();
    report.rmse_y(c) = rmse;
    report.rel_rmse_y(c) = rmse / std::max(range, 1e-12);
    report.max_err_y(c) = max_err;
  }
  for (int c = 0; c < plant.n_x; ++c) {
    double sq = 0.0;
    for (int k = 0; k < valid; ++k) {
      const double e = pred_x(k, c) - truth.states(N + 1 + k, c);
      sq += e * e;
    }
    report.rmse_x(c) = valid ? std::sqrt(sq / valid) : NAN;
  }

  // Plateau offsets: last sample of every input interval at least
  // plateau_hold long that ends inside the predicted range.
  std::vector<double> edges = profile.breakpoints;
  edges.push_back(t_end + dt);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double start = edges[i];
    const double stop = std::min(edges[i + 1], t_end + 0.5 * dt);
    if (stop - start < plateau_hold) continue;
    const int k_end = std::min(
        s - 1, static_cast<int>(std::floor((stop - truth.t0) / dt - 1e-9)));
    const int pred_idx = k_end - (N + 1);
    if (pred_idx < 0 || pred_idx >= valid) continue;
    PlateauOffset off;
    off.t_end = truth.time(k_end);
    off.output_offset = (pred_y.row(pred_idx) -
                         truth.outputs.row(k_end)).cwiseAbs().transpose();
    if (report.has_impurity) {
      const double imp_true = 1.0 - truth.states(k_end, plant.n_x - 1);
      const double imp_pred = 1.0 - pred_x(pred_idx, plant.n_x - 1);
      off.impurity_offset = std::abs(imp_pred - imp_true);
    } else {
      off.impurity_offset = std::numeric_limits<double>::quiet_NaN();
    }
    report.plateaus.push_back(std::move(off));
  }

  // Aligned series for plotting.
  report.header = {"t"};
  for (int i = 0; i < plant.n_u; ++i) report.header.push_back("u" + std::to_string(i + 1));
  for (int i = 0; i < plant.n_y; ++i) report.header.push_back("ytrue" + std::to_string(i + 1));
  for (int i = 0; i < plant.n_y; ++i) report.header.push_back("ypred" + std::to_string(i + 1));
  for (int i = 0; i < plant.n_x; ++i) report.header.push_back("xtrue" + std::to_string(i + 1));
  for (int i = 0; i < plant.n_x; ++i) report.header.push_back("xpred" + std::to_string(i + 1));
  if (report.has_impurity) {
    report.header.push_back("imp_true");
    report.header.push_back("imp_pred");
  }
  report.aligned.resize(K, report.header.size());
  for (int k = 0; k < K; ++k) {
    int c = 0;
    const int row = N + 1 + k;
    report.aligned(k, c++) = truth.time(row);
    for (int i = 0; i < plant.n_u; ++i) report.aligned(k, c++) = truth.inputs(row, i);
    for (int i = 0; i < plant.n_y; ++i) report.aligned(k, c++) = truth.outputs(row, i);
    for (int i = 0; i < plant.n_y; ++i) report.aligned(k, c++) = pred_y(k, i);
    for (int i = 0; i < plant.n_x; ++i) report.aligned(k, c++) = truth.states(row, i);
    for (int i = 0; i < plant.n_x; ++i) report.aligned(k, c++) = pred_x(k, i);
    if (report.has_impurity) {
      report.aligned(k, c++) = 1.0 - truth.states(row, plant.n_x - 1);
      report.aligned(k, c++) = 1.0 - pred_x(k, plant.n_x - 1);
    }
  }
  return report;
}

}  // namespace koop
