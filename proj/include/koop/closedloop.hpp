#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "koop/mpc.hpp"

namespace koop {

enum class ControllerKind { koopman_nmpc, koopman_lmpc, ideal_nmpc };

std::string to_string(ControllerKind k);
ControllerKind controller_kind_from_string(const std::string& s);

// One closed-loop study: the plant starts at the steady state of
// `initial_input`, the controller tracks a piecewise-constant setpoint
// schedule over `duration` at sampling interval dt.
struct Scenario {
  Vec initial_input;
  std::vector<double> setpoint_times;   // ascending, from t = 0
  std::vector<double> setpoint_values;  // tracked-output setpoints
  double duration = 4.0;
  double dt = 1.0 / 30.0;
  int substeps = 20;
  ControllerKind controller = ControllerKind::koopman_nmpc;
  // Test hook: force a solver failure at selected instants.
  std::function<bool(int)> inject_solver_failure;

  double setpoint_at(double t) const;
  Vec setpoint_preview(double t, int horizon, double dt_preview) const;
};

struct ClosedLoopLog {
  int n_y = 0, n_u = 0, n_x = 0;
  std::vector<double> t;
  Mat y;     // measured outputs at each instant (raw)
  Mat u;     // applied input (first move of the solution)
  Mat x;     // plant state at the instant
  Mat yhat;  // controller's first-step output prediction
  std::vector<double> solve_ms;
  std::vector<int> iters;
  std::vector<double> objective;
  std::vector<double> violation;
  std::vector<int> held;  // 1 where the previous input was held

  int instants() const { return static_cast<int>(t.size()); }
  void write_csv(const std::string& path) const;
};

// Runs the plant-in-the-loop study. The model pointer is required for the
// Koopman controllers and ignored by ideal NMPC (which reads the full
// plant state). A solver failure at any instant holds the previous input
// and flags the row. The seed is reserved for perturbation hooks and does
// not affect the nominal run.
ClosedLoopLog run_closed_loop(const PlantModel& plant,
                              const KoopmanModel* model,
                              const Scenario& scenario,
                              const ControlProblem& problem_template,
                              const SolverConfig& solver_cfg,
                              std::uint64_t seed = 0);

struct BenchmarkRow {
  std::string controller;
  double mean_ms = 0.0;
  double max_ms = 0.0;
  double reduction = std::numeric_limits<double>::quiet_NaN();
};

struct BenchmarkTable {
  std::vector<BenchmarkRow> rows;
  std::string text() const;
  void write_csv(const std::string& path) const;
};

// Runs the same scenario once per controller, sequentially, and compares
// solver-only wall times. Reduction is relative to ideal NMPC.
BenchmarkTable benchmark_cpu(const PlantModel& plant,
                             const KoopmanModel* wiener,
                             const KoopmanModel* linear,
                             const Scenario& scenario,
                             const ControlProblem& problem_template,
                             const SolverConfig& solver_cfg,
                             const std::vector<ControllerKind>& controllers);

struct PlateauOffset {
  double t_end = 0.0;
  Vec output_offset;              // |y_hat - y| per channel at plateau end
  double impurity_offset = 0.0;   // NaN when not applicable
};

struct OpenLoopReport {
  Mat aligned;                     // see header_columns()
  std::vector<std::string> header;
  Vec rmse_y, rel_rmse_y, max_err_y;
  Vec rmse_x;
  std::vector<PlateauOffset> plateaus;
  bool has_impurity = false;
  bool diverged = false;
  int predicted_samples = 0;

  void write_csv(const std::string& path) const;
};

// Open-loop model test: simulates the plant under the profile, forms the
// delay window at sample N, rolls the model over the remaining inputs and
// reports per-channel errors in raw units plus the prediction offset at
// the end of every input plateau at least `plateau_hold` long.
OpenLoopReport evaluate_openloop(const KoopmanModel& model,
                                 const PlantModel& plant, const Vec& x0,
                                 const InputProfile& profile, double dt,
                                 double t_end, int substeps,
                                 double plateau_hold = 1.0);

}  // namespace koop
