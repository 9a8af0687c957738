#pragma once

#include <limits>
#include <string>
#include <vector>

#include "koop/dynamics.hpp"
#include "koop/model.hpp"

namespace koop {

struct Box {
  Vec lo, hi;  // +-inf marks an absent bound

  static Box unbounded(int n) {
    Box b;
    b.lo = Vec::Constant(n, -std::numeric_limits<double>::infinity());
    b.hi = Vec::Constant(n, std::numeric_limits<double>::infinity());
    return b;
  }
  bool any_finite() const {
    for (int i = 0; i < lo.size(); ++i) {
      if (std::isfinite(lo(i)) || std::isfinite(hi(i))) return true;
    }
    return false;
  }
};

// One receding-horizon tracking instance. Everything is expressed in raw
// plant units; conversion into model units happens inside the solver.
struct ControlProblem {
  int horizon = 30;
  int tracked_output = 0;
  Vec setpoints;      // length >= horizon; setpoint for stage k is entry k-1
  Box input_bounds;   // n_u
  Box output_bounds;  // n_y
  Box state_bounds;   // n_x
  double tracking_weight = 1.0;
  double move_weight = 0.0;

  void validate(int n_u, int n_x, int n_y) const;
};

struct SolverConfig {
  int max_iterations = 300;        // per penalty stage
  double tolerance = 1e-6;         // projected-gradient norm
  double penalty_initial = 1e2;
  double penalty_growth = 10.0;
  double penalty_max = 1e6;
  double violation_tolerance = 1e-6;  // scaled units
  double armijo = 1e-4;
  double momentum = 0.8;
  bool warm_start = true;
  double fd_step = 1e-6;  // finite-difference step for plant gradients
};

struct MpcSolution {
  Mat inputs;        // horizon x n_u, raw, always inside the input box
  Mat pred_states;   // horizon x n_x, raw, stages 1..N_c
  Mat pred_outputs;  // horizon x n_y, raw
  double objective = 0.0;      // tracking (+ move) cost in raw units
  double penalty_value = 0.0;  // weighted penalty at the final stage
  int iterations = 0;
  double wall_ms = 0.0;
  bool converged = false;
  double max_violation = 0.0;    // scaled units, over all bounded channels
  double total_violation = 0.0;
  std::string violation_note;
  // Accepted penalized objective values per inner iteration, with the
  // penalty stage each belongs to. Monotone within a stage.
  std::vector<int> trace_stage;
  std::vector<double> trace_value;
};

// Receding-horizon solve over the reduced model. The delay window holds
// raw measurements (newest first); it is scaled and encoded once before
// the optimization. Warm starting shifts the previous solution by one
// step and repeats its last input.
MpcSolution solve_mpc(const KoopmanModel& model, const DelayWindow& chi_raw,
                      const ControlProblem& problem,
                      const MpcSolution* warm, const SolverConfig& cfg);
// Variant supplying the raw held-input history (newest first) for models
// that embed inputs in the encoder.
MpcSolution solve_mpc(const KoopmanModel& model, const DelayWindow& chi_raw,
                      const Vec& input_history_raw,
                      const ControlProblem& problem,
                      const MpcSolution* warm, const SolverConfig& cfg);

// Identical interface, restricted to linear-decoder models.
MpcSolution koopman_lmpc_solve(const KoopmanModel& model,
                               const DelayWindow& chi_raw,
                               const ControlProblem& problem,
                               const MpcSolution* warm,
                               const SolverConfig& cfg);

// Penalized shooting objective for a given input sequence, with its exact
// reverse-mode gradient when `grad_raw` is non-null. Exposed for
// diagnostics and verification.
double mpc_objective(const KoopmanModel& model, const DelayWindow& chi_raw,
                     const ControlProblem& problem, const Mat& u_raw,
                     double penalty_weight, Mat* grad_raw = nullptr);

// Benchmark controller: same shooting + penalty solver, but the rollout
// integrates the true plant (RK4, `substeps` per sample) from full-state
// feedback, with finite-difference gradients.
MpcSolution ideal_nmpc_solve(const PlantModel& plant, const Vec& x0,
                             const ControlProblem& problem,
                             const SolverConfig& cfg, double dt, int substeps,
                             const MpcSolution* warm = nullptr);

}  // namespace koop
