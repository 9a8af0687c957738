#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace koop {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Continuous-time input-affine plant
//   xdot = drift(x) + sum_i input_fields[i](x) * u_i
//   y    = output_map(x, u_held)
// The held input is passed to the output map because some measured
// quantities (product draw rates) are set directly by the actuators.
// Plants whose outputs depend on the state alone ignore it.
struct PlantModel {
  int n_x = 0;
  int n_u = 0;
  int n_y = 0;
  std::function<Vec(const Vec&)> drift;
  std::vector<std::function<Vec(const Vec&)>> input_fields;
  std::function<Vec(const Vec&, const Vec&)> output_map;
  std::optional<std::pair<Vec, Vec>> state_bounds;  // lo, hi
  std::string name;

  Vec rhs(const Vec& x, const Vec& u) const;
  Vec outputs(const Vec& x, const Vec& u) const { return output_map(x, u); }
};

// Piecewise-constant input signal. Level i holds on
// [breakpoints[i], breakpoints[i+1]); the last level holds indefinitely.
struct InputProfile {
  std::vector<double> breakpoints;  // ascending
  std::vector<Vec> levels;

  Vec at(double t) const;
  double start() const { return breakpoints.front(); }
  static InputProfile constant(const Vec& u, double t0 = 0.0);
};

// Sampled record of one simulation. Row k of `inputs` is the value held
// over [t_k, t_{k+1}). Row k of `outputs` is output_map(x_k, u_{k-1}),
// i.e. the measurement at t_k is taken under the input still in effect
// when the sample is drawn (row 0 uses u_0).
struct Trajectory {
  double dt = 0.0;
  double t0 = 0.0;
  Mat inputs;   // s x n_u
  Mat states;   // s x n_x
  Mat outputs;  // s x n_y

  int samples() const { return static_cast<int>(states.rows()); }
  double time(int k) const { return t0 + k * dt; }
};

// Classical fixed-step RK4. Throws NumericError naming the first state
// index whose derivative evaluates non-finite.
Vec rk4_step(const PlantModel& plant, const Vec& x, const Vec& u, double dt);

// Integrates the plant with `substeps` RK4 steps per sample and records a
// Trajectory with samples at t0, t0+dt, ..., t_end. Throws NumericError if
// the state leaves state_bounds by more than `bound_slack`.
Trajectory simulate(const PlantModel& plant, const Vec& x0,
                    const InputProfile& profile, double dt, double t_end,
                    int substeps, double bound_slack = 1e-6);

// Damped Newton on the steady-state residual with finite-difference
// Jacobian; falls back to integrating the plant forward when Newton
// stalls. Returns x* with ||rhs(x*, u)||_inf < 1e-10.
Vec steady_state(const PlantModel& plant, const Vec& u, const Vec& x_guess);

// Plant registry: "vdp", "cstr", "column". Unknown names or parameters
// raise ConfigError. The column is a constant-relative-volatility binary
// staged model; see README for the balance equations and parameters.
PlantModel make_plant(const std::string& name,
                      const std::map<std::string, double>& params = {});

// CSV persistence, header t,u1..,x1..,y1.. at 17 significant digits.
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::string& path, int n_u, int n_x,
                               int n_y);

}  // namespace koop
