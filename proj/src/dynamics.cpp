#include "koop/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "koop/csv.hpp"
#include "koop/errors.hpp"

namespace koop {

Vec PlantModel::rhs(const Vec& x, const Vec& u) const {
  Vec dx = drift(x);
  for (int i = 0; i < n_u; ++i) dx += input_fields[i](x) * u(i);
  return dx;
}

Vec InputProfile::at(double t) const {
  if (breakpoints.empty()) throw InterfaceError("empty input profile");
  // Last interval whose start is <= t; times before the first breakpoint
  // clamp to the first level.
  auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), t);
  std::size_t idx = (it == breakpoints.begin())
                        ? 0
                        : static_cast<std::size_t>(it - breakpoints.begin()) - 1;
  return levels[idx];
}

InputProfile InputProfile::constant(const Vec& u, double t0) {
  InputProfile p;
  p.breakpoints = {t0};
  p.levels = {u};
  return p;
}

namespace {

void check_finite_derivative(const Vec& dx, double t) {
  for (int i = 0; i < dx.size(); ++i) {
    if (!std::isfinite(dx(i))) {
      std::ostringstream msg;
      msg << "integration failure: non-finite derivative for state " << i
          << " near t=" << t;
      throw NumericError(msg.str());
    }
  }
}

}  // namespace

Vec rk4_step(const PlantModel& plant, const Vec& x, const Vec& u, double dt) {
  if (dt <= 0.0) throw InterfaceError("rk4_step requires dt > 0");
  if (x.size() != plant.n_x) throw InterfaceError("rk4_step: state size mismatch");
  const Vec k1 = plant.rhs(x, u);
  check_finite_derivative(k1, 0.0);
  const Vec k2 = plant.rhs(x + 0.5 * dt * k1, u);
  check_finite_derivative(k2, 0.0);
  const Vec k3 = plant.rhs(x + 0.5 * dt * k2, u);
  check_finite_derivative(k3, 0.0);
  const Vec k4 = plant.rhs(x + dt * k3, u);
  check_finite_derivative(k4, 0.0);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

namespace {

void check_bounds(const PlantModel& plant, const Vec& x, double t,
                  double slack) {
  for (int i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x(i))) {
      std::ostringstream msg;
      msg << "simulation diverged: non-finite state " << i << " at t=" << t;
      throw NumericError(msg.str());
    }
  }
  if (!plant.state_bounds) return;
  const auto& [lo, hi] = *plant.state_bounds;
  for (int i = 0; i < x.size(); ++i) {
    if (x(i) < lo(i) - slack || x(i) > hi(i) + slack) {
      std::ostringstream msg;
      msg << "simulation diverged: state " << i << " = " << x(i)
          << " outside bounds at t=" << t;
      throw NumericError(msg.str());
    }
  }
}

}  // namespace

Trajectory simulate(const PlantModel& plant, const Vec& x0,
                    const InputProfile& profile, double dt, double t_end,
                    int substeps, double bound_slack) {
  if (substeps < 1) throw InterfaceError("simulate requires substeps >= 1");
  if (dt <= 0.0) throw InterfaceError("simulate requires dt > 0");
  const double t0 = profile.start();
  if (t_end < t0) throw InterfaceError("simulate: t_end before profile start");
  const int s = static_cast<int>(std::floor((t_end - t0) / dt + 1e-9)) + 1;

  Trajectory traj;
  traj.dt = dt;
  traj.t0 = t0;
  traj.inputs.resize(s, plant.n_u);
  traj.states.resize(s, plant.n_x);
  traj.outputs.resize(s, plant.n_y);

  Vec x = x0;
  Vec u_prev = profile.at(t0);
  const double h = dt / substeps;
  for (int k = 0; k < s; ++k) {
    const double t = t0 + k * dt;
    const Vec u = profile.at(t);
    check_bounds(plant, x, t, bound_slack);
    traj.states.row(k) = x.transpose();
    traj.inputs.row(k) = u.transpose();
    // Measurement at t_k is taken under the input held up to t_k.
    traj.outputs.row(k) = plant.outputs(x, k == 0 ? u : u_prev).transpose();
    if (k + 1 < s) {
      for (int j = 0; j < substeps; ++j) x = rk4_step(plant, x, u, h);
    }
    u_prev = u;
  }
  return traj;
}

namespace {

Mat fd_jacobian(const PlantModel& plant, const Vec& x, const Vec& u) {
  const int n = plant.n_x;
  Mat jac(n, n);
  const Vec r0 = plant.rhs(x, u);
  Vec xp = x;
  for (int j = 0; j < n; ++j) {
    const double h = 1e-7 * (1.0 + std::abs(x(j)));
    xp(j) = x(j) + h;
    jac.col(j) = (plant.rhs(xp, u) - r0) / h;
    xp(j) = x(j);
  }
  return jac;
}

}  // namespace

Vec steady_state(const PlantModel& plant, const Vec& u, const Vec& x_guess) {
  if (!x_guess.allFinite()) throw InterfaceError("steady_state: non-finite guess");
  constexpr double kTol = 1e-11;
  constexpr int kNewtonIters = 60;
  constexpr int kRounds = 25;

  Vec x = x_guess;
  for (int round = 0; round < kRounds; ++round) {
    // Damped Newton on the residual.
    bool stalled = false;
    for (int it = 0; it < kNewtonIters; ++it) {
      const Vec r = plant.rhs(x, u);
      const double rn = r.lpNorm<Eigen::Infinity>();
      if (!std::isfinite(rn)) {
        stalled = true;
        break;
      }
      if (rn < kTol) return x;
      const Mat jac = fd_jacobian(plant, x, u);
      Eigen::FullPivLU<Mat> lu(jac);
      if (!lu.isInvertible()) {
        stalled = true;
        break;
      }
      const Vec step = lu.solve(-r);
      double alpha = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 30; ++ls) {
        const Vec x_new = x + alpha * step;
        const Vec r_new = plant.rhs(x_new, u);
        if (r_new.allFinite() &&
            r_new.lpNorm<Eigen::Infinity>() < (1.0 - 1e-4 * alpha) * rn) {
          x = x_new;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        stalled = true;
        break;
      }
    }
    if (!stalled) {
      const double rn = plant.rhs(x, u).lpNorm<Eigen::Infinity>();
      if (rn < kTol) return x;
    }
    // Fall back to integrating toward the attractor, then retry Newton.
    if (!x.allFinite()) x = x_guess;
    try {
      for (int step = 0; step < 1000; ++step) x = rk4_step(plant, x, u, 0.01);
    } catch (const NumericError&) {
      x = x_guess;
    }
  }
  throw NumericError("steady state failure: no convergence for plant " +
                     plant.name);
}

namespace {

PlantModel make_vdp(const std::map<std::string, double>& params) {
  double mu = 1.0;
  for (const auto& [key, value] : params) {
    if (key == "mu") {
      mu = value;
    } else {
      throw ConfigError("unknown vdp parameter: " + key);
    }
  }
  PlantModel plant;
  plant.name = "vdp";
  plant.n_x = 2;
  plant.n_u = 1;
  plant.n_y = 1;
  plant.drift = [mu](const Vec& x) {
    Vec dx(2);
    dx(0) = x(1);
    dx(1) = mu * (1.0 - x(0) * x(0)) * x(1) - x(0);
    return dx;
  };
  plant.input_fields = {[](const Vec& x) {
    Vec g(2);
    g << 0.0, 1.0;
    return g;
  }};
  plant.output_map = [](const Vec& x, const Vec&) {
    Vec y(1);
    y(0) = x(0);
    return y;
  };
  return plant;
}

// Dimensionless exothermic CSTR (conversion x1, temperature x2) with the
// coolant temperature as input. Parameters keep it on a stable branch.
PlantModel make_cstr(const std::map<std::string, double>& params) {
  double Da = 0.085, B = 8.0, gamma = 20.0, beta = 3.0;
  for (const auto& [key, value] : params) {
    if (key == "Da") {
      Da = value;
    } else if (key == "B") {
      B = value;
    } else if (key == "gamma") {
      gamma = value;
    } else if (key == "beta") {
      beta = value;
    } else {
      throw ConfigError("unknown cstr parameter: " + key);
    }
  }
  if (Da <= 0 || gamma <= 0 || beta <= 0) {
    throw ConfigError("cstr parameters must be positive");
  }
  PlantModel plant;
  plant.name = "cstr";
  plant.n_x = 2;
  plant.n_u = 1;
  plant.n_y = 1;
  auto rate = [Da, gamma](const Vec& x) {
    return Da * (1.0 - x(0)) * std::exp(x(1) / (1.0 + x(1) / gamma));
  };
  plant.drift = [rate, B, beta](const Vec& x) {
    const double r = rate(x);
    Vec dx(2);
    dx(0) = -x(0) + r;
    dx(1) = -x(1) + B * r - beta * x(1);
    return dx;
  };
  plant.input_fields = {[beta](const Vec&) {
    Vec g(2);
    g << 0.0, beta;
    return g;
  }};
  plant.output_map = [](const Vec& x, const Vec&) {
    Vec y(1);
    y(0) = x(1);
    return y;
  };
  Vec lo(2), hi(2);
  lo << 0.0, -5.0;
  hi << 1.0, 50.0;
  plant.state_bounds = {{lo, hi}};
  return plant;
}

// Binary staged column with constant relative volatility and constant
// molar flows. States are light-component liquid fractions on stages
// 0..n+1 (0 = reboiler, n+1 = total condenser, feed on tray n_F).
// Inputs are u = (L, F): reflux flow and feed flow; the vapor flow V is
// a fixed parameter. Flows: liquid L above the feed and L+F below it,
// bottoms B = L+F-V, distillate D = V-L. Outputs y = (D, B, x_{n_F}).
PlantModel make_column(const std::map<std::string, double>& params) {
  int trays = 10;
  int feed_tray = 5;
  double alpha = 1.6;
  double z_feed = 0.5;
  double tray_holdup = 0.5;
  double drum_holdup = 5.0;
  double vapor_flow = 1.0;
  for (const auto& [key, value] : params) {
    if (key == "trays") {
      trays = static_cast<int>(value);
    } else if (key == "feed_tray") {
      feed_tray = static_cast<int>(value);
    } else if (key == "alpha") {
      alpha = value;
    } else if (key == "z_feed") {
      z_feed = value;
    } else if (key == "tray_holdup") {
      tray_holdup = value;
    } else if (key == "drum_holdup") {
      drum_holdup = value;
    } else if (key == "vapor_flow") {
      vapor_flow = value;
    } else {
      throw ConfigError("unknown column parameter: " + key);
    }
  }
  if (trays < 2) throw ConfigError("column needs at least 2 trays");
  if (feed_tray < 1 || feed_tray > trays) {
    throw ConfigError("column feed_tray must lie on a tray");
  }
  if (alpha <= 1.0) throw ConfigError("column alpha must exceed 1");
  if (z_feed <= 0.0 || z_feed >= 1.0) {
    throw ConfigError("column z_feed must lie in (0,1)");
  }
  if (tray_holdup <= 0 || drum_holdup <= 0 || vapor_flow <= 0) {
    throw ConfigError("column holdups and vapor flow must be positive");
  }

  const int n = trays;
  const int n_states = n + 2;
  const double V = vapor_flow;
  const double M = tray_holdup;
  const double Md = drum_holdup;
  const int nf = feed_tray;

  auto equilibrium = [alpha](double x) {
    return alpha * x / (1.0 + (alpha - 1.0) * x);
  };

  PlantModel plant;
  plant.name = "column";
  plant.n_x = n_states;
  plant.n_u = 2;
  plant.n_y = 3;

  // V-driven part of the balances (independent of L and F).
  plant.drift = [n, V, M, Md, equilibrium](const Vec& x) {
    Vec dx(x.size());
    Vec y(x.size());
    for (int i = 0; i <= n; ++i) y(i) = equilibrium(x(i));
    dx(0) = V * (x(0) - y(0)) / Md;
    for (int i = 1; i <= n; ++i) dx(i) = V * (y(i - 1) - y(i)) / M;
    dx(n + 1) = V * (y(n) - x(n + 1)) / Md;
    return dx;
  };

  // Reflux field: every stage up to the condenser sees L x_{i+1} in and
  // L x_i out; the condenser's reflux and distillate draws cancel.
  auto g_reflux = [n, M, Md](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    g(0) = (x(1) - x(0)) / Md;
    for (int i = 1; i <= n; ++i) g(i) = (x(i + 1) - x(i)) / M;
    return g;
  };
  // Feed field: saturated liquid joins the liquid stream at the feed tray
  // and travels down to the reboiler, leaving with the bottoms.
  auto g_feed = [n, nf, M, Md, z_feed](const Vec& x) {
    Vec g = Vec::Zero(x.size());
    g(0) = (x(1) - x(0)) / Md;
    for (int i = 1; i < nf; ++i) g(i) = (x(i + 1) - x(i)) / M;
    g(nf) = (z_feed - x(nf)) / M;
    return g;
  };
  plant.input_fields = {g_reflux, g_feed};

  plant.output_map = [V, nf](const Vec& x, const Vec& u) {
    Vec y(3);
    y(0) = V - u(0);         // distillate draw
    y(1) = u(0) + u(1) - V;  // bottoms draw
    y(2) = x(nf);            // feed-tray composition
    return y;
  };

  plant.state_bounds = {{Vec::Zero(n_states), Vec::Ones(n_states)}};
  return plant;
}

}  // namespace

PlantModel make_plant(const std::string& name,
                      const std::map<std::string, double>& params) {
  if (name == "vdp") return make_vdp(params);
  if (name == "cstr") return make_cstr(params);
  if (name == "column") return make_column(params);
  throw ConfigError("unknown plant: " + name);
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  CsvTable table;
  table.header.push_back("t");
  for (int i = 0; i < traj.inputs.cols(); ++i)
    table.header.push_back("u" + std::to_string(i + 1));
  for (int i = 0; i < traj.states.cols(); ++i)
    table.header.push_back("x" + std::to_string(i + 1));
  for (int i = 0; i < traj.outputs.cols(); ++i)
    table.header.push_back("y" + std::to_string(i + 1));
  const int s = traj.samples();
  table.rows.resize(s, table.header.size());
  for (int k = 0; k < s; ++k) {
    int c = 0;
    table.rows(k, c++) = traj.time(k);
    for (int i = 0; i < traj.inputs.cols(); ++i)
      table.rows(k, c++) = traj.inputs(k, i);
    for (int i = 0; i < traj.states.cols(); ++i)
      table.rows(k, c++) = traj.states(k, i);
    for (int i = 0; i < traj.outputs.cols(); ++i)
      table.rows(k, c++) = traj.outputs(k, i);
  }
  write_csv(path, table);
}

Trajectory read_trajectory_csv(const std::string& path, int n_u, int n_x,
                               int n_y) {
  const CsvTable table = read_csv(path);
  if (table.cols() != 1 + n_u + n_x + n_y) {
    throw ConfigError("trajectory csv has wrong column count: " + path);
  }
  const int s = static_cast<int>(table.rows.rows());
  if (s < 2) throw ConfigError("trajectory csv too short: " + path);
  Trajectory traj;
  traj.t0 = table.rows(0, 0);
  traj.dt = table.rows(1, 0) - table.rows(0, 0);
  traj.inputs = table.rows.block(0, 1, s, n_u);
  traj.states = table.rows.block(0, 1 + n_u, s, n_x);
  traj.outputs = table.rows.block(0, 1 + n_u + n_x, s, n_y);
  return traj;
}

}  // namespace koop
