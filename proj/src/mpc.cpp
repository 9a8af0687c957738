#include "koop/mpc.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "koop/errors.hpp"

namespace koop {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct CostParts {
  double tracking = 0.0;
  double penalty = 0.0;  // unweighted sum of squared violations
  double max_violation = 0.0;
  double total_violation = 0.0;
};

// Shooting objective over raw input sequences; the solver owns the
// penalty weight.
class ShootingObjective {
 public:
  virtual ~ShootingObjective() = default;
  virtual double eval(const Mat& u_raw, double mu, Mat* grad_raw,
                      CostParts* parts) = 0;
  virtual bool has_gradient() const = 0;
};

// Transforms a raw bound into the model's scaled units, preserving
// infinities (the transforms are monotone increasing). Raw lower bounds
// at or below zero on log channels vanish.
double scaled_bound(double raw, const ChannelScale& ch, bool is_lower) {
  if (!std::isfinite(raw)) return raw;
  if (ch.log && raw <= 0.0) {
    if (is_lower) return -kInf;
    throw ConfigError("non-positive upper bound on a log-scaled channel");
  }
  return ScalingSpec::fwd(raw, ch);
}

void accumulate_penalty(double v, double lo, double hi, CostParts& parts,
                        double* dpen) {
  if (std::isfinite(lo) && v < lo) {
    const double viol = lo - v;
    parts.penalty += viol * viol;
    parts.max_violation = std::max(parts.max_violation, viol);
    parts.total_violation += viol;
    if (dpen) *dpen -= 2.0 * viol;
  }
  if (std::isfinite(hi) && v > hi) {
    const double viol = v - hi;
    parts.penalty += viol * viol;
    parts.max_violation = std::max(parts.max_violation, viol);
    parts.total_violation += viol;
    if (dpen) *dpen += 2.0 * viol;
  }
}

class KoopmanShooting : public ShootingObjective {
 public:
  KoopmanShooting(const KoopmanModel& model, const Vec& z0,
                  const ControlProblem& problem)
      : model_(model), z0_(z0), problem_(problem) {
    const auto& sc = model.scaling;
    state_lo_ = Vec(model.n_x);
    state_hi_ = Vec(model.n_x);
    for (int i = 0; i < model.n_x; ++i) {
      state_lo_(i) = scaled_bound(problem.state_bounds.lo(i), sc.states[i], true);
      state_hi_(i) = scaled_bound(problem.state_bounds.hi(i), sc.states[i], false);
    }
    out_lo_ = Vec(model.n_y);
    out_hi_ = Vec(model.n_y);
    for (int i = 0; i < model.n_y; ++i) {
      out_lo_(i) = scaled_bound(problem.output_bounds.lo(i), sc.outputs[i], true);
      out_hi_(i) = scaled_bound(problem.output_bounds.hi(i), sc.outputs[i], false);
    }
  }

  bool has_gradient() const override { return true; }

  double eval(const Mat& u_raw, double mu, Mat* grad_raw,
              CostParts* parts_out) override {
    const int H = problem_.horizon;
    const auto& sc = model_.scaling;
    const int n_x = model_.n_x, n_y = model_.n_y, n_u = model_.n_u;

    Mat u_scaled(n_u, H);
    for (int k = 0; k < H; ++k) {
      for (int c = 0; c < n_u; ++c) {
        u_scaled(c, k) = ScalingSpec::fwd(u_raw(k, c), sc.inputs[c]);
      }
    }

    // Latent rollout, stages 1..H.
    Mat Z(model_.n_z(), H);
    {
      Vec z = z0_;
      for (int k = 0; k < H; ++k) {
        z = model_.dynamics.apply_a(Mat(z)).col(0) +
            model_.dynamics.b * u_scaled.col(k);
        Z.col(k) = z;
      }
    }
    if (!Z.allFinite()) return kInf;
    Mlp::Cache dec_cache;
    const Mat& D = model_.decoder.forward(Z, dec_cache);
    if (!D.allFinite()) return kInf;

    CostParts parts;
    Mat dD = Mat::Zero(D.rows(), D.cols());
    for (int k = 0; k < H; ++k) {
      // Tracking on the raw tracked output.
      const int tr = problem_.tracked_output;
      const double v_s = D(n_x + tr, k);
      const double y_raw = ScalingSpec::inv(v_s, sc.outputs[tr]);
      const double r = y_raw - problem_.setpoints(k);
      parts.tracking += problem_.tracking_weight * r * r;
      if (grad_raw) {
        dD(n_x + tr, k) += 2.0 * problem_.tracking_weight * r *
                           ScalingSpec::inv_slope(v_s, sc.outputs[tr]);
      }
      // Soft bounds in scaled units.
      for (int i = 0; i < n_x; ++i) {
        double dpen = 0.0;
        accumulate_penalty(D(i, k), state_lo_(i), state_hi_(i), parts,
                           grad_raw ? &dpen : nullptr);
        if (grad_raw) dD(i, k) += mu * dpen;
      }
      for (int i = 0; i < n_y; ++i) {
        double dpen = 0.0;
        accumulate_penalty(D(n_x + i, k), out_lo_(i), out_hi_(i), parts,
                           grad_raw ? &dpen : nullptr);
        if (grad_raw) dD(n_x + i, k) += mu * dpen;
      }
    }
    // Optional move regularization on raw inputs.
    if (problem_.move_weight > 0.0) {
      for (int k = 1; k < H; ++k) {
        const Vec d = (u_raw.row(k) - u_raw.row(k - 1)).transpose();
        parts.tracking += problem_.move_weight * d.squaredNorm();
      }
    }

    if (grad_raw) {
      const Mat dZ = model_.decoder.backward(dec_cache, dD, nullptr);
      Mat du_scaled(n_u, H);
      Vec lambda = Vec::Zero(model_.n_z());
      for (int k = H - 1; k >= 0; --k) {
        lambda += dZ.col(k);
        du_scaled.col(k) = model_.dynamics.b.transpose() * lambda;
        lambda = model_.dynamics.apply_a_transpose(Mat(lambda)).col(0);
      }
      grad_raw->resize(H, n_u);
      for (int k = 0; k < H; ++k) {
        for (int c = 0; c < n_u; ++c) {
          (*grad_raw)(k, c) = du_scaled(c, k) *
                              ScalingSpec::fwd_slope(u_raw(k, c), sc.inputs[c]);
        }
      }
      if (problem_.move_weight > 0.0) {
        for (int k = 1; k < H; ++k) {
          const Vec d = 2.0 * problem_.move_weight *
                        (u_raw.row(k) - u_raw.row(k - 1)).transpose();
          grad_raw->row(k) += d.transpose();
          grad_raw->row(k - 1) -= d.transpose();
        }
      }
    }
    if (parts_out) *parts_out = parts;
    return parts.tracking + mu * parts.penalty;
  }

  // Raw-unit predictions for the returned input sequence.
  void predict(const Mat& u_raw, Mat& states, Mat& outputs) const {
    const int H = problem_.horizon;
    Mat u_scaled(H, model_.n_u);
    for (int k = 0; k < H; ++k) {
      for (int c = 0; c < model_.n_u; ++c) {
        u_scaled(k, c) = ScalingSpec::fwd(u_raw(k, c), model_.scaling.inputs[c]);
      }
    }
    states.resize(H, model_.n_x);
    outputs.resize(H, model_.n_y);
    Vec z = z0_;
    for (int k = 0; k < H; ++k) {
      z = latent_step(model_.dynamics, z, u_scaled.row(k).transpose());
      auto [x_hat, y_hat] = decode(model_, z);
      states.row(k) =
          model_.scaling.unscale(x_hat, model_.scaling.states).transpose();
      outputs.row(k) =
          model_.scaling.unscale(y_hat, model_.scaling.outputs).transpose();
    }
  }

 private:
  const KoopmanModel& model_;
  Vec z0_;
  const ControlProblem& problem_;
  Vec state_lo_, state_hi_, out_lo_, out_hi_;
};

class PlantShooting : public ShootingObjective {
 public:
  PlantShooting(const PlantModel& plant, const Vec& x0,
                const ControlProblem& problem, double dt, int substeps)
      : plant_(plant), x0_(x0), problem_(problem), dt_(dt),
        substeps_(substeps) {
    auto norm_of = [](const Box& b, int i) {
      if (std::isfinite(b.lo(i)) && std::isfinite(b.hi(i)) &&
          b.hi(i) > b.lo(i)) {
        return b.hi(i) - b.lo(i);
      }
      return 1.0;
    };
    state_norm_ = Vec(plant.n_x);
    for (int i = 0; i < plant.n_x; ++i) {
      state_norm_(i) = norm_of(problem.state_bounds, i);
    }
    out_norm_ = Vec(plant.n_y);
    for (int i = 0; i < plant.n_y; ++i) {
      out_norm_(i) = norm_of(problem.output_bounds, i);
    }
  }

  bool has_gradient() const override { return false; }

  double eval(const Mat& u_raw, double mu, Mat* grad_raw,
              CostParts* parts_out) override {
    if (grad_raw) throw InterfaceError("plant shooting has no analytic gradient");
    CostParts parts;
    Vec x = x0_;
    const double h = dt_ / substeps_;
    for (int k = 0; k < problem_.horizon; ++k) {
      const Vec u = u_raw.row(k).transpose();
      try {
        for (int j = 0; j < substeps_; ++j) x = rk4_step(plant_, x, u, h);
      } catch (const NumericError&) {
        return kInf;
      }
      if (!x.allFinite()) return kInf;
      const Vec y = plant_.outputs(x, u);
      const double r = y(problem_.tracked_output) - problem_.setpoints(k);
      parts.tracking += problem_.tracking_weight * r * r;
      for (int i = 0; i < plant_.n_x; ++i) {
        accumulate_penalty(x(i) / state_norm_(i),
                           problem_.state_bounds.lo(i) / state_norm_(i),
                           problem_.state_bounds.hi(i) / state_norm_(i), parts,
                           nullptr);
      }
      for (int i = 0; i < plant_.n_y; ++i) {
        accumulate_penalty(y(i) / out_norm_(i),
                           problem_.output_bounds.lo(i) / out_norm_(i),
                           problem_.output_bounds.hi(i) / out_norm_(i), parts,
                           nullptr);
      }
    }
    if (problem_.move_weight > 0.0) {
      for (int k = 1; k < problem_.horizon; ++k) {
        const Vec d = (u_raw.row(k) - u_raw.row(k - 1)).transpose();
        parts.tracking += problem_.move_weight * d.squaredNorm();
      }
    }
    if (parts_out) *parts_out = parts;
    return parts.tracking + mu * parts.penalty;
  }

  void predict(const Mat& u_raw, Mat& states, Mat& outputs) const {
    const int H = problem_.horizon;
    states.resize(H, plant_.n_x);
    outputs.resize(H, plant_.n_y);
    Vec x = x0_;
    const double h = dt_ / substeps_;
    for (int k = 0; k < H; ++k) {
      const Vec u = u_raw.row(k).transpose();
      for (int j = 0; j < substeps_; ++j) x = rk4_step(plant_, x, u, h);
      states.row(k) = x.transpose();
      outputs.row(k) = plant_.outputs(x, u).transpose();
    }
  }

 private:
  const PlantModel& plant_;
  Vec x0_;
  const ControlProblem& problem_;
  double dt_;
  int substeps_;
  Vec state_norm_, out_norm_;
};

// Normalized decision variables: for two-sided finite input bounds the
// variable lives in [0,1] and maps affinely onto the box; otherwise it is
// the raw input with one-sided clamping.
struct VarMap {
  Vec scale, offset, vlo, vhi;  // per flattened variable (row-major H x n_u)

  static VarMap build(const Box& input_bounds, int horizon) {
    const int n_u = static_cast<int>(input_bounds.lo.size());
    VarMap m;
    m.scale.resize(horizon * n_u);
    m.offset.resize(horizon * n_u);
    m.vlo.resize(horizon * n_u);
    m.vhi.resize(horizon * n_u);
    for (int k = 0; k < horizon; ++k) {
      for (int c = 0; c < n_u; ++c) {
        const int i = k * n_u + c;
        const double lo = input_bounds.lo(c), hi = input_bounds.hi(c);
        if (std::isfinite(lo) && std::isfinite(hi)) {
          m.offset(i) = lo;
          m.scale(i) = hi - lo;  // zero for collapsed bounds
          m.vlo(i) = 0.0;
          m.vhi(i) = 1.0;
        } else {
          m.offset(i) = 0.0;
          m.scale(i) = 1.0;
          m.vlo(i) = std::isfinite(lo) ? lo : -kInf;
          m.vhi(i) = std::isfinite(hi) ? hi : kInf;
        }
      }
    }
    return m;
  }

  Vec project(Vec v) const {
    for (int i = 0; i < v.size(); ++i) {
      v(i) = std::min(std::max(v(i), vlo(i)), vhi(i));
    }
    return v;
  }

  Mat to_raw(const Vec& v, int horizon, int n_u, const Box& bounds) const {
    Mat u(horizon, n_u);
    for (int k = 0; k < horizon; ++k) {
      for (int c = 0; c < n_u; ++c) {
        const int i = k * n_u + c;
        double raw = offset(i) + scale(i) * v(i);
        // Exact box membership regardless of rounding.
        if (std::isfinite(bounds.lo(c))) raw = std::max(raw, bounds.lo(c));
        if (std::isfinite(bounds.hi(c))) raw = std::min(raw, bounds.hi(c));
        u(k, c) = raw;
      }
    }
    return u;
  }

  Vec from_raw(const Mat& u) const {
    Vec v(u.rows() * u.cols());
    for (int k = 0; k < u.rows(); ++k) {
      for (int c = 0; c < u.cols(); ++c) {
        const int i = static_cast<int>(k * u.cols() + c);
        v(i) = scale(i) != 0.0 ? (u(k, c) - offset(i)) / scale(i) : 0.0;
      }
    }
    return project(v);
  }
};

struct InnerResult {
  Vec v;
  int iterations = 0;
  bool converged = false;
  double f = kInf;
};

// Monotone projected gradient with backtracking line search and heavy-ball
// momentum; momentum candidates are dropped whenever they fail the
// sufficient-decrease test.
InnerResult solve_inner(ShootingObjective& obj, const VarMap& map,
                        const ControlProblem& problem, Vec v0, double mu,
                        const SolverConfig& cfg, int stage,
                        std::vector<int>& trace_stage,
                        std::vector<double>& trace_value) {
  const int H = problem.horizon;
  const int n_u = static_cast<int>(problem.input_bounds.lo.size());

  auto eval_at = [&](const Vec& v, Mat* grad_v) {
    const Mat u = map.to_raw(v, H, n_u, problem.input_bounds);
    if (!grad_v) return obj.eval(u, mu, nullptr, nullptr);
    if (obj.has_gradient()) {
      Mat grad_u;
      const double f = obj.eval(u, mu, &grad_u, nullptr);
      grad_v->resize(H, n_u);
      for (int k = 0; k < H; ++k) {
        for (int c = 0; c < n_u; ++c) {
          (*grad_v)(k, c) = grad_u(k, c) * map.scale(k * n_u + c);
        }
      }
      return f;
    }
    // Central finite differences in normalized variables.
    const double f = obj.eval(u, mu, nullptr, nullptr);
    grad_v->resize(H, n_u);
    Vec vp = v;
    for (int i = 0; i < v.size(); ++i) {
      const double h = cfg.fd_step;
      vp(i) = v(i) + h;
      const double fp =
          obj.eval(map.to_raw(vp, H, n_u, problem.input_bounds), mu, nullptr,
                   nullptr);
      vp(i) = v(i) - h;
      const double fm =
          obj.eval(map.to_raw(vp, H, n_u, problem.input_bounds), mu, nullptr,
                   nullptr);
      vp(i) = v(i);
      (*grad_v)(i / n_u, i % n_u) = (fp - fm) / (2.0 * h);
    }
    return f;
  };

  InnerResult res;
  res.v = map.project(std::move(v0));
  double f = eval_at(res.v, nullptr);
  if (!std::isfinite(f)) {
    // Retreat to the box midpoint if the initial iterate already fails.
    Vec mid(res.v.size());
    for (int i = 0; i < mid.size(); ++i) {
      mid(i) = std::isfinite(map.vlo(i)) && std::isfinite(map.vhi(i))
                   ? 0.5 * (map.vlo(i) + map.vhi(i))
                   : 0.0;
    }
    res.v = mid;
    f = eval_at(res.v, nullptr);
  }
  res.f = f;
  trace_stage.push_back(stage);
  trace_value.push_back(f);

  Vec v_prev = res.v;
  double step = 1.0;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    Mat grad_v;
    const double f_check = eval_at(res.v, &grad_v);
    (void)f_check;
    Vec g(res.v.size());
    for (int k = 0; k < H; ++k) {
      for (int c = 0; c < n_u; ++c) g(k * n_u + c) = grad_v(k, c);
    }
    res.iterations = it + 1;

    const Vec pg = res.v - map.project(res.v - g);
    if (pg.lpNorm<Eigen::Infinity>() < cfg.tolerance) {
      res.converged = true;
      break;
    }

    bool accepted = false;
    bool with_momentum = cfg.momentum > 0.0;
    double alpha = step;
    for (int ls = 0; ls < 60; ++ls) {
      Vec cand = res.v - alpha * g;
      if (with_momentum) cand += cfg.momentum * (res.v - v_prev);
      cand = map.project(std::move(cand));
      const Vec dv = cand - res.v;
      if (dv.lpNorm<Eigen::Infinity>() == 0.0) {
        if (with_momentum) {
          with_momentum = false;
          continue;
        }
        break;
      }
      const double f_new = eval_at(cand, nullptr);
      if (std::isfinite(f_new) &&
          f_new <= f - cfg.armijo / std::max(alpha, 1e-16) * dv.squaredNorm()) {
        v_prev = res.v;
        res.v = std::move(cand);
        f = f_new;
        accepted = true;
        break;
      }
      if (with_momentum) {
        with_momentum = false;  // retry the same step without momentum
      } else {
        alpha *= 0.5;
      }
    }
    if (!accepted) break;  // line search exhausted
    trace_stage.push_back(stage);
    trace_value.push_back(f);
    step = std::min(alpha * 2.0, 1e6);
  }
  res.f = f;
  return res;
}

MpcSolution solve_shooting(ShootingObjective& obj, const VarMap& map,
                           const ControlProblem& problem,
                           const SolverConfig& cfg, const Mat& u_init,
                           bool has_soft_bounds,
                           const std::function<void(const Mat&, Mat&, Mat&)>&
                               predictor) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n_u = static_cast<int>(problem.input_bounds.lo.size());

  MpcSolution sol;
  Vec v = map.from_raw(u_init);
  double mu = cfg.penalty_initial;
  bool converged = false;
  int total_iters = 0;
  int stage = 0;
  CostParts parts;
  for (;;) {
    InnerResult inner = solve_inner(obj, map, problem, v, mu, cfg, stage,
                                    sol.trace_stage, sol.trace_value);
    v = inner.v;
    total_iters += inner.iterations;
    converged = inner.converged;
    const Mat u = map.to_raw(v, problem.horizon, n_u, problem.input_bounds);
    obj.eval(u, mu, nullptr, &parts);
    if (!has_soft_bounds) break;
    if (parts.max_violation <= cfg.violation_tolerance) break;
    if (mu >= cfg.penalty_max) break;
    mu = std::min(mu * cfg.penalty_growth, cfg.penalty_max);
    ++stage;
  }

  sol.inputs = map.to_raw(v, problem.horizon, n_u, problem.input_bounds);
  sol.objective = parts.tracking;
  sol.penalty_value = mu * parts.penalty;
  sol.iterations = total_iters;
  sol.converged = converged && std::isfinite(parts.tracking);
  sol.max_violation = parts.max_violation;
  sol.total_violation = parts.total_violation;
  if (parts.max_violation > cfg.violation_tolerance) {
    std::ostringstream note;
    note << "soft bounds violated by " << parts.max_violation
         << " (scaled) at penalty weight " << mu;
    sol.violation_note = note.str();
  }
  predictor(sol.inputs, sol.pred_states, sol.pred_outputs);
  sol.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return sol;
}

Mat initial_guess(const ControlProblem& problem, const MpcSolution* warm,
                  bool use_warm) {
  const int H = problem.horizon;
  const int n_u = static_cast<int>(problem.input_bounds.lo.size());
  Mat u(H, n_u);
  if (use_warm && warm && warm->inputs.rows() == H &&
      warm->inputs.cols() == n_u) {
    u.topRows(H - 1) = warm->inputs.bottomRows(H - 1);
    u.row(H - 1) = warm->inputs.row(H - 1);
    return u;
  }
  for (int c = 0; c < n_u; ++c) {
    const double lo = problem.input_bounds.lo(c);
    const double hi = problem.input_bounds.hi(c);
    const double mid =
        (std::isfinite(lo) && std::isfinite(hi)) ? 0.5 * (lo + hi) : 0.0;
    u.col(c).setConstant(mid);
  }
  return u;
}

}  // namespace

void ControlProblem::validate(int n_u, int n_x, int n_y) const {
  if (horizon < 1) throw InterfaceError("control horizon must be >= 1");
  if (setpoints.size() < horizon) {
    throw InterfaceError("setpoint sequence shorter than the horizon");
  }
  if (tracked_output < 0 || tracked_output >= n_y) {
    throw InterfaceError("tracked output index out of range");
  }
  auto check_box = [](const Box& b, int n, const char* what) {
    if (b.lo.size() != n || b.hi.size() != n) {
      throw InterfaceError(std::string(what) + " bounds have wrong size");
    }
    for (int i = 0; i < n; ++i) {
      if (b.lo(i) > b.hi(i)) {
        throw InterfaceError(std::string(what) + " bounds have lo > hi");
      }
    }
  };
  check_box(input_bounds, n_u, "input");
  check_box(output_bounds, n_y, "output");
  check_box(state_bounds, n_x, "state");
}

namespace {

// Feedback path: scale the raw measurement window (and held-input history
// for embedding models) and encode it once.
Vec encode_raw_window(const KoopmanModel& model, const DelayWindow& chi_raw,
                      const Vec& input_history_raw) {
  if (chi_raw.values.size() != (model.delays + 1) * model.n_y) {
    throw InterfaceError("delay window length mismatch");
  }
  Vec enc_input(model.encoder_input_dim());
  for (int j = 0; j <= model.delays; ++j) {
    for (int c = 0; c < model.n_y; ++c) {
      enc_input(j * model.n_y + c) = ScalingSpec::fwd(
          chi_raw.values(j * model.n_y + c), model.scaling.outputs[c]);
    }
  }
  if (model.embed_inputs) {
    if (input_history_raw.size() != model.delays * model.n_u) {
      throw InterfaceError("input history length mismatch");
    }
    const int base = (model.delays + 1) * model.n_y;
    for (int j = 0; j < model.delays; ++j) {
      for (int c = 0; c < model.n_u; ++c) {
        enc_input(base + j * model.n_u + c) = ScalingSpec::fwd(
            input_history_raw(j * model.n_u + c), model.scaling.inputs[c]);
      }
    }
  }
  return encode_vector(model, enc_input);
}

}  // namespace

double mpc_objective(const KoopmanModel& model, const DelayWindow& chi_raw,
                     const ControlProblem& problem, const Mat& u_raw,
                     double penalty_weight, Mat* grad_raw) {
  problem.validate(model.n_u, model.n_x, model.n_y);
  const Vec z0 = encode_raw_window(model, chi_raw, Vec());
  KoopmanShooting obj(model, z0, problem);
  return obj.eval(u_raw, penalty_weight, grad_raw, nullptr);
}

MpcSolution solve_mpc(const KoopmanModel& model, const DelayWindow& chi_raw,
                      const Vec& input_history_raw,
                      const ControlProblem& problem,
                      const MpcSolution* warm, const SolverConfig& cfg) {
  problem.validate(model.n_u, model.n_x, model.n_y);
  const Vec z0 = encode_raw_window(model, chi_raw, input_history_raw);

  KoopmanShooting obj(model, z0, problem);
  const VarMap map = VarMap::build(problem.input_bounds, problem.horizon);
  const bool soft = problem.output_bounds.any_finite() ||
                    problem.state_bounds.any_finite();
  const Mat u0 = initial_guess(problem, warm, cfg.warm_start);
  return solve_shooting(obj, map, problem, cfg, u0, soft,
                        [&obj](const Mat& u, Mat& xs, Mat& ys) {
                          obj.predict(u, xs, ys);
                        });
}

MpcSolution solve_mpc(const KoopmanModel& model, const DelayWindow& chi_raw,
                      const ControlProblem& problem,
                      const MpcSolution* warm, const SolverConfig& cfg) {
  if (model.embed_inputs) {
    throw InterfaceError("model embeds inputs: supply the input history");
  }
  return solve_mpc(model, chi_raw, Vec(), problem, warm, cfg);
}

MpcSolution koopman_lmpc_solve(const KoopmanModel& model,
                               const DelayWindow& chi_raw,
                               const ControlProblem& problem,
                               const MpcSolution* warm,
                               const SolverConfig& cfg) {
  if (model.decoder_kind != DecoderKind::linear) {
    throw InterfaceError("koopman_lmpc_solve requires a linear-decoder model");
  }
  return solve_mpc(model, chi_raw, problem, warm, cfg);
}

MpcSolution ideal_nmpc_solve(const PlantModel& plant, const Vec& x0,
                             const ControlProblem& problem,
                             const SolverConfig& cfg, double dt, int substeps,
                             const MpcSolution* warm) {
  problem.validate(plant.n_u, plant.n_x, plant.n_y);
  if (x0.size() != plant.n_x) throw InterfaceError("ideal nmpc: state size");
  if (dt <= 0 || substeps < 1) throw InterfaceError("ideal nmpc: bad sampling");
  PlantShooting obj(plant, x0, problem, dt, substeps);
  const VarMap map = VarMap::build(problem.input_bounds, problem.horizon);
  const bool soft = problem.output_bounds.any_finite() ||
                    problem.state_bounds.any_finite();
  const Mat u0 = initial_guess(problem, warm, cfg.warm_start);
  return solve_shooting(obj, map, problem, cfg, u0, soft,
                        [&obj](const Mat& u, Mat& xs, Mat& ys) {
                          obj.predict(u, xs, ys);
                        });
}

}  // namespace koop
