#include "koop/training.hpp"

#include <chrono>
#include <cmath>

#include "koop/errors.hpp"

namespace koop {

namespace {

// One window in scaled units, laid out column-wise for the batch engine:
// chi column k is the delay vector at window sample k, u/target column k
// belong to the transition k -> k+1.
struct ScaledWindow {
  Mat chi;     // enc_dim x (s-1)
  Mat u;       // n_u x (s-1)
  Mat target;  // (n_x + n_y) x (s-1), stacked scaled (x, y) at k+1
};

ScaledWindow scale_window(const TrainingWindow& w, const ScalingSpec& spec,
                          bool embed_inputs) {
  const int s = w.length();
  if (s < 2) throw InterfaceError("training window needs s >= 2");
  const int n_y = w.n_y();
  const int n_u = w.n_u();
  const int n_x = w.n_x();
  const int N = w.delays;
  const int enc_dim = (N + 1) * n_y + (embed_inputs ? N * n_u : 0);

  // Scale the full slice once, then gather.
  Mat out_scaled(w.full_outputs.rows(), n_y);
  for (Eigen::Index r = 0; r < w.full_outputs.rows(); ++r) {
    for (int c = 0; c < n_y; ++c) {
      out_scaled(r, c) = ScalingSpec::fwd(w.full_outputs(r, c), spec.outputs[c]);
    }
  }
  Mat in_scaled(w.full_inputs.rows(), n_u);
  for (Eigen::Index r = 0; r < w.full_inputs.rows(); ++r) {
    for (int c = 0; c < n_u; ++c) {
      in_scaled(r, c) = ScalingSpec::fwd(w.full_inputs(r, c), spec.inputs[c]);
    }
  }
  Mat st_scaled(w.full_states.rows(), n_x);
  for (Eigen::Index r = 0; r < w.full_states.rows(); ++r) {
    for (int c = 0; c < n_x; ++c) {
      st_scaled(r, c) = ScalingSpec::fwd(w.full_states(r, c), spec.states[c]);
    }
  }

  ScaledWindow sw;
  sw.chi.resize(enc_dim, s - 1);
  sw.u.resize(n_u, s - 1);
  sw.target.resize(n_x + n_y, s - 1);
  for (int k = 0; k + 1 < s; ++k) {
    for (int j = 0; j <= N; ++j) {
      sw.chi.col(k).segment(j * n_y, n_y) = out_scaled.row(N + k - j).transpose();
    }
    if (embed_inputs) {
      for (int j = 1; j <= N; ++j) {
        sw.chi.col(k).segment((N + 1) * n_y + (j - 1) * n_u, n_u) =
            in_scaled.row(N + k - j).transpose();
      }
    }
    sw.u.col(k) = in_scaled.row(N + k).transpose();
    sw.target.col(k).head(n_x) = st_scaled.row(N + k + 1).transpose();
    sw.target.col(k).tail(n_y) = out_scaled.row(N + k + 1).transpose();
  }
  return sw;
}

// Batch tensors with column index k*B + w (step-major), so each rollout
// step touches one contiguous block of B columns.
struct BatchTensors {
  Mat chi, u, target;
  int count = 0;  // B
  int steps = 0;  // s - 1
};

BatchTensors assemble(const std::vector<ScaledWindow>& windows,
                      const std::vector<int>& indices) {
  if (indices.empty()) throw InterfaceError("empty batch");
  const int B = static_cast<int>(indices.size());
  const int steps = static_cast<int>(windows[indices[0]].chi.cols());
  BatchTensors bt;
  bt.count = B;
  bt.steps = steps;
  bt.chi.resize(windows[indices[0]].chi.rows(), B * steps);
  bt.u.resize(windows[indices[0]].u.rows(), B * steps);
  bt.target.resize(windows[indices[0]].target.rows(), B * steps);
  for (int wi = 0; wi < B; ++wi) {
    const ScaledWindow& sw = windows[indices[wi]];
    if (static_cast<int>(sw.chi.cols()) != steps) {
      throw InterfaceError("mixed window lengths in one batch");
    }
    for (int k = 0; k < steps; ++k) {
      bt.chi.col(k * B + wi) = sw.chi.col(k);
      bt.u.col(k * B + wi) = sw.u.col(k);
      bt.target.col(k * B + wi) = sw.target.col(k);
    }
  }
  return bt;
}

struct FlatGradBuilder {
  Mlp::Grad enc, dec;
  Vec a, b;

  void init(const KoopmanModel& m) {
    enc.init_like(m.encoder);
    dec.init_like(m.decoder);
    a = Vec::Zero(m.dynamics.a_count());
    b = Vec::Zero(m.dynamics.b.size());
  }

  Vec flatten(const KoopmanModel& m) const {
    Vec g(m.num_params());
    int idx = 0;
    auto put_mlp = [&](const Mlp& mlp, const Mlp::Grad& grad) {
      for (int l = 0; l < mlp.layers(); ++l) {
        const Mat& dw = grad.dW[l];
        for (int r = 0; r < dw.rows(); ++r) {
          for (int c = 0; c < dw.cols(); ++c) g(idx++) = dw(r, c);
        }
        if (mlp.use_bias) {
          for (int r = 0; r < grad.db[l].size(); ++r) g(idx++) = grad.db[l](r);
        }
      }
    };
    put_mlp(m.encoder, enc);
    for (int i = 0; i < a.size(); ++i) g(idx++) = a(i);
    for (int i = 0; i < b.size(); ++i) g(idx++) = b(i);
    put_mlp(m.decoder, dec);
    return g;
  }
};

// Forward and (optionally) reverse pass for one batch. The one-step term
// re-encodes every snapshot; the multi-step term rolls the latent state
// from the first snapshot of each window and backpropagates through the
// whole recursion.
LossParts batch_loss_grad(const KoopmanModel& model, const BatchTensors& bt,
                          double ms_weight, FlatGradBuilder* grad) {
  const LatentDynamics& dyn = model.dynamics;
  const int B = bt.count;
  const int steps = bt.steps;
  const int n_z = model.n_z();
  const double norm =
      1.0 / (static_cast<double>(B) * steps * (model.n_x + model.n_y));

  Mlp::Cache enc_cache;
  const Mat& E = model.encoder.forward(bt.chi, enc_cache);

  // One-step path.
  Mat Z1 = dyn.apply_a(E);
  Z1.noalias() += dyn.b * bt.u;
  Mlp::Cache dec_cache1;
  const Mat& D1 = model.decoder.forward(Z1, dec_cache1);
  const Mat R1 = D1 - bt.target;

  // Multi-step path: Zroll block k holds z_{k+1} for every window.
  Mat Zroll(n_z, B * steps);
  {
    Mat zk = E.leftCols(B);
    for (int k = 0; k < steps; ++k) {
      Mat znext = dyn.apply_a(zk);
      znext.noalias() += dyn.b * bt.u.middleCols(k * B, B);
      Zroll.middleCols(k * B, B) = znext;
      zk = std::move(znext);
    }
  }
  Mlp::Cache dec_cache2;
  const Mat& D2 = model.decoder.forward(Zroll, dec_cache2);
  const Mat R2 = D2 - bt.target;

  LossParts parts;
  parts.one_step = R1.squaredNorm() * norm;
  parts.multi_step = ms_weight * R2.squaredNorm() * norm;

  if (!grad) return parts;

  // Reverse pass.
  const Mat dD1 = (2.0 * norm) * R1;
  const Mat dZ1 = model.decoder.backward(dec_cache1, dD1, &grad->dec);
  grad->a += dyn.a_param_grad(dZ1, E);
  Mat bGrad = dZ1 * bt.u.transpose();
  Mat dE = dyn.apply_a_transpose(dZ1);

  const Mat dD2 = (2.0 * norm * ms_weight) * R2;
  const Mat dZR = model.decoder.backward(dec_cache2, dD2, &grad->dec);
  Mat lambda;  // adjoint of z_{k+1} while scanning k downwards
  for (int k = steps - 1; k >= 0; --k) {
    if (k == steps - 1) {
      lambda = dZR.middleCols(k * B, B);
    } else {
      lambda = dZR.middleCols(k * B, B) + dyn.apply_a_transpose(lambda);
    }
    const Mat zk = (k == 0) ? Mat(E.leftCols(B))
                            : Mat(Zroll.middleCols((k - 1) * B, B));
    grad->a += dyn.a_param_grad(lambda, zk);
    bGrad.noalias() += lambda * bt.u.middleCols(k * B, B).transpose();
  }
  dE.leftCols(B) += dyn.apply_a_transpose(lambda);

  for (int r = 0; r < bGrad.rows(); ++r) {
    for (int c = 0; c < bGrad.cols(); ++c) {
      grad->b(r * bGrad.cols() + c) += bGrad(r, c);
    }
  }
  model.encoder.backward(enc_cache, dE, &grad->enc);
  return parts;
}

std::vector<ScaledWindow> scale_all(const std::vector<TrainingWindow>& windows,
                                    const ScalingSpec& spec, bool embed) {
  std::vector<ScaledWindow> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(scale_window(w, spec, embed));
  return out;
}

std::vector<int> all_indices(std::size_t n) {
  std::vector<int> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = static_cast<int>(i);
  return idx;
}

}  // namespace

KoopmanModel init_model(const ModelSpec& spec, const DatasetMeta& meta,
                        const ScalingSpec& scaling, std::uint64_t seed) {
  if (spec.n_z < 1) throw ConfigError("model n_z must be >= 1");
  if (spec.structure == LatentStructure::block_diagonal && spec.n_z % 2 != 0) {
    throw ConfigError("block_diagonal structure needs even n_z");
  }
  KoopmanModel model;
  model.delays = meta.delays;
  model.n_x = meta.n_x;
  model.n_y = meta.n_y;
  model.n_u = meta.n_u;
  model.embed_inputs = meta.embed_inputs;
  model.scaling = scaling;
  model.decoder_kind = spec.decoder;

  Rng rng(seed, Stream::init);
  std::vector<int> enc_sizes{model.encoder_input_dim()};
  enc_sizes.insert(enc_sizes.end(), spec.encoder_hidden.begin(),
                   spec.encoder_hidden.end());
  enc_sizes.push_back(spec.n_z);
  model.encoder = Mlp::glorot(enc_sizes, rng);

  LatentDynamics dyn;
  dyn.structure = spec.structure;
  dyn.dt = meta.dt;
  const double lo = std::log(0.85), hi = std::log(0.999);
  if (spec.structure == LatentStructure::block_diagonal) {
    dyn.a_params.resize(spec.n_z);
    for (int j = 0; j + 1 < spec.n_z; j += 2) {
      const double r = std::exp(rng.uniform(lo, hi));
      const double theta = rng.uniform(0.0, 0.1);
      dyn.a_params(j) = r * std::cos(theta);
      dyn.a_params(j + 1) = r * std::sin(theta);
    }
  } else {
    Vec diag(spec.n_z);
    for (int i = 0; i < spec.n_z; ++i) diag(i) = std::exp(rng.uniform(lo, hi));
    if (spec.structure == LatentStructure::diagonal) {
      dyn.a_params = diag;
    } else {
      dyn.a_dense = Mat(diag.asDiagonal());
    }
  }
  dyn.b.resize(spec.n_z, meta.n_u);
  const double b_limit = std::sqrt(6.0 / (spec.n_z + meta.n_u));
  for (int r = 0; r < spec.n_z; ++r) {
    for (int c = 0; c < meta.n_u; ++c) dyn.b(r, c) = rng.uniform(-b_limit, b_limit);
  }
  model.dynamics = std::move(dyn);

  if (spec.decoder == DecoderKind::linear) {
    model.decoder =
        Mlp::glorot({spec.n_z, meta.n_x + meta.n_y}, rng, /*use_bias=*/false);
  } else {
    std::vector<int> dec_sizes{spec.n_z};
    dec_sizes.insert(dec_sizes.end(), spec.decoder_hidden.begin(),
                     spec.decoder_hidden.end());
    dec_sizes.push_back(meta.n_x + meta.n_y);
    model.decoder = Mlp::glorot(dec_sizes, rng);
  }
  model.validate_shapes();
  return model;
}

LossParts loss_parts(const KoopmanModel& model, const TrainingWindow& window,
                     double multi_step_weight) {
  const ScaledWindow sw =
      scale_window(window, model.scaling, model.embed_inputs);
  std::vector<ScaledWindow> one{sw};
  const BatchTensors bt = assemble(one, {0});
  const LossParts parts =
      batch_loss_grad(model, bt, multi_step_weight, nullptr);
  if (!std::isfinite(parts.total())) {
    throw NumericError("training divergence: non-finite loss");
  }
  return parts;
}

double loss(const KoopmanModel& model, const TrainingWindow& window) {
  return loss_parts(model, window).total();
}

Vec loss_gradient(const KoopmanModel& model,
                  const std::vector<const TrainingWindow*>& batch,
                  double multi_step_weight, LossParts* parts) {
  if (batch.empty()) throw InterfaceError("loss_gradient: empty batch");
  std::vector<ScaledWindow> scaled;
  scaled.reserve(batch.size());
  for (const TrainingWindow* w : batch) {
    scaled.push_back(scale_window(*w, model.scaling, model.embed_inputs));
  }
  const BatchTensors bt = assemble(scaled, all_indices(scaled.size()));
  FlatGradBuilder grad;
  grad.init(model);
  const LossParts p = batch_loss_grad(model, bt, multi_step_weight, &grad);
  if (parts) *parts = p;
  const Vec g = grad.flatten(model);
  if (!g.allFinite() || !std::isfinite(p.total())) {
    throw NumericError("training divergence: non-finite gradient");
  }
  return g;
}

void adam_step(AdamState& state, Vec& params, const Vec& grad,
               const TrainConfig& cfg) {
  if (state.m.size() != params.size()) {
    state.m = Vec::Zero(params.size());
    state.v = Vec::Zero(params.size());
    state.t = 0;
  }
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v.array().matrix() +
            (1.0 - cfg.beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  params.array() -= cfg.learning_rate * (state.m.array() / bc1) /
                    ((state.v.array() / bc2).sqrt() + cfg.epsilon);
}

namespace {

double evaluate_set(const KoopmanModel& model,
                    const std::vector<ScaledWindow>& scaled,
                    double ms_weight) {
  if (scaled.empty()) return 0.0;
  const BatchTensors bt = assemble(scaled, all_indices(scaled.size()));
  return batch_loss_grad(model, bt, ms_weight, nullptr).total();
}

}  // namespace

std::pair<KoopmanModel, TrainReport> train(const Dataset& dataset,
                                           const ModelSpec& spec,
                                           const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("training epochs must be >= 1");
  if (cfg.learning_rate <= 0) throw ConfigError("learning rate must be > 0");
  if (cfg.beta1 <= 0 || cfg.beta1 >= 1 || cfg.beta2 <= 0 || cfg.beta2 >= 1) {
    throw ConfigError("adam betas must lie in (0,1)");
  }
  if (dataset.train.empty()) throw NumericError("empty dataset: no windows");

  const auto t_start = std::chrono::steady_clock::now();
  KoopmanModel model =
      init_model(spec, dataset.meta, dataset.scaling, cfg.seed);
  const double ms_weight = cfg.multi_step_weight;

  const std::vector<ScaledWindow> train_scaled =
      scale_all(dataset.train, dataset.scaling, model.embed_inputs);
  const std::vector<ScaledWindow> val_scaled =
      scale_all(dataset.validation, dataset.scaling, model.embed_inputs);

  Vec params = model.get_params();
  Vec best_params = params;
  AdamState adam;
  Rng batch_rng(cfg.seed, Stream::batches);

  TrainReport report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  report.best_epoch = 0;
  double last_val = std::numeric_limits<double>::quiet_NaN();

  const int n_train = static_cast<int>(train_scaled.size());
  FlatGradBuilder grad;
  for (int epoch = 1; epoch <= cfg.epochs && !report.diverged; ++epoch) {
    TrainConfig step_cfg = cfg;
    if (cfg.cosine_decay) {
      step_cfg.learning_rate =
          cfg.learning_rate * 0.5 *
          (1.0 + std::cos(M_PI * (epoch - 1) / std::max(1, cfg.epochs)));
    }
    const auto batches = make_batches(n_train, cfg.batch_size, batch_rng);
    double epoch_loss = 0.0;
    for (const auto& batch : batches) {
      model.set_params(params);
      const BatchTensors bt = assemble(train_scaled, batch);
      grad.init(model);
      const LossParts parts = batch_loss_grad(model, bt, ms_weight, &grad);
      Vec g = grad.flatten(model);
      if (!std::isfinite(parts.total()) || !g.allFinite()) {
        report.diverged = true;
        break;
      }
      epoch_loss += parts.total() * static_cast<double>(batch.size());
      if (cfg.clip_norm > 0.0) {
        const double gn = g.norm();
        if (gn > cfg.clip_norm) g *= cfg.clip_norm / gn;
      }
      adam_step(adam, params, g, step_cfg);
    }
    if (report.diverged) {
      report.train_loss.push_back(std::numeric_limits<double>::quiet_NaN());
      report.val_loss.push_back(last_val);
      break;
    }
    report.train_loss.push_back(epoch_loss / n_train);

    if (epoch % cfg.validation_every == 0 || epoch == cfg.epochs) {
      model.set_params(params);
      last_val = evaluate_set(model, val_scaled, ms_weight);
      if (std::isfinite(last_val) && last_val < report.best_val_loss) {
        report.best_val_loss = last_val;
        report.best_epoch = epoch;
        best_params = params;
      }
    }
    report.val_loss.push_back(last_val);
  }

  if (!std::isfinite(report.best_val_loss)) {
    // No validation pass succeeded; fall back to the final parameters.
    best_params = params;
  }
  model.set_params(best_params);
  model.provenance.seed = cfg.seed;
  model.provenance.epochs = cfg.epochs;
  model.provenance.best_epoch = report.best_epoch;
  model.provenance.best_val_loss = report.best_val_loss;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(model), std::move(report)};
}

std::pair<KoopmanModel, TrainReport> train_linear_variant(
    const Dataset& dataset, ModelSpec spec, const TrainConfig& cfg) {
  spec.decoder = DecoderKind::linear;
  return train(dataset, spec, cfg);
}

}  // namespace koop
