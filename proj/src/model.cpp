#include "koop/model.hpp"

#include <cmath>
#include <complex>
#include <cstring>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "koop/csv.hpp"
#include "koop/errors.hpp"
#include "koop/serialize.hpp"

namespace koop {

using nlohmann::json;

int Mlp::parameter_count() const {
  int count = 0;
  for (int l = 0; l < layers(); ++l) {
    count += sizes[l + 1] * sizes[l];
    if (use_bias) count += sizes[l + 1];
  }
  return count;
}

Vec Mlp::eval(const Vec& x) const {
  Mat X = x;
  return eval(X).col(0);
}

Mat Mlp::eval(const Mat& X) const {
  Cache cache;
  return forward(X, cache);
}

const Mat& Mlp::forward(const Mat& X, Cache& cache) const {
  if (X.rows() != in_dim()) throw InterfaceError("mlp: input size mismatch");
  cache.act.resize(layers() + 1);
  cache.act[0] = X;
  for (int l = 0; l < layers(); ++l) {
    Mat z = weights[l] * cache.act[l];
    if (use_bias) z.colwise() += biases[l];
    if (l + 1 < layers()) {
      cache.act[l + 1] = z.array().tanh();
    } else {
      cache.act[l + 1] = std::move(z);
    }
  }
  return cache.act.back();
}

void Mlp::Grad::init_like(const Mlp& m) {
  dW.clear();
  db.clear();
  for (int l = 0; l < m.layers(); ++l) {
    dW.push_back(Mat::Zero(m.sizes[l + 1], m.sizes[l]));
    db.push_back(Vec::Zero(m.use_bias ? m.sizes[l + 1] : 0));
  }
}

void Mlp::Grad::add_scaled(const Grad& other, double factor) {
  for (std::size_t l = 0; l < dW.size(); ++l) {
    dW[l] += factor * other.dW[l];
    if (db[l].size()) db[l] += factor * other.db[l];
  }
}

Mat Mlp::backward(const Cache& cache, const Mat& dY, Grad* grad) const {
  Mat delta = dY;
  for (int l = layers() - 1; l >= 0; --l) {
    if (l + 1 < layers()) {
      delta.array() *= 1.0 - cache.act[l + 1].array().square();
    }
    if (grad) {
      grad->dW[l].noalias() += delta * cache.act[l].transpose();
      if (use_bias) grad->db[l] += delta.rowwise().sum();
    }
    delta = (weights[l].transpose() * delta).eval();
  }
  return delta;
}

Mlp Mlp::glorot(const std::vector<int>& sizes, Rng& rng, bool use_bias) {
  if (sizes.size() < 2) throw InterfaceError("mlp needs at least two sizes");
  Mlp m;
  m.sizes = sizes;
  m.use_bias = use_bias;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Mat w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-limit, limit);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(use_bias ? Vec::Zero(fan_out) : Vec());
  }
  return m;
}

Mlp Mlp::zeros(const std::vector<int>& sizes, bool use_bias) {
  Mlp m;
  m.sizes = sizes;
  m.use_bias = use_bias;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    m.weights.push_back(Mat::Zero(sizes[l + 1], sizes[l]));
    m.biases.push_back(use_bias ? Vec::Zero(sizes[l + 1]) : Vec());
  }
  return m;
}

std::string to_string(LatentStructure s) {
  switch (s) {
    case LatentStructure::diagonal: return "diagonal";
    case LatentStructure::block_diagonal: return "block_diagonal";
    case LatentStructure::dense: return "dense";
  }
  return "?";
}

LatentStructure latent_structure_from_string(const std::string& s) {
  if (s == "diagonal") return LatentStructure::diagonal;
  if (s == "block_diagonal") return LatentStructure::block_diagonal;
  if (s == "dense") return LatentStructure::dense;
  throw ConfigError("unknown latent structure: " + s);
}

int LatentDynamics::n_z() const {
  switch (structure) {
    case LatentStructure::diagonal:
    case LatentStructure::block_diagonal:
      return static_cast<int>(a_params.size());
    case LatentStructure::dense:
      return static_cast<int>(a_dense.rows());
  }
  return 0;
}

int LatentDynamics::a_count() const {
  return structure == LatentStructure::dense
             ? static_cast<int>(a_dense.size())
             : static_cast<int>(a_params.size());
}

Mat LatentDynamics::a_matrix() const {
  const int n = n_z();
  switch (structure) {
    case LatentStructure::diagonal:
      return Mat(a_params.asDiagonal());
    case LatentStructure::block_diagonal: {
      Mat a = Mat::Zero(n, n);
      for (int j = 0; j + 1 < n; j += 2) {
        a(j, j) = a_params(j);
        a(j, j + 1) = a_params(j + 1);
        a(j + 1, j) = -a_params(j + 1);
        a(j + 1, j + 1) = a_params(j);
      }
      return a;
    }
    case LatentStructure::dense:
      return a_dense;
  }
  return Mat();
}

Mat LatentDynamics::apply_a(const Mat& Z) const {
  switch (structure) {
    case LatentStructure::diagonal:
      return (Z.array().colwise() * a_params.array()).matrix();
    case LatentStructure::block_diagonal: {
      Mat out(Z.rows(), Z.cols());
      for (int j = 0; j + 1 < n_z(); j += 2) {
        out.row(j) = a_params(j) * Z.row(j) + a_params(j + 1) * Z.row(j + 1);
        out.row(j + 1) =
            -a_params(j + 1) * Z.row(j) + a_params(j) * Z.row(j + 1);
      }
      return out;
    }
    case LatentStructure::dense:
      return a_dense * Z;
  }
  return Mat();
}

Mat LatentDynamics::apply_a_transpose(const Mat& Z) const {
  switch (structure) {
    case LatentStructure::diagonal:
      return (Z.array().colwise() * a_params.array()).matrix();
    case LatentStructure::block_diagonal: {
      Mat out(Z.rows(), Z.cols());
      for (int j = 0; j + 1 < n_z(); j += 2) {
        out.row(j) = a_params(j) * Z.row(j) - a_params(j + 1) * Z.row(j + 1);
        out.row(j + 1) =
            a_params(j + 1) * Z.row(j) + a_params(j) * Z.row(j + 1);
      }
      return out;
    }
    case LatentStructure::dense:
      return a_dense.transpose() * Z;
  }
  return Mat();
}

Vec LatentDynamics::a_param_grad(const Mat& adj, const Mat& Z) const {
  switch (structure) {
    case LatentStructure::diagonal:
      return (adj.array() * Z.array()).rowwise().sum();
    case LatentStructure::block_diagonal: {
      Vec g = Vec::Zero(a_params.size());
      for (int j = 0; j + 1 < n_z(); j += 2) {
        g(j) = (adj.row(j).array() * Z.row(j).array()).sum() +
               (adj.row(j + 1).array() * Z.row(j + 1).array()).sum();
        g(j + 1) = (adj.row(j).array() * Z.row(j + 1).array()).sum() -
                   (adj.row(j + 1).array() * Z.row(j).array()).sum();
      }
      return g;
    }
    case LatentStructure::dense: {
      const Mat dA = adj * Z.transpose();
      Vec g(dA.size());
      int idx = 0;
      for (int r = 0; r < dA.rows(); ++r) {
        for (int c = 0; c < dA.cols(); ++c) g(idx++) = dA(r, c);
      }
      return g;
    }
  }
  return Vec();
}

Vec latent_step(const LatentDynamics& dyn, const Vec& z, const Vec& u) {
  if (z.size() != dyn.n_z()) throw InterfaceError("latent_step: z size");
  if (u.size() != dyn.n_u()) throw InterfaceError("latent_step: u size");
  Mat Z = z;
  return dyn.apply_a(Z).col(0) + dyn.b * u;
}

namespace {

// ZOH gain ratio (a_d - 1)/a_c with its a_c -> 0 limit dt.
double zoh_ratio(double a_c, double dt) {
  if (std::abs(a_c) < 1e-12) return dt;
  return (std::exp(a_c * dt) - 1.0) / a_c;
}

}  // namespace

ContinuousDynamics discrete_to_continuous(const LatentDynamics& dyn) {
  if (dyn.dt <= 0.0) throw InterfaceError("dynamics without sampling interval");
  const int n = dyn.n_z();
  ContinuousDynamics cont;
  cont.a = Mat::Zero(n, n);
  cont.b = Mat::Zero(n, dyn.n_u());
  switch (dyn.structure) {
    case LatentStructure::diagonal: {
      for (int i = 0; i < n; ++i) {
        const double a_d = dyn.a_params(i);
        if (a_d <= 0.0) {
          std::ostringstream msg;
          msg << "non-representable dynamics: diagonal entry " << i << " = "
              << a_d << " has no real logarithm";
          throw NumericError(msg.str());
        }
        const double a_c = std::log(a_d) / dyn.dt;
        cont.a(i, i) = a_c;
        cont.b.row(i) = dyn.b.row(i) / zoh_ratio(a_c, dyn.dt);
      }
      break;
    }
    case LatentStructure::block_diagonal: {
      for (int j = 0; j + 1 < n; j += 2) {
        const std::complex<double> lambda(dyn.a_params(j), dyn.a_params(j + 1));
        if (std::abs(lambda) == 0.0 ||
            (lambda.imag() == 0.0 && lambda.real() < 0.0)) {
          throw NumericError(
              "non-representable dynamics: block eigenvalue on the negative "
              "real axis");
        }
        const std::complex<double> mu = std::log(lambda) / dyn.dt;
        cont.a(j, j) = mu.real();
        cont.a(j, j + 1) = mu.imag();
        cont.a(j + 1, j) = -mu.imag();
        cont.a(j + 1, j + 1) = mu.real();
        // Complex scalar ZOH ratio per block.
        std::complex<double> ratio;
        if (std::abs(mu) < 1e-12) {
          ratio = dyn.dt;
        } else {
          ratio = (lambda - 1.0) / mu;
        }
        for (int c = 0; c < dyn.n_u(); ++c) {
          const std::complex<double> bd(dyn.b(j, c), dyn.b(j + 1, c));
          const std::complex<double> bc = bd / ratio;
          cont.b(j, c) = bc.real();
          cont.b(j + 1, c) = bc.imag();
        }
      }
      break;
    }
    case LatentStructure::dense: {
      const Eigen::EigenSolver<Mat> eig(dyn.a_dense);
      for (int i = 0; i < n; ++i) {
        const auto ev = eig.eigenvalues()(i);
        if (std::abs(ev.imag()) < 1e-14 && ev.real() <= 0.0) {
          throw NumericError(
              "non-representable dynamics: eigenvalue on the negative real "
              "axis");
        }
      }
      cont.a = dyn.a_dense.log() / dyn.dt;
      const Mat shift = dyn.a_dense - Mat::Identity(n, n);
      Eigen::FullPivLU<Mat> lu(shift);
      if (!lu.isInvertible()) {
        throw NumericError(
            "non-representable dynamics: unit eigenvalue in dense matrix");
      }
      // B_d = A_c^{-1} (A_d - I) B_c  =>  B_c = (A_d - I)^{-1} A_c B_d.
      cont.b = lu.solve(cont.a * dyn.b);
      break;
    }
  }
  return cont;
}

LatentDynamics continuous_to_discrete(const ContinuousDynamics& cont,
                                      double dt, LatentStructure structure) {
  if (dt <= 0.0) throw InterfaceError("continuous_to_discrete: dt > 0");
  const int n = static_cast<int>(cont.a.rows());
  LatentDynamics dyn;
  dyn.structure = structure;
  dyn.dt = dt;
  dyn.b = Mat::Zero(n, cont.b.cols());
  switch (structure) {
    case LatentStructure::diagonal: {
      dyn.a_params.resize(n);
      for (int i = 0; i < n; ++i) {
        const double a_c = cont.a(i, i);
        dyn.a_params(i) = std::exp(a_c * dt);
        dyn.b.row(i) = cont.b.row(i) * zoh_ratio(a_c, dt);
      }
      break;
    }
    case LatentStructure::block_diagonal: {
      dyn.a_params.resize(n);
      for (int j = 0; j + 1 < n; j += 2) {
        const std::complex<double> mu(cont.a(j, j), cont.a(j, j + 1));
        const std::complex<double> lambda = std::exp(mu * dt);
        dyn.a_params(j) = lambda.real();
        dyn.a_params(j + 1) = lambda.imag();
        const std::complex<double> ratio =
            std::abs(mu) < 1e-12 ? std::complex<double>(dt, 0.0)
                                 : (lambda - 1.0) / mu;
        for (int c = 0; c < cont.b.cols(); ++c) {
          const std::complex<double> bc(cont.b(j, c), cont.b(j + 1, c));
          const std::complex<double> bd = bc * ratio;
          dyn.b(j, c) = bd.real();
          dyn.b(j + 1, c) = bd.imag();
        }
      }
      break;
    }
    case LatentStructure::dense: {
      dyn.a_dense = (cont.a * dt).exp();
      // Integral of the matrix exponential via the block-matrix trick,
      // which also covers singular A_c.
      Mat block = Mat::Zero(2 * n, 2 * n);
      block.topLeftCorner(n, n) = cont.a * dt;
      block.topRightCorner(n, n) = Mat::Identity(n, n) * dt;
      const Mat expblock = block.exp();
      dyn.b = expblock.topRightCorner(n, n) * cont.b;
      break;
    }
  }
  return dyn;
}

std::string to_string(StabilityReport::Verdict v) {
  switch (v) {
    case StabilityReport::Verdict::stable: return "stable";
    case StabilityReport::Verdict::marginal: return "marginal";
    case StabilityReport::Verdict::unstable: return "unstable";
  }
  return "?";
}

StabilityReport spectral_check(const LatentDynamics& dyn) {
  StabilityReport report;
  double radius = 0.0;
  switch (dyn.structure) {
    case LatentStructure::diagonal:
      radius = dyn.a_params.size() ? dyn.a_params.cwiseAbs().maxCoeff() : 0.0;
      break;
    case LatentStructure::block_diagonal:
      for (int j = 0; j + 1 < dyn.n_z(); j += 2) {
        radius = std::max(radius, std::hypot(dyn.a_params(j),
                                             dyn.a_params(j + 1)));
      }
      break;
    case LatentStructure::dense: {
      const Eigen::EigenSolver<Mat> eig(dyn.a_dense);
      for (int i = 0; i < dyn.n_z(); ++i) {
        radius = std::max(radius, std::abs(eig.eigenvalues()(i)));
      }
      break;
    }
  }
  report.spectral_radius = radius;
  constexpr double kEps = 1e-12;
  if (radius > 1.0 + kEps) {
    report.verdict = StabilityReport::Verdict::unstable;
  } else if (radius >= 1.0 - kEps) {
    report.verdict = StabilityReport::Verdict::marginal;
  } else {
    report.verdict = StabilityReport::Verdict::stable;
  }
  return report;
}

std::string to_string(DecoderKind k) {
  return k == DecoderKind::wiener ? "wiener" : "linear";
}

DecoderKind decoder_kind_from_string(const std::string& s) {
  if (s == "wiener") return DecoderKind::wiener;
  if (s == "linear") return DecoderKind::linear;
  throw ConfigError("unknown decoder kind: " + s);
}

void KoopmanModel::validate_shapes() const {
  if (encoder.in_dim() != encoder_input_dim()) {
    throw InterfaceError("encoder input dimension inconsistent with N, n_y");
  }
  if (encoder.out_dim() != n_z()) {
    throw InterfaceError("encoder output dimension != n_z");
  }
  if (decoder.in_dim() != n_z()) {
    throw InterfaceError("decoder input dimension != n_z");
  }
  if (decoder.out_dim() != n_x + n_y) {
    throw InterfaceError("decoder output dimension != n_x + n_y");
  }
  if (dynamics.n_u() != n_u) {
    throw InterfaceError("dynamics input dimension != n_u");
  }
  if (decoder_kind == DecoderKind::linear &&
      (decoder.layers() != 1 || decoder.use_bias)) {
    throw InterfaceError("linear decoder must be a single bias-free layer");
  }
  if (static_cast<int>(scaling.inputs.size()) != n_u ||
      static_cast<int>(scaling.states.size()) != n_x ||
      static_cast<int>(scaling.outputs.size()) != n_y) {
    throw InterfaceError("scaling spec channel counts inconsistent");
  }
}

namespace {

int mlp_param_count(const Mlp& m) { return m.parameter_count(); }

void flatten_mlp(const Mlp& m, Vec& out, int& idx) {
  for (int l = 0; l < m.layers(); ++l) {
    const Mat& w = m.weights[l];
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c) out(idx++) = w(r, c);
    }
    if (m.use_bias) {
      for (int r = 0; r < m.biases[l].size(); ++r) out(idx++) = m.biases[l](r);
    }
  }
}

void unflatten_mlp(Mlp& m, const Vec& in, int& idx) {
  for (int l = 0; l < m.layers(); ++l) {
    Mat& w = m.weights[l];
    for (int r = 0; r < w.rows(); ++r) {
      for (int c = 0; c < w.cols(); ++c) w(r, c) = in(idx++);
    }
    if (m.use_bias) {
      for (int r = 0; r < m.biases[l].size(); ++r) m.biases[l](r) = in(idx++);
    }
  }
}

}  // namespace

int KoopmanModel::num_params() const {
  return mlp_param_count(encoder) + dynamics.a_count() +
         static_cast<int>(dynamics.b.size()) + mlp_param_count(decoder);
}

Vec KoopmanModel::get_params() const {
  Vec p(num_params());
  int idx = 0;
  flatten_mlp(encoder, p, idx);
  if (dynamics.structure == LatentStructure::dense) {
    for (int r = 0; r < dynamics.a_dense.rows(); ++r) {
      for (int c = 0; c < dynamics.a_dense.cols(); ++c) {
        p(idx++) = dynamics.a_dense(r, c);
      }
    }
  } else {
    for (int i = 0; i < dynamics.a_params.size(); ++i) {
      p(idx++) = dynamics.a_params(i);
    }
  }
  for (int r = 0; r < dynamics.b.rows(); ++r) {
    for (int c = 0; c < dynamics.b.cols(); ++c) p(idx++) = dynamics.b(r, c);
  }
  flatten_mlp(decoder, p, idx);
  return p;
}

void KoopmanModel::set_params(const Vec& p) {
  if (p.size() != num_params()) throw InterfaceError("set_params: size");
  int idx = 0;
  unflatten_mlp(encoder, p, idx);
  if (dynamics.structure == LatentStructure::dense) {
    for (int r = 0; r < dynamics.a_dense.rows(); ++r) {
      for (int c = 0; c < dynamics.a_dense.cols(); ++c) {
        dynamics.a_dense(r, c) = p(idx++);
      }
    }
  } else {
    for (int i = 0; i < dynamics.a_params.size(); ++i) {
      dynamics.a_params(i) = p(idx++);
    }
  }
  for (int r = 0; r < dynamics.b.rows(); ++r) {
    for (int c = 0; c < dynamics.b.cols(); ++c) dynamics.b(r, c) = p(idx++);
  }
  unflatten_mlp(decoder, p, idx);
}

KoopmanModel::GroupRanges KoopmanModel::group_ranges() const {
  GroupRanges g{};
  g.encoder_begin = 0;
  g.encoder_end = mlp_param_count(encoder);
  g.a_begin = g.encoder_end;
  g.a_end = g.a_begin + dynamics.a_count();
  g.b_begin = g.a_end;
  g.b_end = g.b_begin + static_cast<int>(dynamics.b.size());
  g.decoder_begin = g.b_end;
  g.decoder_end = g.decoder_begin + mlp_param_count(decoder);
  return g;
}

Vec encode_vector(const KoopmanModel& model, const Vec& encoder_input) {
  if (encoder_input.size() != model.encoder_input_dim()) {
    throw InterfaceError("encode: input length mismatch");
  }
  return model.encoder.eval(encoder_input);
}

Vec encode(const KoopmanModel& model, const DelayWindow& chi) {
  if (model.embed_inputs) {
    throw InterfaceError("encode: model embeds inputs, history required");
  }
  return encode_vector(model, chi.values);
}

Vec encode(const KoopmanModel& model, const DelayWindow& chi,
           const Vec& input_history) {
  if (!model.embed_inputs) return encode_vector(model, chi.values);
  Vec full(chi.values.size() + input_history.size());
  full << chi.values, input_history;
  return encode_vector(model, full);
}

std::pair<Vec, Vec> decode(const KoopmanModel& model, const Vec& z) {
  if (z.size() != model.n_z()) throw InterfaceError("decode: z length");
  const Vec stacked = model.decoder.eval(z);
  return {stacked.head(model.n_x), stacked.tail(model.n_y)};
}

Rollout rollout(const KoopmanModel& model, const Vec& encoder_input,
                const Mat& inputs_scaled, bool raw_units) {
  const int K = static_cast<int>(inputs_scaled.rows());
  if (K < 1) throw InterfaceError("rollout: need at least one step");
  if (inputs_scaled.cols() != model.n_u) {
    throw InterfaceError("rollout: input channel mismatch");
  }
  Vec z = encode_vector(model, encoder_input);
  Rollout result;
  result.z.resize(K, model.n_z());
  result.states.resize(K, model.n_x);
  result.outputs.resize(K, model.n_y);
  for (int k = 0; k < K; ++k) {
    z = latent_step(model.dynamics, z, inputs_scaled.row(k).transpose());
    if (!z.allFinite()) {
      std::ostringstream msg;
      msg << "rollout diverged at step " << k + 1;
      throw NumericError(msg.str());
    }
    result.z.row(k) = z.transpose();
    auto [x_hat, y_hat] = decode(model, z);
    if (raw_units) {
      x_hat = model.scaling.unscale(x_hat, model.scaling.states);
      y_hat = model.scaling.unscale(y_hat, model.scaling.outputs);
    }
    result.states.row(k) = x_hat.transpose();
    result.outputs.row(k) = y_hat.transpose();
  }
  return result;
}

namespace {

const char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

std::string base64_encode(const double* data, std::size_t count) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  const std::size_t n = count * sizeof(double);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    unsigned int word = bytes[i] << 16;
    if (i + 1 < n) word |= bytes[i + 1] << 8;
    if (i + 2 < n) word |= bytes[i + 2];
    out.push_back(kB64Alphabet[(word >> 18) & 63]);
    out.push_back(kB64Alphabet[(word >> 12) & 63]);
    out.push_back(i + 1 < n ? kB64Alphabet[(word >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? kB64Alphabet[word & 63] : '=');
  }
  return out;
}

std::vector<double> base64_decode(const std::string& text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::vector<unsigned char> bytes;
  bytes.reserve(text.size() / 4 * 3);
  unsigned int word = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=') break;
    const int v = value_of(c);
    if (v < 0) throw ConfigError("checkpoint format error: bad base64");
    word = (word << 6) | static_cast<unsigned int>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back(static_cast<unsigned char>((word >> bits) & 0xFF));
    }
  }
  if (bytes.size() % sizeof(double) != 0) {
    throw ConfigError("checkpoint format error: tensor byte count");
  }
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::string mat_to_b64(const Mat& m) {
  // Row-major serialization.
  std::vector<double> tmp(m.size());
  int idx = 0;
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) tmp[idx++] = m(r, c);
  }
  return base64_encode(tmp.data(), tmp.size());
}

Mat mat_from_b64(const std::string& text, int rows, int cols) {
  const std::vector<double> data = base64_decode(text);
  if (static_cast<int>(data.size()) != rows * cols) {
    throw ConfigError("checkpoint format error: tensor size mismatch");
  }
  Mat m(rows, cols);
  int idx = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = data[idx++];
  }
  return m;
}

std::string vec_to_b64(const Vec& v) {
  return base64_encode(v.data(), static_cast<std::size_t>(v.size()));
}

Vec vec_from_b64(const std::string& text, int size) {
  const std::vector<double> data = base64_decode(text);
  if (static_cast<int>(data.size()) != size) {
    throw ConfigError("checkpoint format error: vector size mismatch");
  }
  Vec v(size);
  for (int i = 0; i < size; ++i) v(i) = data[i];
  return v;
}

json mlp_to_json(const Mlp& m) {
  json j;
  j["sizes"] = m.sizes;
  j["use_bias"] = m.use_bias;
  json ws = json::array();
  json bs = json::array();
  for (int l = 0; l < m.layers(); ++l) {
    ws.push_back(mat_to_b64(m.weights[l]));
    if (m.use_bias) bs.push_back(vec_to_b64(m.biases[l]));
  }
  j["weights"] = ws;
  if (m.use_bias) j["biases"] = bs;
  return j;
}

Mlp mlp_from_json(const json& j) {
  Mlp m;
  m.sizes = j.at("sizes").get<std::vector<int>>();
  if (m.sizes.size() < 2) throw ConfigError("checkpoint format error: sizes");
  m.use_bias = j.at("use_bias").get<bool>();
  const auto& ws = j.at("weights");
  if (ws.size() + 1 != m.sizes.size()) {
    throw ConfigError("checkpoint format error: layer count");
  }
  for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
    m.weights.push_back(mat_from_b64(ws[l].get<std::string>(),
                                     m.sizes[l + 1], m.sizes[l]));
    if (m.use_bias) {
      m.biases.push_back(
          vec_from_b64(j.at("biases")[l].get<std::string>(), m.sizes[l + 1]));
    } else {
      m.biases.emplace_back();
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const KoopmanModel& model, const std::string& path) {
  json j;
  j["schema"] = 1;
  json meta;
  meta["n_z"] = model.n_z();
  meta["delays"] = model.delays;
  meta["n_x"] = model.n_x;
  meta["n_y"] = model.n_y;
  meta["n_u"] = model.n_u;
  meta["dt"] = model.dynamics.dt;
  meta["structure"] = to_string(model.dynamics.structure);
  meta["decoder"] = to_string(model.decoder_kind);
  meta["embed_inputs"] = model.embed_inputs;
  meta["scaling"] = scaling_to_json(model.scaling);
  meta["provenance"] = {{"seed", model.provenance.seed},
                        {"epochs", model.provenance.epochs},
                        {"best_epoch", model.provenance.best_epoch},
                        {"best_val_loss", model.provenance.best_val_loss}};
  j["meta"] = meta;
  j["encoder"] = mlp_to_json(model.encoder);
  json dyn;
  if (model.dynamics.structure == LatentStructure::dense) {
    dyn["a"] = mat_to_b64(model.dynamics.a_dense);
  } else {
    dyn["a"] = vec_to_b64(model.dynamics.a_params);
  }
  dyn["b"] = mat_to_b64(model.dynamics.b);
  j["dynamics"] = dyn;
  j["decoder"] = mlp_to_json(model.decoder);
  write_text_file(path, j.dump(2) + "\n");
}

KoopmanModel load_checkpoint(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint format error: ") + e.what());
  }
  KoopmanModel model;
  try {
    if (j.at("schema").get<int>() != 1) {
      throw ConfigError("checkpoint format error: unsupported schema version");
    }
    const json& meta = j.at("meta");
    model.delays = meta.at("delays").get<int>();
    model.n_x = meta.at("n_x").get<int>();
    model.n_y = meta.at("n_y").get<int>();
    model.n_u = meta.at("n_u").get<int>();
    model.embed_inputs = meta.at("embed_inputs").get<bool>();
    model.decoder_kind =
        decoder_kind_from_string(meta.at("decoder").get<std::string>());
    model.scaling = scaling_from_json(meta.at("scaling"));
    const auto& prov = meta.at("provenance");
    model.provenance.seed = prov.at("seed").get<std::uint64_t>();
    model.provenance.epochs = prov.at("epochs").get<int>();
    model.provenance.best_epoch = prov.at("best_epoch").get<int>();
    model.provenance.best_val_loss = prov.at("best_val_loss").get<double>();

    const int n_z = meta.at("n_z").get<int>();
    model.encoder = mlp_from_json(j.at("encoder"));
    model.decoder = mlp_from_json(j.at("decoder"));
    LatentDynamics dyn;
    dyn.structure =
        latent_structure_from_string(meta.at("structure").get<std::string>());
    dyn.dt = meta.at("dt").get<double>();
    const json& dj = j.at("dynamics");
    if (dyn.structure == LatentStructure::dense) {
      dyn.a_dense = mat_from_b64(dj.at("a").get<std::string>(), n_z, n_z);
    } else {
      dyn.a_params = vec_from_b64(dj.at("a").get<std::string>(), n_z);
    }
    dyn.b = mat_from_b64(dj.at("b").get<std::string>(), n_z, model.n_u);
    model.dynamics = std::move(dyn);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("checkpoint format error: ") + e.what());
  }
  model.validate_shapes();
  return model;
}

KoopmanModel load_checkpoint(const std::string& path,
                             LatentStructure expected_structure,
                             DecoderKind expected_decoder) {
  KoopmanModel model = load_checkpoint(path);
  if (model.dynamics.structure != expected_structure) {
    throw ConfigError("structure mismatch: checkpoint holds " +
                      to_string(model.dynamics.structure) + ", requested " +
                      to_string(expected_structure));
  }
  if (model.decoder_kind != expected_decoder) {
    throw ConfigError("decoder mismatch: checkpoint holds " +
                      to_string(model.decoder_kind) + ", requested " +
                      to_string(expected_decoder));
  }
  return model;
}

}  // namespace koop
