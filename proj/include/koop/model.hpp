#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "koop/rng.hpp"
#include "koop/sampling.hpp"

namespace koop {

// Dense feedforward net, tanh on hidden layers, identity output. A net
// with no hidden layers is a plain (affine or linear) map.
struct Mlp {
  std::vector<int> sizes;       // [in, hidden..., out]
  std::vector<Mat> weights;     // weights[l]: sizes[l+1] x sizes[l]
  std::vector<Vec> biases;      // empty vectors when use_bias is false
  bool use_bias = true;

  int in_dim() const { return sizes.front(); }
  int out_dim() const { return sizes.back(); }
  int layers() const { return static_cast<int>(weights.size()); }
  int parameter_count() const;

  Vec eval(const Vec& x) const;
  Mat eval(const Mat& X) const;  // one column per sample

  struct Cache {
    std::vector<Mat> act;  // act[0] = X, act[l] = post-activation output
  };
  struct Grad {
    std::vector<Mat> dW;
    std::vector<Vec> db;
    void init_like(const Mlp& m);
    void add_scaled(const Grad& other, double factor);
  };
  const Mat& forward(const Mat& X, Cache& cache) const;
  // Backpropagates dY through the cached forward pass. Accumulates
  // parameter gradients into `grad` when non-null and returns dX.
  Mat backward(const Cache& cache, const Mat& dY, Grad* grad) const;

  static Mlp glorot(const std::vector<int>& sizes, Rng& rng,
                    bool use_bias = true);
  static Mlp zeros(const std::vector<int>& sizes, bool use_bias = true);
};

enum class LatentStructure { diagonal, block_diagonal, dense };

std::string to_string(LatentStructure s);
LatentStructure latent_structure_from_string(const std::string& s);

// Discrete-time linear latent dynamics z+ = A z + B u at a fixed sampling
// interval. A is stored as: n_z diagonal entries; n_z block parameters
// (re, im per 2x2 rotation-scaling block); or a dense n_z x n_z matrix.
struct LatentDynamics {
  LatentStructure structure = LatentStructure::diagonal;
  Vec a_params;  // diagonal / block storage
  Mat a_dense;
  Mat b;         // n_z x n_u
  double dt = 0.0;

  int n_z() const;
  int n_u() const { return static_cast<int>(b.cols()); }
  int a_count() const;
  Mat a_matrix() const;  // densified view of A

  Mat apply_a(const Mat& Z) const;
  Mat apply_a_transpose(const Mat& Z) const;
  // d(loss)/d(a_params or a_dense flat) given adjoints of A z for each
  // column and the matching z columns.
  Vec a_param_grad(const Mat& adj, const Mat& Z) const;
};

Vec latent_step(const LatentDynamics& dyn, const Vec& z, const Vec& u);

struct ContinuousDynamics {
  Mat a;
  Mat b;
};

// Exact zero-order-hold conversion between the discrete pair (A, B) and
// its continuous counterpart. Throws NumericError when the discrete A has
// eigenvalues on the closed negative real axis.
ContinuousDynamics discrete_to_continuous(const LatentDynamics& dyn);
LatentDynamics continuous_to_discrete(const ContinuousDynamics& cont,
                                      double dt, LatentStructure structure);

struct StabilityReport {
  double spectral_radius = 0.0;
  enum class Verdict { stable, marginal, unstable } verdict = Verdict::stable;
};

std::string to_string(StabilityReport::Verdict v);
StabilityReport spectral_check(const LatentDynamics& dyn);

enum class DecoderKind { wiener, linear };

std::string to_string(DecoderKind k);
DecoderKind decoder_kind_from_string(const std::string& s);

struct TrainingProvenance {
  std::uint64_t seed = 0;
  int epochs = 0;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

// The trainable artifact: delay-coordinate encoder, discrete linear
// latent dynamics and stacked (state, output) decoder, plus the scaling
// used to map raw measurements into model units. All internal evaluation
// happens in scaled units.
struct KoopmanModel {
  Mlp encoder;   // (N+1)*n_y (+ N*n_u when embed_inputs) -> n_z
  LatentDynamics dynamics;
  Mlp decoder;   // n_z -> n_x + n_y; linear variant has no hidden layers
                 // and no bias (a pure matrix C)
  DecoderKind decoder_kind = DecoderKind::wiener;
  ScalingSpec scaling;
  int delays = 0;  // N
  int n_x = 0, n_y = 0, n_u = 0;
  bool embed_inputs = false;
  TrainingProvenance provenance;

  int n_z() const { return dynamics.n_z(); }
  int encoder_input_dim() const {
    return (delays + 1) * n_y + (embed_inputs ? delays * n_u : 0);
  }
  void validate_shapes() const;

  // Flat parameter interface (encoder, A, B, decoder; row-major tensors).
  int num_params() const;
  Vec get_params() const;
  void set_params(const Vec& p);
  struct GroupRanges {
    int encoder_begin, encoder_end;
    int a_begin, a_end;
    int b_begin, b_end;
    int decoder_begin, decoder_end;
  };
  GroupRanges group_ranges() const;
};

// Encoder evaluation; inputs must already be in scaled units.
Vec encode(const KoopmanModel& model, const DelayWindow& chi);
Vec encode(const KoopmanModel& model, const DelayWindow& chi,
           const Vec& input_history);
Vec encode_vector(const KoopmanModel& model, const Vec& encoder_input);

// Splits the decoded stack into (state estimate, output estimate).
std::pair<Vec, Vec> decode(const KoopmanModel& model, const Vec& z);

struct Rollout {
  Mat z;       // K x n_z, rows are z_1 .. z_K
  Mat states;  // K x n_x
  Mat outputs; // K x n_y
};

// Rolls the model K steps from the given encoder input under the scaled
// input sequence (K x n_u). Results are scaled unless raw_units is set.
Rollout rollout(const KoopmanModel& model, const Vec& encoder_input,
                const Mat& inputs_scaled, bool raw_units = false);

// Checkpoint: one JSON document with a meta block and base64-encoded
// little-endian float64 tensors in row-major order.
void save_checkpoint(const KoopmanModel& model, const std::string& path);
KoopmanModel load_checkpoint(const std::string& path);
// Loader that additionally enforces an expected latent structure and
// decoder kind (mismatch raises ConfigError).
KoopmanModel load_checkpoint(const std::string& path,
                             LatentStructure expected_structure,
                             DecoderKind expected_decoder);

}  // namespace koop
