#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "koop/model.hpp"
#include "koop/sampling.hpp"

namespace koop {

struct TrainConfig {
  int epochs = 3000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int validation_every = 1;
  double clip_norm = 0.0;  // 0 disables the global-norm clip
  double multi_step_weight = 1.0;
  bool cosine_decay = false;
};

struct TrainReport {
  std::vector<double> train_loss;  // one entry per epoch
  std::vector<double> val_loss;    // last evaluated value, repeated between
                                   // validation epochs
  int best_epoch = 0;
  double best_val_loss = 0.0;
  double wall_seconds = 0.0;
  bool diverged = false;
};

// Architecture request resolved against the dataset dimensions at train
// time.
struct ModelSpec {
  int n_z = 10;
  std::vector<int> encoder_hidden{50, 20};
  std::vector<int> decoder_hidden{20, 50};
  DecoderKind decoder = DecoderKind::wiener;
  LatentStructure structure = LatentStructure::diagonal;
};

struct LossParts {
  double one_step = 0.0;
  double multi_step = 0.0;
  double total() const { return one_step + multi_step; }
};

// Fresh model with Glorot-initialized nets and diagonal latent poles
// spread log-uniformly over (0.85, 0.999), drawn from the init stream of
// the given seed.
KoopmanModel init_model(const ModelSpec& spec, const DatasetMeta& meta,
                        const ScalingSpec& scaling, std::uint64_t seed);

// Two-term prediction loss over one window: a one-step term that
// re-encodes at every snapshot and a multi-step term that rolls the
// latent state out from the first snapshot. Window data is raw; scaling
// is applied internally.
LossParts loss_parts(const KoopmanModel& model, const TrainingWindow& window,
                     double multi_step_weight = 1.0);
double loss(const KoopmanModel& model, const TrainingWindow& window);

// Mean of per-window loss gradients over a batch, as one flat vector in
// the model's canonical parameter order. Exact reverse-mode.
Vec loss_gradient(const KoopmanModel& model,
                  const std::vector<const TrainingWindow*>& batch,
                  double multi_step_weight = 1.0,
                  LossParts* parts = nullptr);

struct AdamState {
  Vec m, v;
  long t = 0;
};

// Standard Adam update with bias correction.
void adam_step(AdamState& state, Vec& params, const Vec& grad,
               const TrainConfig& cfg);

// Epoch loop over shuffled mini-batches with periodic validation;
// returns the parameter snapshot with the smallest validation loss. A
// non-finite loss or gradient stops training early and returns the best
// snapshot with report.diverged set.
std::pair<KoopmanModel, TrainReport> train(const Dataset& dataset,
                                           const ModelSpec& spec,
                                           const TrainConfig& cfg);

// Same pipeline with the decoder replaced by a single bias-free linear
// map.
std::pair<KoopmanModel, TrainReport> train_linear_variant(
    const Dataset& dataset, ModelSpec spec, const TrainConfig& cfg);

}  // namespace koop
