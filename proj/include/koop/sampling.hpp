#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "koop/dynamics.hpp"
#include "koop/rng.hpp"

namespace koop {

// Delay-coordinate vector: the current and the N previous output samples
// stacked newest first, [y(t0); y(t-1); ...; y(t-N)].
struct DelayWindow {
  Vec values;
  int delays = 0;

  int channels() const {
    return delays >= 0 ? static_cast<int>(values.size()) / (delays + 1) : 0;
  }
};

// One training trajectory of s consecutive snapshots plus the N samples of
// history needed to form delay coordinates at every window position. All
// values are stored raw; scaling is applied by the consumer.
struct TrainingWindow {
  int delays = 0;  // N
  double dt = 0.0;
  double t0 = 0.0;  // time of window sample 0
  Mat full_inputs;  // (N+s) x n_u, rows 0..N-1 are history
  Mat full_states;  // (N+s) x n_x
  Mat full_outputs; // (N+s) x n_y
  bool is_steady = false;

  int length() const { return static_cast<int>(full_states.rows()) - delays; }
  int n_u() const { return static_cast<int>(full_inputs.cols()); }
  int n_x() const { return static_cast<int>(full_states.cols()); }
  int n_y() const { return static_cast<int>(full_outputs.cols()); }

  Vec input(int k) const;       // u_k, 0 <= k < s-1
  Vec target_x(int k) const;    // x_k, 0 <= k < s
  Vec target_y(int k) const;    // y_k
  DelayWindow chi(int k) const; // delay coordinates at window sample k
  // The N inputs held before window sample k, newest first (u_{k-1} ...
  // u_{k-N}); used when the encoder embeds inputs.
  Vec input_history(int k) const;
};

struct ChannelScale {
  bool log = false;
  double min = 0.0;
  double max = 1.0;
};

// Per-channel min-max transform to [0, 1], with an optional natural-log
// pre-transform for strictly positive channels.
struct ScalingSpec {
  std::vector<ChannelScale> inputs;
  std::vector<ChannelScale> states;
  std::vector<ChannelScale> outputs;

  static double fwd(double v, const ChannelScale& c);
  static double inv(double v, const ChannelScale& c);
  // d(scaled)/d(raw) at the raw value v.
  static double fwd_slope(double v, const ChannelScale& c);
  // d(raw)/d(scaled) at the scaled value v.
  static double inv_slope(double v, const ChannelScale& c);

  Vec scale(const Vec& v, const std::vector<ChannelScale>& ch) const;
  Vec unscale(const Vec& v, const std::vector<ChannelScale>& ch) const;
  Vec scale_inputs(const Vec& v) const { return scale(v, inputs); }
  Vec scale_states(const Vec& v) const { return scale(v, states); }
  Vec scale_outputs(const Vec& v) const { return scale(v, outputs); }

  static ScalingSpec identity(int n_u, int n_x, int n_y);
};

struct DatasetMeta {
  std::string plant;
  double dt = 0.0;
  int delays = 0;  // N
  int window = 0;  // s
  int stride = 0;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  int batch_size = 32;
  bool embed_inputs = false;
  int n_u = 0, n_x = 0, n_y = 0;
};

struct Dataset {
  std::vector<TrainingWindow> train;
  std::vector<TrainingWindow> validation;
  ScalingSpec scaling;
  DatasetMeta meta;
};

// Random step excitation: n_steps intervals of equal duration, each level
// drawn i.i.d. uniform per input from [bounds(i,0), bounds(i,1)] using the
// excitation stream of the given seed.
InputProfile random_step_sequence(const Mat& bounds, int n_steps,
                                  double step_duration, std::uint64_t seed,
                                  double t0 = 0.0);

// All delay windows of a sampled output sequence (rows = samples). The
// first window sits at sample N; result size = rows - N.
std::vector<DelayWindow> build_delay_windows(const Mat& outputs, int N);

// Sliding windows of s snapshots starting every `stride` samples, each
// carrying N samples of in-record history. First window starts at sample N.
std::vector<TrainingWindow> window_dataset(const Trajectory& record, int s,
                                           int stride, int N);

// One constant window per input level, pinned at the steady state and
// flagged is_steady.
std::vector<TrainingWindow> augment_steady_windows(const PlantModel& plant,
                                                   const std::vector<Vec>& levels,
                                                   int s, int N, double dt);

// Channel min/max over all rows (history included) of the given windows,
// computed after the log pre-transform on flagged channels. Zero-range
// channels raise NumericError unless pin_degenerate is set, in which case
// the range is widened to +-0.5 around the constant value.
ScalingSpec fit_scaling(const std::vector<TrainingWindow>& windows,
                        const std::vector<bool>& log_inputs,
                        const std::vector<bool>& log_states,
                        const std::vector<bool>& log_outputs,
                        bool pin_degenerate = false);

// Seeded shuffle + split. floor(fraction * count) windows go to train.
Dataset split_and_batch(std::vector<TrainingWindow> windows,
                        double train_fraction, int batch_size,
                        std::uint64_t seed);

// Batch index lists for one epoch: windows shuffled, consecutive batches
// of batch_size, last partial batch kept.
std::vector<std::vector<int>> make_batches(int count, int batch_size,
                                           Rng& rng);

// Directory layout: meta.json plus train/NNNN.csv and val/NNNN.csv, each
// file holding the N history rows followed by the s window rows.
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

}  // namespace koop
