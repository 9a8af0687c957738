#include "koop/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>

#include "koop/csv.hpp"
#include "koop/errors.hpp"
#include "koop/serialize.hpp"

namespace koop {

using nlohmann::json;

Vec TrainingWindow::input(int k) const {
  if (k < 0 || k >= length() - 1) throw InterfaceError("window input index");
  return full_inputs.row(delays + k).transpose();
}

Vec TrainingWindow::target_x(int k) const {
  if (k < 0 || k >= length()) throw InterfaceError("window state index");
  return full_states.row(delays + k).transpose();
}

Vec TrainingWindow::target_y(int k) const {
  if (k < 0 || k >= length()) throw InterfaceError("window output index");
  return full_outputs.row(delays + k).transpose();
}

DelayWindow TrainingWindow::chi(int k) const {
  if (k < 0 || k >= length()) throw InterfaceError("window chi index");
  DelayWindow w;
  w.delays = delays;
  w.values.resize((delays + 1) * n_y());
  for (int j = 0; j <= delays; ++j) {
    w.values.segment(j * n_y(), n_y()) =
        full_outputs.row(delays + k - j).transpose();
  }
  return w;
}

Vec TrainingWindow::input_history(int k) const {
  if (k < 0 || k >= length()) throw InterfaceError("window history index");
  Vec h(delays * n_u());
  for (int j = 1; j <= delays; ++j) {
    h.segment((j - 1) * n_u(), n_u()) =
        full_inputs.row(delays + k - j).transpose();
  }
  return h;
}

double ScalingSpec::fwd(double v, const ChannelScale& c) {
  const double t = c.log ? std::log(v) : v;
  return (t - c.min) / (c.max - c.min);
}

double ScalingSpec::inv(double v, const ChannelScale& c) {
  const double t = c.min + v * (c.max - c.min);
  return c.log ? std::exp(t) : t;
}

double ScalingSpec::fwd_slope(double v, const ChannelScale& c) {
  const double base = 1.0 / (c.max - c.min);
  return c.log ? base / v : base;
}

double ScalingSpec::inv_slope(double v, const ChannelScale& c) {
  const double base = c.max - c.min;
  return c.log ? base * std::exp(c.min + v * base) : base;
}

Vec ScalingSpec::scale(const Vec& v, const std::vector<ChannelScale>& ch) const {
  if (static_cast<std::size_t>(v.size()) != ch.size()) {
    throw InterfaceError("scaling: channel count mismatch");
  }
  Vec out(v.size());
  for (int i = 0; i < v.size(); ++i) out(i) = fwd(v(i), ch[i]);
  return out;
}

Vec ScalingSpec::unscale(const Vec& v, const std::vector<ChannelScale>& ch) const {
  if (static_cast<std::size_t>(v.size()) != ch.size()) {
    throw InterfaceError("scaling: channel count mismatch");
  }
  Vec out(v.size());
  for (int i = 0; i < v.size(); ++i) out(i) = inv(v(i), ch[i]);
  return out;
}

ScalingSpec ScalingSpec::identity(int n_u, int n_x, int n_y) {
  ScalingSpec s;
  s.inputs.assign(n_u, ChannelScale{});
  s.states.assign(n_x, ChannelScale{});
  s.outputs.assign(n_y, ChannelScale{});
  return s;
}

InputProfile random_step_sequence(const Mat& bounds, int n_steps,
                                  double step_duration, std::uint64_t seed,
                                  double t0) {
  if (n_steps < 1) throw InterfaceError("random_step_sequence: n_steps >= 1");
  const int n_u = static_cast<int>(bounds.rows());
  for (int i = 0; i < n_u; ++i) {
    if (bounds(i, 0) > bounds(i, 1)) {
      throw InterfaceError("random_step_sequence: lo > hi");
    }
  }
  Rng rng(seed, Stream::excitation);
  InputProfile profile;
  profile.breakpoints.resize(n_steps);
  profile.levels.resize(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    profile.breakpoints[k] = t0 + k * step_duration;
    Vec level(n_u);
    for (int i = 0; i < n_u; ++i) level(i) = rng.uniform(bounds(i, 0), bounds(i, 1));
    profile.levels[k] = level;
  }
  return profile;
}

std::vector<DelayWindow> build_delay_windows(const Mat& outputs, int N) {
  const int rows = static_cast<int>(outputs.rows());
  const int n_y = static_cast<int>(outputs.cols());
  if (rows < N + 1) {
    throw NumericError("insufficient history: need at least N+1 samples");
  }
  std::vector<DelayWindow> windows;
  windows.reserve(rows - N);
  for (int k = N; k < rows; ++k) {
    DelayWindow w;
    w.delays = N;
    w.values.resize((N + 1) * n_y);
    for (int j = 0; j <= N; ++j) {
      w.values.segment(j * n_y, n_y) = outputs.row(k - j).transpose();
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<TrainingWindow> window_dataset(const Trajectory& record, int s,
                                           int stride, int N) {
  if (s < 2) throw InterfaceError("window_dataset: s >= 2");
  if (stride < 1) throw InterfaceError("window_dataset: stride >= 1");
  const int total = record.samples();
  if (total < N + s) {
    throw NumericError("insufficient history: record shorter than N + s");
  }
  std::vector<TrainingWindow> windows;
  for (int start = N; start + s <= total; start += stride) {
    TrainingWindow w;
    w.delays = N;
    w.dt = record.dt;
    w.t0 = record.time(start);
    w.full_inputs = record.inputs.middleRows(start - N, N + s);
    w.full_states = record.states.middleRows(start - N, N + s);
    w.full_outputs = record.outputs.middleRows(start - N, N + s);
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<TrainingWindow> augment_steady_windows(const PlantModel& plant,
                                                   const std::vector<Vec>& levels,
                                                   int s, int N, double dt) {
  std::vector<TrainingWindow> windows;
  windows.reserve(levels.size());
  Vec guess = Vec::Constant(plant.n_x, 0.5);
  if (plant.name == "vdp" || plant.name == "cstr") guess.setZero();
  for (const Vec& u : levels) {
    const Vec x_ss = steady_state(plant, u, guess);
    guess = x_ss;  // warm start the next level
    const Vec y_ss = plant.outputs(x_ss, u);
    TrainingWindow w;
    w.delays = N;
    w.dt = dt;
    w.t0 = 0.0;
    w.is_steady = true;
    w.full_inputs = u.transpose().replicate(N + s, 1);
    w.full_states = x_ss.transpose().replicate(N + s, 1);
    w.full_outputs = y_ss.transpose().replicate(N + s, 1);
    windows.push_back(std::move(w));
  }
  return windows;
}

namespace {

std::vector<ChannelScale> fit_channels(
    const std::vector<const Mat*>& blocks, const std::vector<bool>& log_flags,
    const char* group, bool pin_degenerate) {
  const int n = static_cast<int>(log_flags.size());
  std::vector<ChannelScale> channels(n);
  for (int c = 0; c < n; ++c) {
    ChannelScale ch;
    ch.log = log_flags[c];
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Mat* block : blocks) {
      for (Eigen::Index r = 0; r < block->rows(); ++r) {
        double v = (*block)(r, c);
        if (ch.log) {
          if (v <= 0.0) {
            std::ostringstream msg;
            msg << "log channel " << group << "[" << c
                << "] contains non-positive value " << v;
            throw NumericError(msg.str());
          }
          v = std::log(v);
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (hi <= lo) {
      if (!pin_degenerate) {
        std::ostringstream msg;
        msg << "degenerate channel " << group << "[" << c
            << "]: constant value " << lo;
        throw NumericError(msg.str());
      }
      lo -= 0.5;
      hi += 0.5;
    }
    ch.min = lo;
    ch.max = hi;
    channels[c] = ch;
  }
  return channels;
}

}  // namespace

ScalingSpec fit_scaling(const std::vector<TrainingWindow>& windows,
                        const std::vector<bool>& log_inputs,
                        const std::vector<bool>& log_states,
                        const std::vector<bool>& log_outputs,
                        bool pin_degenerate) {
  if (windows.empty()) throw NumericError("empty dataset: nothing to scale");
  std::vector<const Mat*> in_blocks, st_blocks, out_blocks;
  for (const auto& w : windows) {
    in_blocks.push_back(&w.full_inputs);
    st_blocks.push_back(&w.full_states);
    out_blocks.push_back(&w.full_outputs);
  }
  ScalingSpec spec;
  spec.inputs = fit_channels(in_blocks, log_inputs, "input", pin_degenerate);
  spec.states = fit_channels(st_blocks, log_states, "state", pin_degenerate);
  spec.outputs = fit_channels(out_blocks, log_outputs, "output", pin_degenerate);
  return spec;
}

Dataset split_and_batch(std::vector<TrainingWindow> windows,
                        double train_fraction, int batch_size,
                        std::uint64_t seed) {
  if (windows.empty()) throw NumericError("empty dataset: no windows to split");
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw InterfaceError("train_fraction must lie in (0,1)");
  }
  if (batch_size < 1) throw InterfaceError("batch_size >= 1");
  Rng rng(seed, Stream::split);
  std::vector<int> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  const int n_train =
      static_cast<int>(std::floor(train_fraction * windows.size()));
  Dataset ds;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto& dst = (static_cast<int>(i) < n_train) ? ds.train : ds.validation;
    dst.push_back(std::move(windows[order[i]]));
  }
  ds.meta.seed = seed;
  ds.meta.train_fraction = train_fraction;
  ds.meta.batch_size = batch_size;
  if (!ds.train.empty()) {
    const auto& w = ds.train.front();
    ds.meta.delays = w.delays;
    ds.meta.window = w.length();
    ds.meta.dt = w.dt;
    ds.meta.n_u = w.n_u();
    ds.meta.n_x = w.n_x();
    ds.meta.n_y = w.n_y();
  }
  return ds;
}

std::vector<std::vector<int>> make_batches(int count, int batch_size,
                                           Rng& rng) {
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<int>> batches;
  for (int start = 0; start < count; start += batch_size) {
    const int end = std::min(count, start + batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + end);
  }
  return batches;
}

namespace {

json scale_to_json(const std::vector<ChannelScale>& ch) {
  json arr = json::array();
  for (const auto& c : ch) {
    arr.push_back({{"log", c.log}, {"min", c.min}, {"max", c.max}});
  }
  return arr;
}

std::vector<ChannelScale> scale_from_json(const json& arr) {
  std::vector<ChannelScale> out;
  for (const auto& j : arr) {
    ChannelScale c;
    c.log = j.at("log").get<bool>();
    c.min = j.at("min").get<double>();
    c.max = j.at("max").get<double>();
    out.push_back(c);
  }
  return out;
}

void save_window_csv(const std::string& path, const TrainingWindow& w) {
  Trajectory traj;
  traj.dt = w.dt;
  traj.t0 = w.t0 - w.delays * w.dt;
  traj.inputs = w.full_inputs;
  traj.states = w.full_states;
  traj.outputs = w.full_outputs;
  write_trajectory_csv(path, traj);
}

TrainingWindow load_window_csv(const std::string& path, const DatasetMeta& meta,
                               bool is_steady) {
  const Trajectory traj =
      read_trajectory_csv(path, meta.n_u, meta.n_x, meta.n_y);
  if (traj.samples() != meta.delays + meta.window) {
    throw ConfigError("dataset window has wrong sample count: " + path);
  }
  TrainingWindow w;
  w.delays = meta.delays;
  w.dt = meta.dt;
  w.t0 = traj.t0 + meta.delays * traj.dt;
  w.full_inputs = traj.inputs;
  w.full_states = traj.states;
  w.full_outputs = traj.outputs;
  w.is_steady = is_steady;
  return w;
}

std::string window_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.csv", i);
  return buf;
}

}  // namespace

json scaling_to_json(const ScalingSpec& s) {
  return {{"inputs", scale_to_json(s.inputs)},
          {"states", scale_to_json(s.states)},
          {"outputs", scale_to_json(s.outputs)}};
}

ScalingSpec scaling_from_json(const json& j) {
  ScalingSpec s;
  s.inputs = scale_from_json(j.at("inputs"));
  s.states = scale_from_json(j.at("states"));
  s.outputs = scale_from_json(j.at("outputs"));
  return s;
}

void save_dataset(const std::string& dir, const Dataset& dataset) {
  ensure_directory(dir);
  ensure_directory(dir + "/train");
  ensure_directory(dir + "/val");
  json meta;
  meta["plant"] = dataset.meta.plant;
  meta["dt"] = dataset.meta.dt;
  meta["delays"] = dataset.meta.delays;
  meta["window"] = dataset.meta.window;
  meta["stride"] = dataset.meta.stride;
  meta["seed"] = dataset.meta.seed;
  meta["train_fraction"] = dataset.meta.train_fraction;
  meta["batch_size"] = dataset.meta.batch_size;
  meta["embed_inputs"] = dataset.meta.embed_inputs;
  meta["n_u"] = dataset.meta.n_u;
  meta["n_x"] = dataset.meta.n_x;
  meta["n_y"] = dataset.meta.n_y;
  meta["scaling"] = scaling_to_json(dataset.scaling);
  json train_files = json::array();
  for (std::size_t i = 0; i < dataset.train.size(); ++i) {
    const std::string name = window_name(static_cast<int>(i));
    save_window_csv(dir + "/train/" + name, dataset.train[i]);
    train_files.push_back(
        {{"file", "train/" + name}, {"steady", dataset.train[i].is_steady}});
  }
  json val_files = json::array();
  for (std::size_t i = 0; i < dataset.validation.size(); ++i) {
    const std::string name = window_name(static_cast<int>(i));
    save_window_csv(dir + "/val/" + name, dataset.validation[i]);
    val_files.push_back(
        {{"file", "val/" + name}, {"steady", dataset.validation[i].is_steady}});
  }
  meta["train"] = train_files;
  meta["val"] = val_files;
  write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
  json meta;
  try {
    meta = json::parse(read_text_file(dir + "/meta.json"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad dataset meta.json: ") + e.what());
  }
  Dataset ds;
  try {
    ds.meta.plant = meta.at("plant").get<std::string>();
    ds.meta.dt = meta.at("dt").get<double>();
    ds.meta.delays = meta.at("delays").get<int>();
    ds.meta.window = meta.at("window").get<int>();
    ds.meta.stride = meta.at("stride").get<int>();
    ds.meta.seed = meta.at("seed").get<std::uint64_t>();
    ds.meta.train_fraction = meta.at("train_fraction").get<double>();
    ds.meta.batch_size = meta.at("batch_size").get<int>();
    ds.meta.embed_inputs = meta.at("embed_inputs").get<bool>();
    ds.meta.n_u = meta.at("n_u").get<int>();
    ds.meta.n_x = meta.at("n_x").get<int>();
    ds.meta.n_y = meta.at("n_y").get<int>();
    ds.scaling = scaling_from_json(meta.at("scaling"));
    for (const auto& entry : meta.at("train")) {
      ds.train.push_back(load_window_csv(
          dir + "/" + entry.at("file").get<std::string>(), ds.meta,
          entry.at("steady").get<bool>()));
    }
    for (const auto& entry : meta.at("val")) {
      ds.validation.push_back(load_window_csv(
          dir + "/" + entry.at("file").get<std::string>(), ds.meta,
          entry.at("steady").get<bool>()));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad dataset meta.json: ") + e.what());
  }
  return ds;
}

}  // namespace koop
