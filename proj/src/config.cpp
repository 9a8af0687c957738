#include "koop/config.hpp"

#include <algorithm>
#include <sstream>

#include "koop/csv.hpp"
#include "koop/errors.hpp"

namespace koop {

const std::vector<ConfigKey>& RunConfig::registry() {
  static const std::vector<ConfigKey> keys = {
      {"paper_scale", "false", "", "-",
       "switch sampling/training defaults to the published protocol"},

      {"plant.name", "column", "", "-", "plant registry name: vdp|cstr|column"},
      {"plant.substeps", "20", "", "-", "RK4 substeps per sampling interval"},
      {"plant.bound_slack", "1e-6", "", "-",
       "allowed state-bound overshoot before a run counts as diverged"},
      {"plant.trays", "10", "", "-", "column: number of trays"},
      {"plant.feed_tray", "5", "", "-", "column: feed tray index (1..trays)"},
      {"plant.alpha", "1.6", "", "-", "column: relative volatility"},
      {"plant.z_feed", "0.5", "", "molfrac", "column: feed composition"},
      {"plant.tray_holdup", "0.5", "", "mol", "column: tray holdup"},
      {"plant.drum_holdup", "5.0", "", "mol",
       "column: reboiler/condenser holdup"},
      {"plant.vapor_flow", "1.0", "", "mol/h", "column: fixed boilup rate"},
      {"plant.mu", "1.0", "", "-", "vdp: damping parameter"},
      {"plant.cstr_Da", "0.085", "", "-", "cstr: Damkoehler number"},
      {"plant.cstr_B", "8.0", "", "-", "cstr: adiabatic temperature rise"},
      {"plant.cstr_gamma", "20.0", "", "-", "cstr: activation energy"},
      {"plant.cstr_beta", "3.0", "", "-", "cstr: cooling coefficient"},

      {"sampling.seed", "1", "", "-", "seed for excitation/split/init streams"},
      {"sampling.dt_minutes", "2.0", "", "min", "sampling interval"},
      {"sampling.n_steps", "60", "400", "-", "number of excitation steps"},
      {"sampling.step_hours", "2.0", "3.0", "h", "duration of each step"},
      {"sampling.delays", "20", "", "-", "delay count N"},
      {"sampling.window", "60", "", "-", "snapshots s per training window"},
      {"sampling.stride", "10", "", "-", "window start spacing in samples"},
      {"sampling.train_fraction", "0.8", "", "-", "train split fraction"},
      {"sampling.embed_inputs", "false", "", "-",
       "append past inputs to the delay vector"},
      {"sampling.steady_windows", "true", "", "-",
       "add one steady-state window per excitation level"},
      {"sampling.pin_degenerate", "false", "", "-",
       "widen constant channels instead of failing"},
      {"sampling.u1_min", "0.7", "", "-",
       "excitation low, input 1 (column: reflux ratio)"},
      {"sampling.u1_max", "0.9", "", "-", "excitation high, input 1"},
      {"sampling.u2_min", "0.8", "", "mol/h",
       "excitation low, input 2 (column: feed rate)"},
      {"sampling.u2_max", "1.2", "", "mol/h", "excitation high, input 2"},

      {"model.n_z", "10", "", "-", "latent dimension"},
      {"model.encoder_hidden", "50,20", "", "-", "encoder hidden layer sizes"},
      {"model.decoder_hidden", "20,50", "", "-", "decoder hidden layer sizes"},
      {"model.decoder", "wiener", "", "-", "decoder kind: wiener|linear"},
      {"model.structure", "diagonal", "", "-",
       "latent A structure: diagonal|block_diagonal|dense"},

      {"training.epochs", "3000", "10000", "-", "training epochs"},
      {"training.batch_size", "32", "", "-", "windows per mini-batch"},
      {"training.learning_rate", "0.001", "", "-", "Adam step size"},
      {"training.beta1", "0.9", "", "-", "Adam first-moment decay"},
      {"training.beta2", "0.999", "", "-", "Adam second-moment decay"},
      {"training.epsilon", "1e-8", "", "-", "Adam denominator offset"},
      {"training.validation_every", "1", "", "epochs",
       "validation evaluation interval"},
      {"training.clip_norm", "0.0", "", "-",
       "global gradient-norm clip (0 disables)"},
      {"training.multi_step_weight", "1.0", "", "-",
       "weight of the multi-step loss term"},
      {"training.cosine_decay", "false", "", "-",
       "cosine learning-rate schedule"},

      {"mpc.horizon", "30", "", "steps", "control horizon"},
      {"mpc.tracked_output", "1", "", "-", "tracked output channel (1-based)"},
      {"mpc.tracking_weight", "1.0", "", "-", "stage cost weight"},
      {"mpc.move_weight", "0.0", "", "-", "input move regularization"},
      {"mpc.u1_min", "0.7", "", "-", "input 1 lower bound"},
      {"mpc.u1_max", "0.9", "", "-", "input 1 upper bound"},
      {"mpc.u2_min", "0.8", "", "mol/h", "input 2 lower bound"},
      {"mpc.u2_max", "1.2", "", "mol/h", "input 2 upper bound"},
      {"mpc.impurity_min", "nan", "", "molfrac",
       "column: lower bound on 1 - x_condenser (nan = off)"},
      {"mpc.impurity_max", "nan", "", "molfrac",
       "column: upper bound on 1 - x_condenser (nan = off)"},
      {"mpc.output_bounds", "", "", "-",
       "extra output boxes, 'ch:lo:hi;...' (1-based, raw units)"},
      {"mpc.state_bounds", "", "", "-",
       "extra state boxes, 'ch:lo:hi;...' (1-based, raw units)"},
      {"mpc.max_iterations", "300", "", "-", "inner iterations per stage"},
      {"mpc.tolerance", "1e-6", "", "-", "projected-gradient tolerance"},
      {"mpc.penalty_initial", "100.0", "", "-", "first soft-bound weight"},
      {"mpc.penalty_growth", "10.0", "", "-", "penalty growth factor"},
      {"mpc.penalty_max", "1e6", "", "-", "penalty weight ceiling"},
      {"mpc.violation_tolerance", "1e-6", "", "-",
       "accepted scaled violation"},
      {"mpc.warm_start", "true", "", "-", "shift-initialize from last solve"},

      {"scenario.controller", "koopman_nmpc", "", "-",
       "koopman_nmpc|koopman_lmpc|ideal_nmpc"},
      {"scenario.initial_inputs", "0.8,1.0", "", "-",
       "inputs at which the plant starts in steady state"},
      {"scenario.duration_hours", "4.0", "", "h", "closed-loop duration"},
      {"scenario.setpoints", "0:0.2;0.5:0.275;2.5:0.125;3.5:0.2", "", "-",
       "tracked-output schedule 't:value;...'"},
      {"scenario.eval_inputs", "0:0.8,1.0;0.7:0.8,1.2;2.2:0.9,1.2", "", "-",
       "open-loop test input schedule 't:u1,u2;...'"},
      {"scenario.eval_duration_hours", "3.7", "", "h",
       "open-loop test duration"},
      {"scenario.plant_perturbation", "0.0", "", "-",
       "relative perturbation of the controlled plant's parameters"},

      {"io.out_dir", "runs", "", "-", "artifact output directory"},
  };
  return keys;
}

namespace {

const ConfigKey* find_key(const std::string& key) {
  for (const auto& k : RunConfig::registry()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

std::string RunConfig::describe_keys() {
  std::ostringstream out;
  std::string section;
  for (const auto& k : registry()) {
    const auto dot = k.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.key.substr(0, dot);
    if (sec != section) {
      section = sec;
      out << "\n[" << section << "]\n";
    }
    out << "  " << k.key << " = " << k.default_value;
    if (!k.paper_value.empty()) out << " (paper_scale: " << k.paper_value << ")";
    out << "  [" << k.unit << "] " << k.doc << "\n";
  }
  return out.str();
}

RunConfig RunConfig::defaults() { return RunConfig(); }

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": malformed section header");
      }
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string name = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const std::string key = section.empty() ? name : section + "." + name;
    cfg.set(key, value);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  return from_text(read_text_file(path));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown config key: " + key);
  values_[key] = value;
}

bool RunConfig::is_set(const std::string& key) const {
  return values_.count(key) > 0;
}

bool RunConfig::paper_scale() const {
  auto it = values_.find("paper_scale");
  if (it == values_.end()) return false;
  return it->second == "true" || it->second == "1";
}

std::string RunConfig::resolve(const std::string& key) const {
  auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const ConfigKey* def = find_key(key);
  if (!def) throw ConfigError("unknown config key: " + key);
  if (paper_scale() && !def->paper_value.empty()) return def->paper_value;
  return def->default_value;
}

std::string RunConfig::get_string(const std::string& key) const {
  return resolve(key);
}

double RunConfig::get_double(const std::string& key) const {
  const std::string v = resolve(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad number '" + v + "'");
  }
}

int RunConfig::get_int(const std::string& key) const {
  const std::string v = resolve(key);
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad integer '" + v + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = resolve(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": bad boolean '" + v + "'");
}

std::uint64_t RunConfig::get_seed(const std::string& key) const {
  const std::string v = resolve(key);
  try {
    std::size_t used = 0;
    const std::uint64_t out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": bad seed '" + v + "'");
  }
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  const std::string v = resolve(key);
  std::vector<int> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(trim(item)));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": bad list entry '" + item + "'");
    }
  }
  return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
  const std::string v = resolve(key);
  std::vector<double> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(trim(item)));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + ": bad list entry '" + item + "'");
    }
  }
  return out;
}

std::string RunConfig::resolved_text() const {
  std::ostringstream out;
  std::string section;
  for (const auto& k : registry()) {
    const auto dot = k.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? k.key : k.key.substr(dot + 1);
    if (sec != section) {
      section = sec;
      out << "[" << section << "]\n";
    }
    out << name << " = " << resolve(k.key) << "\n";
  }
  return out.str();
}

Schedule parse_schedule(const std::string& text, int expected_values) {
  Schedule sched;
  std::stringstream ss(text);
  std::string entry;
  while (std::getline(ss, entry, ';')) {
    entry = trim(entry);
    if (entry.empty()) continue;
    const auto colon = entry.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("schedule entry '" + entry + "': expected t:value");
    }
    try {
      sched.times.push_back(std::stod(trim(entry.substr(0, colon))));
    } catch (const std::exception&) {
      throw ConfigError("schedule entry '" + entry + "': bad time");
    }
    std::vector<double> vals;
    std::stringstream vs(entry.substr(colon + 1));
    std::string cell;
    while (std::getline(vs, cell, ',')) {
      try {
        vals.push_back(std::stod(trim(cell)));
      } catch (const std::exception&) {
        throw ConfigError("schedule entry '" + entry + "': bad value");
      }
    }
    if (static_cast<int>(vals.size()) != expected_values) {
      throw ConfigError("schedule entry '" + entry + "': expected " +
                        std::to_string(expected_values) + " value(s)");
    }
    sched.values.push_back(std::move(vals));
  }
  if (sched.times.empty()) throw ConfigError("empty schedule");
  if (!std::is_sorted(sched.times.begin(), sched.times.end())) {
    throw ConfigError("schedule times must ascend");
  }
  return sched;
}

}  // namespace koop
