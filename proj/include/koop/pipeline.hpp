#pragma once

#include <optional>
#include <string>

#include "koop/closedloop.hpp"
#include "koop/config.hpp"
#include "koop/training.hpp"

namespace koop {

// Stage drivers shared by the CLI and the acceptance suite. Every driver
// that receives a non-empty out_dir writes its artifacts there along with
// a frozen copy of the resolved configuration.

PlantModel plant_from_config(const RunConfig& cfg, bool controlled = false);
double sampling_dt(const RunConfig& cfg);  // hours

// Maps config-level inputs (column: reflux ratio, feed) to plant inputs
// (column: reflux flow, feed).
Vec map_config_inputs(const RunConfig& cfg, const PlantModel& plant,
                      const Vec& u_cfg);

Dataset pipeline_sample(const RunConfig& cfg, const std::string& out_dir);

struct TrainArtifacts {
  KoopmanModel model;
  TrainReport report;
};
TrainArtifacts pipeline_train(const RunConfig& cfg, const Dataset& dataset,
                              const std::string& out_dir,
                              std::optional<DecoderKind> decoder_override = {});

OpenLoopReport pipeline_eval(const RunConfig& cfg, const KoopmanModel& model,
                             const std::string& out_dir,
                             const std::string& tag);

ControlProblem problem_from_config(const RunConfig& cfg,
                                   const PlantModel& plant);
SolverConfig solver_from_config(const RunConfig& cfg);
Scenario scenario_from_config(const RunConfig& cfg, const PlantModel& plant);

ClosedLoopLog pipeline_control(const RunConfig& cfg, const KoopmanModel* model,
                               const std::string& out_dir);

BenchmarkTable pipeline_benchmark(const RunConfig& cfg,
                                  const KoopmanModel* wiener,
                                  const KoopmanModel* linear,
                                  const std::string& out_dir);

void write_train_artifacts(const RunConfig& cfg, const TrainArtifacts& art,
                           const std::string& out_dir);

}  // namespace koop
