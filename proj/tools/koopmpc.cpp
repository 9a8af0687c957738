// koopmpc: data-driven reduced-order modeling and MPC for nonlinear
// plants. Subcommands cover the full pipeline: excitation sampling,
// model training, open-loop evaluation, closed-loop control and the
// controller CPU benchmark.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <iostream>
#include <optional>

#include "koop/errors.hpp"
#include "koop/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitThreshold = 4;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

koop::RunConfig resolve_config(const CommonArgs& args,
                               const char* default_out) {
  koop::RunConfig cfg = args.config_path.empty()
                            ? koop::RunConfig::defaults()
                            : koop::RunConfig::load(args.config_path);
  if (args.seed) cfg.set("sampling.seed", std::to_string(*args.seed));
  if (!args.out_dir.empty()) cfg.set("io.out_dir", args.out_dir);
  else if (!cfg.is_set("io.out_dir")) cfg.set("io.out_dir", default_out);
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "override sampling.seed");
}

int run_sample(const CommonArgs& args) {
  const koop::RunConfig cfg = resolve_config(args, "runs/dataset");
  const std::string out = cfg.get_string("io.out_dir");
  const koop::Dataset ds = koop::pipeline_sample(cfg, out);
  std::printf("dataset written to %s\n", out.c_str());
  std::printf("  train windows: %zu (steady: %zu)\n", ds.train.size(),
              static_cast<std::size_t>(std::count_if(
                  ds.train.begin(), ds.train.end(),
                  [](const auto& w) { return w.is_steady; })));
  std::printf("  validation windows: %zu\n", ds.validation.size());
  std::printf("  N=%d s=%d stride=%d dt=%g h\n", ds.meta.delays,
              ds.meta.window, ds.meta.stride, ds.meta.dt);
  for (std::size_t c = 0; c < ds.scaling.outputs.size(); ++c) {
    const auto& ch = ds.scaling.outputs[c];
    std::printf("  output %zu: %s range [%g, %g]\n", c + 1,
                ch.log ? "log" : "linear", ch.min, ch.max);
  }
  return kExitOk;
}

int run_train(const CommonArgs& args, const std::string& dataset_dir,
              const std::string& resume_path) {
  const koop::RunConfig cfg = resolve_config(args, "runs/train");
  const std::string out = cfg.get_string("io.out_dir");
  const koop::Dataset ds = koop::load_dataset(dataset_dir);
  if (!resume_path.empty()) {
    // Restore a checkpoint bit-exactly and re-emit it with its report;
    // useful for moving checkpoints between run directories.
    koop::TrainArtifacts art;
    art.model = koop::load_checkpoint(resume_path);
    art.report.best_epoch = art.model.provenance.best_epoch;
    art.report.best_val_loss = art.model.provenance.best_val_loss;
    koop::write_train_artifacts(cfg, art, out);
    std::printf("checkpoint restored to %s/best.ckpt\n", out.c_str());
    return kExitOk;
  }
  const koop::TrainArtifacts art = koop::pipeline_train(cfg, ds, out);
  std::printf("trained %s model for %zu epochs\n",
              koop::to_string(art.model.decoder_kind).c_str(),
              art.report.train_loss.size());
  std::printf("  best validation loss %.6e at epoch %d\n",
              art.report.best_val_loss, art.report.best_epoch);
  std::printf("  artifacts in %s\n", out.c_str());
  if (art.report.diverged) {
    std::fprintf(stderr, "training diverged; best snapshot kept\n");
    return kExitNumeric;
  }
  return kExitOk;
}

int run_eval(const CommonArgs& args, const std::string& ckpt_path,
             const std::string& compare_path, bool assert_thresholds) {
  const koop::RunConfig cfg = resolve_config(args, "runs/eval");
  const std::string out = cfg.get_string("io.out_dir");
  const koop::KoopmanModel model = koop::load_checkpoint(ckpt_path);
  const koop::OpenLoopReport report =
      koop::pipeline_eval(cfg, model, out, koop::to_string(model.decoder_kind));
  std::printf("open-loop test (%d predicted samples)\n",
              report.predicted_samples);
  for (int c = 0; c < report.rmse_y.size(); ++c) {
    std::printf("  y%d: rmse %.4e (%.2f%% of range), max %.4e\n", c + 1,
                report.rmse_y(c), 100.0 * report.rel_rmse_y(c),
                report.max_err_y(c));
  }
  if (!report.plateaus.empty()) {
    const auto& last = report.plateaus.back();
    std::printf("  final plateau offsets:");
    for (int c = 0; c < last.output_offset.size(); ++c) {
      std::printf(" %.4e", last.output_offset(c));
    }
    std::printf("\n");
  }
  if (!compare_path.empty()) {
    const koop::KoopmanModel other = koop::load_checkpoint(compare_path);
    koop::pipeline_eval(cfg, other, out, koop::to_string(other.decoder_kind));
    std::printf("  comparison report written for %s decoder\n",
                koop::to_string(other.decoder_kind).c_str());
  }
  if (report.diverged) {
    std::fprintf(stderr, "model prediction diverged\n");
    return kExitNumeric;
  }
  if (assert_thresholds) {
    bool ok = true;
    for (int c = 0; c < report.rel_rmse_y.size(); ++c) {
      if (!(report.rel_rmse_y(c) < 0.05)) ok = false;
    }
    if (!ok) {
      std::fprintf(stderr, "relative RMSE above 5%% threshold\n");
      return kExitThreshold;
    }
  }
  return kExitOk;
}

int run_control(const CommonArgs& args, const std::string& ckpt_path) {
  const koop::RunConfig cfg = resolve_config(args, "runs/control");
  const std::string out = cfg.get_string("io.out_dir");
  const koop::ControllerKind kind = koop::controller_kind_from_string(
      cfg.get_string("scenario.controller"));
  std::optional<koop::KoopmanModel> model;
  if (kind != koop::ControllerKind::ideal_nmpc) {
    if (ckpt_path.empty()) {
      throw koop::ConfigError("run-mpc: Koopman controllers need --checkpoint");
    }
    model = koop::load_checkpoint(ckpt_path);
  }
  const koop::ClosedLoopLog log =
      koop::pipeline_control(cfg, model ? &*model : nullptr, out);
  int held = 0;
  double mean_ms = 0.0;
  for (int k = 0; k < log.instants(); ++k) {
    held += log.held[k];
    mean_ms += log.solve_ms[k];
  }
  mean_ms /= std::max(1, log.instants() - held);
  std::printf("closed loop (%s): %d instants, mean solve %.2f ms, %d held\n",
              koop::to_string(kind).c_str(), log.instants(), mean_ms, held);
  std::printf("  log in %s\n", out.c_str());
  return kExitOk;
}

int run_benchmark(const CommonArgs& args, const std::string& ckpt_path,
                  const std::string& linear_path) {
  const koop::RunConfig cfg = resolve_config(args, "runs/benchmark");
  const std::string out = cfg.get_string("io.out_dir");
  std::optional<koop::KoopmanModel> wiener, linear;
  if (!ckpt_path.empty()) wiener = koop::load_checkpoint(ckpt_path);
  if (!linear_path.empty()) {
    linear = koop::load_checkpoint(linear_path, koop::LatentStructure::diagonal,
                                   koop::DecoderKind::linear);
  }
  const koop::BenchmarkTable table = koop::pipeline_benchmark(
      cfg, wiener ? &*wiener : nullptr, linear ? &*linear : nullptr, out);
  std::printf("%s", table.text().c_str());
  std::printf("table in %s\n", out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduced-order Koopman modeling and MPC pipeline"};
  app.require_subcommand(1);
  app.footer("Configuration keys (defaults, units):\n" +
             koop::RunConfig::describe_keys());

  CommonArgs sample_args, train_args, eval_args, control_args, bench_args;
  std::string dataset_dir, resume_path;
  std::string eval_ckpt, eval_compare;
  std::string control_ckpt;
  std::string bench_ckpt, bench_linear;
  bool eval_assert = false;

  auto* sample = app.add_subcommand("sample", "generate a training dataset");
  add_common(sample, sample_args);

  auto* train = app.add_subcommand("train", "train a reduced model");
  add_common(train, train_args);
  train->add_option("--dataset", dataset_dir, "dataset directory")->required();
  train->add_option("--resume", resume_path,
                    "restore this checkpoint instead of training");

  auto* eval = app.add_subcommand("eval-openloop", "open-loop model test");
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--compare", eval_compare,
                   "second checkpoint for a side-by-side report");
  eval->add_flag("--assert", eval_assert,
                 "exit 4 when accuracy thresholds are missed");

  auto* control = app.add_subcommand("run-mpc", "closed-loop control study");
  add_common(control, control_args);
  control->add_option("--checkpoint", control_ckpt, "model checkpoint");

  auto* bench = app.add_subcommand("benchmark", "controller CPU comparison");
  add_common(bench, bench_args);
  bench->add_option("--checkpoint", bench_ckpt, "Wiener model checkpoint");
  bench->add_option("--linear-checkpoint", bench_linear,
                    "linear-decoder checkpoint");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sample->parsed()) return run_sample(sample_args);
    if (train->parsed()) return run_train(train_args, dataset_dir, resume_path);
    if (eval->parsed()) {
      return run_eval(eval_args, eval_ckpt, eval_compare, eval_assert);
    }
    if (control->parsed()) return run_control(control_args, control_ckpt);
    if (bench->parsed()) return run_benchmark(bench_args, bench_ckpt,
                                              bench_linear);
  } catch (const koop::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const koop::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  }
  return kExitOk;
}
