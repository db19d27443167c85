#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "vstream/cli.hpp"
#include "vstream/error.hpp"

namespace {

struct RunFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string data;
  bool synthetic = false;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> window;
  std::string dims;
  std::string head;
  bool baseline = false;
  bool all_steps = false;
  bool force = false;
  bool train_only_h = false;
  bool timing = false;
  std::optional<std::size_t> step;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> threads;
  std::string checkpoint;
  std::string sweep_windows;
  std::string sweep_dims;
  std::optional<std::size_t> reps;
};

void add_common(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--set", f.sets, "override a config key (key=value), repeatable");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_flag("--force", f.force, "overwrite existing outputs");
}

void add_run(CLI::App* cmd, RunFlags& f) {
  add_common(cmd, f);
  cmd->add_option("--data", f.data, "event manifest or edge-file directory");
  cmd->add_flag("--synthetic", f.synthetic, "use the generated synthetic event (synth.* keys)");
  cmd->add_option("--window", f.window, "window size w");
  cmd->add_option("--dims", f.dims, "comma-separated layer dimensions");
  cmd->add_option("--head", f.head, "prediction head: inner|mlp");
  cmd->add_option("--step", f.step, "snapshot step k");
  cmd->add_option("--epochs", f.epochs, "maximum training epochs");
  cmd->add_option("--threads", f.threads, "worker threads");
  cmd->add_flag("--all-steps", f.all_steps, "run every step");
  cmd->add_flag("--train-only-H", f.train_only_h, "train only the transform matrices");
  cmd->add_flag("--timing", f.timing, "record wall-clock time in traces");
}

vstream::KeyValueConfig collect(const RunFlags& f) {
  vstream::KeyValueConfig kv;
  if (!f.config.empty()) kv = vstream::KeyValueConfig::from_file(f.config);
  if (!f.data.empty()) kv.set("data", f.data);
  if (f.synthetic) kv.set("synthetic", "true");
  if (!f.out.empty()) kv.set("out", f.out);
  if (f.seed) kv.set("seed", std::to_string(*f.seed));
  if (f.window) kv.set("window", std::to_string(*f.window));
  if (!f.dims.empty()) kv.set("dims", f.dims);
  if (!f.head.empty()) kv.set("head", f.head);
  if (f.baseline) kv.set("baseline", "true");
  if (f.all_steps) kv.set("all_steps", "true");
  if (f.force) kv.set("force", "true");
  if (f.train_only_h) kv.set("train_only_h", "true");
  if (f.timing) kv.set("timing", "true");
  if (f.step) kv.set("step", std::to_string(*f.step));
  if (f.epochs) kv.set("epochs", std::to_string(*f.epochs));
  if (f.threads) kv.set("threads", std::to_string(*f.threads));
  if (!f.sweep_windows.empty()) kv.set("sweep.windows", f.sweep_windows);
  if (!f.sweep_dims.empty()) kv.set("sweep.dims", f.sweep_dims);
  if (f.reps) kv.set("sweep.reps", std::to_string(*f.reps));
  for (const auto& s : f.sets) kv.set_assignment(s);
  return kv;
}

vstream::RunConfig run_config(const vstream::KeyValueConfig& kv) {
  auto cfg = vstream::RunConfig::from_key_values(kv);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vstream: dynamic viewer-graph embeddings for live video streaming events"};
  app.require_subcommand(1);

  RunFlags f;
  auto* generate = app.add_subcommand("generate", "generate a synthetic event");
  add_common(generate, f);
  auto* stats = app.add_subcommand("stats", "per-snapshot statistics of an event");
  stats->add_option("--data", f.data, "event manifest or edge-file directory")->required();
  stats->add_option("--out", f.out, "output directory");
  stats->add_flag("--force", f.force, "overwrite existing outputs");
  auto* train = app.add_subcommand("train", "train embeddings at a step");
  add_run(train, f);
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on future edges");
  add_run(eval, f);
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint file or directory (default: --out)");
  eval->add_flag("--baseline", f.baseline, "also evaluate the static GCN baseline");
  auto* sweep = app.add_subcommand("sweep", "grid over window size and embedding dimension");
  add_run(sweep, f);
  sweep->add_option("--sweep-windows", f.sweep_windows, "comma-separated window sizes");
  sweep->add_option("--sweep-dims", f.sweep_dims, "comma-separated embedding dimensions");
  sweep->add_option("--reps", f.reps, "repetitions per cell");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return vstream::kExitConfig;
  }

  try {
    const auto kv = collect(f);
    if (generate->parsed()) {
      auto gkv = kv;
      if (f.seed) gkv.set("synth.seed", std::to_string(*f.seed));
      const auto synth = vstream::synth_from_key_values(gkv);
      const std::string out = kv.get("out").value_or(".");
      return vstream::cmd_generate(synth, out, f.force);
    }
    if (stats->parsed()) {
      return vstream::cmd_stats(f.data, f.out.empty() ? "." : f.out, f.force);
    }
    const auto cfg = run_config(kv);
    if (train->parsed()) return vstream::cmd_train(cfg);
    if (eval->parsed()) return vstream::cmd_eval(cfg, f.checkpoint.empty() ? cfg.out_dir : f.checkpoint);
    auto spec = vstream::SweepSpec::from_key_values(kv);
    return vstream::cmd_sweep(spec, cfg);
  } catch (const std::exception& e) {
    std::cerr << "vstream: " << e.what() << '\n';
    return vstream::exit_code_for(e);
  }
}
