#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <fmt/core.h>
#include <fmt/ranges.h>
#include <json.hpp>

#include "vstream/checkpoint.hpp"
#include "vstream/cli.hpp"
#include "vstream/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vstream {

namespace {

fs::path output_path(const std::string& dir, const std::string& name, bool force) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(fmt::format("cannot create output directory '{}': {}", dir, ec.message()));
  const fs::path path = fs::path(dir) / name;
  if (fs::exists(path) && !force) {
    throw IoError(fmt::format("'{}' already exists (use --force to overwrite)", path.string()));
  }
  return path;
}

void write_embedding_csv(const Embedding& z, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path));
  out << "node";
  for (std::size_t j = 0; j < z.z.cols(); ++j) out << ",z" << j;
  out << '\n';
  for (std::size_t v = 0; v < z.z.rows(); ++v) {
    out << v;
    for (const double x : z.z.row(v)) out << fmt::format(",{:.17g}", x);
    out << '\n';
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path));
}

std::span<const GraphSnapshot> window_ending_at(const DynamicGraph& dyn, std::size_t k,
                                                std::size_t window) {
  if (window == 0 || window > k + 1) {
    throw ContractError(fmt::format("window {} does not fit before step {}", window, k));
  }
  return {dyn.snapshots().data() + (k + 1 - window), window};
}

ModelConfig step_model(const RunConfig& cfg, std::size_t k) {
  ModelConfig m = cfg.model;
  m.seed = run_step_seed(cfg, k);
  return m;
}

json config_json(const RunConfig& cfg) {
  return {
      {"window", cfg.model.window},
      {"dims", cfg.model.layer_dims},
      {"evolve", cfg.model.evolve},
      {"seed", cfg.model.seed},
      {"epochs", cfg.train.max_epochs},
      {"tolerance", cfg.train.tolerance},
      {"patience", cfg.train.patience},
      {"lr", cfg.train.learning_rate},
      {"train_only_h", cfg.train.train_only_h},
      {"warm_start", cfg.train.warm_start},
      {"head", to_string(cfg.head)},
      {"mlp_hidden", cfg.mlp.hidden},
      {"mlp_epochs", cfg.mlp.epochs},
      {"mlp_lr", cfg.mlp.learning_rate},
      {"truth", cfg.truth == TruthRule::Earliest ? "earliest" : "mean"},
      {"data", cfg.data_path ? *cfg.data_path : std::string("synthetic")},
  };
}

json report_json(const EvalReport& report) {
  json steps = json::array();
  for (const auto& s : report.steps) {
    steps.push_back({{"k", s.k}, {"test_size", s.test_size}, {"mae", s.mae}, {"rmse", s.rmse}});
  }
  return {{"model", report.model}, {"head", to_string(report.head)}, {"steps", steps}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  out << text;
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace

int cmd_generate(const SynthConfig& synth, const std::string& out_dir, bool force) {
  const DynamicGraph dyn = generate_event(synth);
  const std::string manifest = save_event(dyn, out_dir, force);
  std::cout << fmt::format("generated '{}': {} snapshots, {} nodes, {} distinct edges -> {}\n",
                           synth.name, dyn.size(), dyn.node_universe(), dyn.distinct_edge_count(),
                           manifest);
  return kExitOk;
}

int cmd_stats(const std::string& data_path, const std::string& out_dir, bool force) {
  const DynamicGraph dyn = load_event(data_path);
  const EventStats stats = event_stats(dyn);
  const fs::path stats_path = output_path(out_dir, "stats.csv", force);
  const fs::path hist_path = output_path(out_dir, "degree_histogram.csv", force);
  write_stats_csv(stats, stats_path.string());
  write_degree_histogram_csv(stats, hist_path.string());
  std::cout << fmt::format("{}: {} snapshots, {} nodes, {} distinct edges\n", dyn.metadata().name,
                           dyn.size(), dyn.node_universe(), dyn.distinct_edge_count());
  for (const auto& r : stats.snapshots) {
    std::cout << fmt::format("  step {:>2}: {:>6} nodes {:>8} edges  edge-evo {:>6.2f}%  node-evo {:>6.2f}%\n",
                             r.step, r.nodes, r.edges, r.edge_evolution, r.node_evolution);
  }
  return kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  const DynamicGraph dyn = load_run_data(cfg);
  const std::string fingerprint = config_fingerprint(cfg, dyn);
  std::vector<std::size_t> steps;
  if (cfg.all_steps) {
    for (std::size_t k = 0; k < dyn.size(); ++k) steps.push_back(k);
  } else {
    steps.push_back(cfg.step ? *cfg.step : default_eval_step(dyn));
  }

  std::optional<ModelState> previous;
  for (const std::size_t k : steps) {
    const ModelConfig model = step_model(cfg, k);
    const fs::path cp_path = output_path(cfg.out_dir, checkpoint_file_name(k), cfg.force);
    const fs::path trace_path = output_path(cfg.out_dir, fmt::format("trace_step{}.csv", k), cfg.force);
    const fs::path emb_path =
        output_path(cfg.out_dir, fmt::format("embedding_step{}.csv", k), cfg.force);

    CheckpointCallback on_checkpoint;
    if (cfg.train.checkpoint_every > 0) {
      on_checkpoint = [&, k](std::size_t epoch, const ModelState& state) {
        ModelConfig effective = model;
        effective.window = effective_window(model.window, k);
        const fs::path p = fs::path(cfg.out_dir) / fmt::format("checkpoint_step{}_epoch{}.json", k, epoch);
        save_checkpoint(Checkpoint{fingerprint, k, effective, state}, p.string());
      };
    }
    const ModelState* warm = cfg.train.warm_start && previous ? &*previous : nullptr;
    TrainResult result = train_at_step(dyn, k, cfg.train, model, warm, on_checkpoint);

    save_checkpoint(Checkpoint{fingerprint, k, result.model, result.state}, cp_path.string());
    write_trace_csv(result.trace, trace_path.string(), cfg.timing);
    write_embedding_csv(result.embedding, emb_path.string());
    std::cout << fmt::format("step {}: window {} epochs {} loss {:.6g} -> {:.6g} ({})\n", k,
                             result.model.window, result.trace.final_epoch,
                             result.trace.loss.front(), result.trace.loss.back(),
                             to_string(result.trace.reason));
    previous = std::move(result.state);
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
  const DynamicGraph dyn = load_run_data(cfg);
  const std::string fingerprint = config_fingerprint(cfg, dyn);
  const bool from_dir = fs::is_directory(checkpoint_path);

  std::vector<std::size_t> steps;
  if (cfg.all_steps) {
    if (!from_dir) throw ConfigError("--all-steps needs a checkpoint directory");
    for (std::size_t k = 0; k + 1 < dyn.size(); ++k) steps.push_back(k);
  } else if (cfg.step) {
    steps.push_back(*cfg.step);
  } else if (!from_dir) {
    steps.push_back(load_checkpoint(checkpoint_path).step);
  } else {
    steps.push_back(default_eval_step(dyn));
  }

  EvalReport model_report{"vstream", cfg.head, fingerprint, {}};
  EvalReport baseline_report{"static-gcn", cfg.head, fingerprint, {}};
  for (const std::size_t k : steps) {
    const fs::path path = from_dir ? fs::path(checkpoint_path) / checkpoint_file_name(k)
                                   : fs::path(checkpoint_path);
    if (cfg.all_steps && !fs::exists(path)) continue;
    const Checkpoint cp = load_checkpoint(path.string());
    if (cp.fingerprint != fingerprint) {
      throw ContractError(fmt::format(
          "checkpoint '{}' was trained with a different configuration or dataset "
          "(fingerprint {} vs {})",
          path.string(), cp.fingerprint, fingerprint));
    }
    if (cp.step != k) {
      throw ContractError(fmt::format("checkpoint '{}' holds step {}, not {}", path.string(), cp.step, k));
    }
    const Embedding z =
        vstream_forward(window_ending_at(dyn, k, cp.model.window), cp.state, cp.model);
    try {
      model_report.steps.push_back(evaluate_step(dyn, k, z, cfg.head, cfg.mlp, cfg.truth));
    } catch (const EmptyTestSetError&) {
      if (!cfg.all_steps) throw;
      continue;
    }
    if (cfg.baseline) {
      const TrainResult base = static_gcn_baseline(dyn[k], cfg.train, step_model(cfg, k));
      baseline_report.steps.push_back(
          evaluate_step(dyn, k, base.embedding, cfg.head, cfg.mlp, cfg.truth));
    }
  }
  if (model_report.steps.empty()) throw EmptyTestSetError("no step could be evaluated");

  const fs::path csv = output_path(cfg.out_dir, "report.csv", cfg.force);
  const fs::path js = output_path(cfg.out_dir, "report.json", cfg.force);
  write_report_csv(model_report, csv.string());
  json doc = {{"format", "vstream-report/1"},
              {"fingerprint", fingerprint},
              {"config", config_json(cfg)},
              {"reports", json::array({report_json(model_report)})}};
  if (cfg.baseline) {
    doc["reports"].push_back(report_json(baseline_report));
    write_report_csv(baseline_report, output_path(cfg.out_dir, "baseline_report.csv", cfg.force).string());
    write_comparison_csv({model_report, baseline_report},
                         output_path(cfg.out_dir, "comparison.csv", cfg.force).string());
  }
  write_text(js, doc.dump(2) + "\n");

  for (std::size_t i = 0; i < model_report.steps.size(); ++i) {
    const auto& s = model_report.steps[i];
    std::cout << fmt::format("k={} |O_k|={} vstream MAE={:.6g} RMSE={:.6g}", s.k, s.test_size, s.mae,
                             s.rmse);
    if (cfg.baseline) {
      const auto& b = baseline_report.steps[i];
      std::cout << fmt::format("  static-gcn MAE={:.6g} RMSE={:.6g}", b.mae, b.rmse);
    }
    std::cout << '\n';
  }
  return kExitOk;
}

int cmd_sweep(const SweepSpec& spec, const RunConfig& cfg) {
  spec.validate();
  const DynamicGraph dyn = load_run_data(cfg);
  const std::size_t k = cfg.step ? *cfg.step : default_eval_step(dyn);
  const fs::path rows_path = output_path(cfg.out_dir, "sweep.csv", cfg.force);
  const fs::path summary_path = output_path(cfg.out_dir, "sweep_summary.csv", cfg.force);

  struct Cell {
    std::size_t window;
    std::size_t dim;
    std::uint64_t seed;
    StepReport report;
    std::string status = "ok";
    int code = kExitOk;
  };
  std::vector<Cell> cells;
  for (const auto w : spec.windows)
    for (const auto d : spec.dims)
      for (std::size_t r = 0; r < spec.repetitions; ++r) cells.push_back({w, d, cfg.model.seed + r, {}});

  auto run_cell = [&](Cell& cell) {
    try {
      RunConfig run = cfg;
      run.model.window = cell.window;
      run.model.layer_dims.back() = cell.dim;
      run.model.seed = cell.seed;
      run.mlp.seed = cell.seed;
      const TrainResult result = train_at_step(dyn, k, run.train, step_model(run, k));
      cell.report = evaluate_step(dyn, k, result.embedding, run.head, run.mlp, run.truth);
    } catch (const std::exception& e) {
      cell.status = fmt::format("error: {}", e.what());
      cell.code = exit_code_for(e);
    }
  };

  std::size_t next = 0;
  std::mutex next_mutex;
  auto worker = [&]() {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(next_mutex);
        if (next >= cells.size()) return;
        i = next++;
      }
      run_cell(cells[i]);
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(cfg.threads, cells.size()); ++t) pool.emplace_back(worker);
  }

  std::string rows = "w,d,seed,step,MAE,RMSE,status\n";
  for (const auto& c : cells) {
    std::string status = c.status;
    for (char& ch : status) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    rows += fmt::format("{},{},{},{},{:.17g},{:.17g},{}\n", c.window, c.dim, c.seed, k,
                        c.code == kExitOk ? c.report.mae : std::nan(""),
                        c.code == kExitOk ? c.report.rmse : std::nan(""), status);
  }
  write_text(rows_path, rows);

  struct Summary {
    std::size_t window, dim, ok = 0;
    double mae_mean = 0, mae_std = 0, rmse_mean = 0, rmse_std = 0;
  };
  std::vector<Summary> summaries;
  std::size_t best = 0;
  bool have_best = false;
  for (const auto w : spec.windows) {
    for (const auto d : spec.dims) {
      Summary s{w, d};
      std::vector<double> maes, rmses;
      for (const auto& c : cells) {
        if (c.window == w && c.dim == d && c.code == kExitOk) {
          maes.push_back(c.report.mae);
          rmses.push_back(c.report.rmse);
        }
      }
      s.ok = maes.size();
      auto mean_std = [](const std::vector<double>& x, double& mean, double& sd) {
        if (x.empty()) {
          mean = sd = std::nan("");
          return;
        }
        mean = 0.0;
        for (const double v : x) mean += v;
        mean /= static_cast<double>(x.size());
        sd = 0.0;
        for (const double v : x) sd += (v - mean) * (v - mean);
        sd = x.size() > 1 ? std::sqrt(sd / static_cast<double>(x.size() - 1)) : 0.0;
      };
      mean_std(maes, s.mae_mean, s.mae_std);
      mean_std(rmses, s.rmse_mean, s.rmse_std);
      if (s.ok > 0 && (!have_best || s.rmse_mean < summaries[best].rmse_mean)) {
        best = summaries.size();
        have_best = true;
      }
      summaries.push_back(s);
    }
  }
  std::string summary = "w,d,reps_ok,mae_mean,mae_std,rmse_mean,rmse_std,best\n";
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    summary += fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{}\n", s.window, s.dim, s.ok,
                           s.mae_mean, s.mae_std, s.rmse_mean, s.rmse_std,
                           have_best && i == best ? 1 : 0);
  }
  write_text(summary_path, summary);

  for (const auto& s : summaries) {
    std::cout << fmt::format("w={} d={:<3} RMSE {:.6g} ± {:.3g}  MAE {:.6g} ± {:.3g}  ({} ok)\n",
                             s.window, s.dim, s.rmse_mean, s.rmse_std, s.mae_mean, s.mae_std, s.ok);
  }
  if (have_best) {
    std::cout << fmt::format("best: w={} d={} mean RMSE {:.6g}\n", summaries[best].window,
                             summaries[best].dim, summaries[best].rmse_mean);
  }
  for (const auto& c : cells) {
    if (c.code != kExitOk) {
      std::cerr << fmt::format("sweep cell w={} d={} seed={} failed: {}\n", c.window, c.dim, c.seed,
                               c.status);
    }
  }
  for (const auto& c : cells) {
    if (c.code != kExitOk) return c.code;
  }
  return kExitOk;
}

}  // namespace vstream
