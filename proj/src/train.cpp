#include "vstream/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <exception>
#include <thread>

#include <fmt/core.h>
#include <optional>

#include "vstream/error.hpp"

namespace vstream {

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be > 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a positive finite number");
  }
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Tolerance:
      return "tolerance";
    case StopReason::Patience:
      return "patience";
    case StopReason::MaxEpochs:
      return "max-epochs";
  }
  return "unknown";
}

std::size_t effective_window(std::size_t requested, std::size_t k) {
  return std::min(requested, k + 1);
}

TrainResult fit(std::span<const GraphSnapshot> window, ModelState initial, const ModelConfig& mcfg,
                const TrainConfig& cfg, const CheckpointCallback& on_checkpoint) {
  cfg.validate();
  mcfg.validate();
  if (window.empty()) throw ContractError("fit: empty window");
  if (window.back().active_nodes().empty()) {
    throw UndefinedMetricError(
        fmt::format("snapshot {} has no active nodes to train on", window.back().step()));
  }

  TrainResult result{mcfg, std::move(initial), {}, {}};
  AdamState adam;
  adam.hyper.learning_rate = cfg.learning_rate;

  ParamList trainable;
  for (const auto& p : result.state.parameters()) {
    const bool is_h = p.name.starts_with("H_");
    const bool attention_param = is_h || p.name.starts_with("a_");
    if (cfg.train_only_h && !is_h) continue;
    if (!mcfg.evolve && attention_param) continue;
    trainable.push_back(p);
  }

  double best = std::numeric_limits<double>::infinity();
  std::size_t stalled = 0;
  std::size_t since_best = 0;
  auto& trace = result.trace;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    LossAndGradients lg;
    try {
      lg = loss_and_gradients(window, result.state, mcfg);
    } catch (const NumericError&) {
      throw NumericError(fmt::format("non-finite loss at epoch {}", epoch));
    }
    trace.loss.push_back(lg.loss);
    result.embedding = std::move(lg.embedding);
    trace.final_epoch = epoch;

    bool stop = false;
    if (std::isinf(cfg.tolerance)) {
      trace.reason = StopReason::Tolerance;
      stop = true;
    } else if (trace.loss.size() > 1) {
      const double previous = trace.loss[trace.loss.size() - 2];
      const double change =
          previous == 0.0 ? 0.0 : std::abs(previous - lg.loss) / std::abs(previous);
      stalled = change < cfg.tolerance ? stalled + 1 : 0;
      if (stalled >= cfg.patience) {
        trace.reason = StopReason::Tolerance;
        stop = true;
      }
    }
    if (lg.loss < best) {
      best = lg.loss;
      since_best = 0;
    } else if (!stop && ++since_best >= cfg.patience) {
      trace.reason = StopReason::Patience;
      stop = true;
    }
    if (!stop && lg.loss == 0.0) {
      trace.reason = StopReason::Tolerance;
      stop = true;
    }
    if (!stop && epoch == cfg.max_epochs) {
      trace.reason = StopReason::MaxEpochs;
      stop = true;
    }

    if (!stop) adam_step(trainable, lg.gradients, adam);
    const auto elapsed = std::chrono::steady_clock::now() - started;
    trace.wall_ms.push_back(std::chrono::duration<double, std::milli>(elapsed).count());

    if (on_checkpoint && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      on_checkpoint(epoch, result.state);
    }
    if (stop) break;
  }
  return result;
}

TrainResult train_at_step(const DynamicGraph& dyn, std::size_t k, const TrainConfig& cfg,
                          const ModelConfig& mcfg, const ModelState* warm,
                          const CheckpointCallback& on_checkpoint) {
  if (dyn.size() == 0) throw ContractError("train_at_step: dynamic graph has no snapshots");
  if (k >= dyn.size()) {
    throw ContractError(fmt::format("train_at_step: step {} out of range (K = {})", k, dyn.size()));
  }
  ModelConfig effective = mcfg;
  effective.window = effective_window(mcfg.window, k);
  ModelState initial = ModelState::initialize(dyn.node_universe(), effective);
  if (warm != nullptr) {
    auto source = warm->parameters();
    for (auto& p : initial.parameters()) {
      const auto it = std::find_if(source.begin(), source.end(),
                                   [&](const auto& s) { return s.first == p.name; });
      if (it != source.end() && it->second->same_shape(*p.value)) *p.value = *it->second;
    }
  }
  const std::size_t first = k + 1 - effective.window;
  const std::span<const GraphSnapshot> window(dyn.snapshots().data() + first, effective.window);
  return fit(window, std::move(initial), effective, cfg, on_checkpoint);
}

std::uint64_t step_seed(std::uint64_t master, std::size_t k) {
  return derive_seed(master, 0x5eed0000ULL + k);
}

std::map<std::size_t, TrainResult> train_all_steps(const DynamicGraph& dyn, const TrainConfig& cfg,
                                                   const ModelConfig& mcfg, std::size_t threads) {
  if (dyn.size() == 0) throw ContractError("train_all_steps: dynamic graph has no snapshots");
  auto config_for = [&](std::size_t k) {
    ModelConfig step_cfg = mcfg;
    step_cfg.seed = step_seed(mcfg.seed, k);
    return step_cfg;
  };

  std::map<std::size_t, TrainResult> results;
  if (cfg.warm_start || threads <= 1) {
    for (std::size_t k = 0; k < dyn.size(); ++k) {
      const ModelState* warm =
          cfg.warm_start && k > 0 ? &results.at(k - 1).state : nullptr;
      results.emplace(k, train_at_step(dyn, k, cfg, config_for(k), warm));
    }
    return results;
  }

  std::vector<std::optional<TrainResult>> slots(dyn.size());
  std::vector<std::exception_ptr> errors(dyn.size());
  std::size_t next = 0;
  std::mutex next_mutex;
  auto worker = [&]() {
    for (;;) {
      std::size_t k;
      {
        std::lock_guard lock(next_mutex);
        if (next >= dyn.size()) return;
        k = next++;
      }
      try {
        slots[k] = train_at_step(dyn, k, cfg, config_for(k));
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < std::min(threads, dyn.size()); ++t) pool.emplace_back(worker);
  pool.clear();
  for (std::size_t k = 0; k < dyn.size(); ++k) {
    if (errors[k]) std::rethrow_exception(errors[k]);
    results.emplace(k, std::move(*slots[k]));
  }
  return results;
}

TrainResult static_gcn_baseline(const GraphSnapshot& snapshot, const TrainConfig& cfg,
                                ModelConfig mcfg) {
  mcfg.window = 1;
  mcfg.evolve = false;
  ModelState initial = ModelState::initialize(snapshot.node_universe(), mcfg);
  return fit(std::span<const GraphSnapshot>(&snapshot, 1), std::move(initial), mcfg, cfg);
}

void write_trace_csv(const TrainTrace& trace, const std::string& path, bool include_timing) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write trace '{}'", path));
  out << "epoch,loss,wall_ms\n";
  for (std::size_t i = 0; i < trace.loss.size(); ++i) {
    const double ms = include_timing && i < trace.wall_ms.size() ? trace.wall_ms[i] : 0.0;
    out << fmt::format("{},{:.17g},{:.3f}\n", i + 1, trace.loss[i], ms);
  }
  if (!out) throw IoError(fmt::format("failed writing trace '{}'", path));
}

}  // namespace vstream
