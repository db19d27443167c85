#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vstream/graphcore.hpp"
#include "vstream/model.hpp"

namespace vstream {

struct TrainConfig {
  std::size_t max_epochs = 500;
  // Relative loss change below which an epoch counts as stalled.
  double tolerance = 1e-4;
  std::size_t patience = 10;
  double learning_rate = 0.01;
  // Invoke the checkpoint callback every N epochs; 0 disables it.
  std::size_t checkpoint_every = 0;
  // Only the attention transforms H_i are updated (the literal update set of
  // the original training algorithm); everything else stays at initialisation.
  bool train_only_h = false;
  // train_all_steps: initialise step k from the parameters trained at k - 1.
  bool warm_start = false;

  void validate() const;
};

enum class StopReason { Tolerance, Patience, MaxEpochs };

std::string to_string(StopReason reason);

struct TrainTrace {
  std::vector<double> loss;     // loss evaluated at the start of each epoch
  std::vector<double> wall_ms;  // wall time of each epoch
  std::size_t final_epoch = 0;  // 1-based
  StopReason reason = StopReason::MaxEpochs;

  bool operator==(const TrainTrace& other) const {
    return loss == other.loss && final_epoch == other.final_epoch && reason == other.reason;
  }
};

struct TrainResult {
  ModelConfig model;  // effective config (window clipped to available history)
  ModelState state;
  Embedding embedding;
  TrainTrace trace;
};

using CheckpointCallback = std::function<void(std::size_t epoch, const ModelState&)>;

/// Window actually used at step k: min(w, k + 1).
std::size_t effective_window(std::size_t requested, std::size_t k);

/// Minimises the reconstruction loss on window.back() with Adam, starting
/// from `initial`. Stops when the relative loss change stays below tolerance
/// for `patience` epochs (Tolerance), when the best loss has not improved for
/// `patience` epochs (Patience), or at max_epochs. The returned embedding is
/// the one whose loss was recorded last.
TrainResult fit(std::span<const GraphSnapshot> window, ModelState initial, const ModelConfig& mcfg,
                const TrainConfig& cfg, const CheckpointCallback& on_checkpoint = {});

/// Trains the windowed model for step k from a fresh initialisation seeded by
/// mcfg.seed (or from `warm` when given; matching parameters are copied).
TrainResult train_at_step(const DynamicGraph& dyn, std::size_t k, const TrainConfig& cfg,
                          const ModelConfig& mcfg, const ModelState* warm = nullptr,
                          const CheckpointCallback& on_checkpoint = {});

/// Seed used for step k by train_all_steps.
std::uint64_t step_seed(std::uint64_t master, std::size_t k);

/// Independent training at every step. Steps run on `threads` workers unless
/// warm starting, which forces sequential order.
std::map<std::size_t, TrainResult> train_all_steps(const DynamicGraph& dyn, const TrainConfig& cfg,
                                                   const ModelConfig& mcfg,
                                                   std::size_t threads = 1);

/// Single GCN fitted on one snapshot with the same loss: no attention, no
/// window.
TrainResult static_gcn_baseline(const GraphSnapshot& snapshot, const TrainConfig& cfg,
                                ModelConfig mcfg);

/// CSV with header `epoch,loss,wall_ms`. Wall times are written as 0 unless
/// `include_timing` is set, so repeated runs produce identical bytes.
void write_trace_csv(const TrainTrace& trace, const std::string& path, bool include_timing);

}  // namespace vstream
