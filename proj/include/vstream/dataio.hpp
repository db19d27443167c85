#pragma once

// Event datasets on disk and the synthetic event generator.
//
// On-disk layout: a directory with `manifest.json` and one edge file per
// snapshot. Edge files are plain text, one edge per line as
// `u<TAB>v<TAB>weight` (non-negative integer ids, capacity in Mbit/s,
// written with 9 significant digits);
// `#` starts a comment. Files ending in `.gz` are read through zlib.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vstream/graphcore.hpp"

namespace vstream {

inline constexpr const char* kManifestFormat = "vstream-event/1";
inline constexpr const char* kManifestName = "manifest.json";

struct SnapshotEntry {
  std::string file;
  std::vector<std::int64_t> isolated;  // active nodes without edges
};

struct EventManifest {
  std::string name = "event";
  double interval_minutes = 5.0;
  std::size_t node_count = 0;
  std::vector<std::int64_t> external_ids;  // empty: ids are used as-is
  std::vector<SnapshotEntry> snapshots;
};

EventManifest read_manifest(const std::string& path);

/// Loads an event from a manifest file, or from a directory holding either a
/// manifest or bare edge-list files (taken in name order; `,` and whitespace
/// separators, an optional non-numeric header line).
DynamicGraph load_event(const std::string& path);

/// Writes `snapshot_NNN.tsv` files plus the manifest into `dir` and returns
/// the manifest path. An existing manifest is only replaced with `force`.
std::string save_event(const DynamicGraph& dyn, const std::string& dir, bool force = false);

struct SynthConfig {
  std::string name = "synthetic";
  std::size_t offices = 7;
  std::size_t viewers_per_office = 30;
  double intra_mean = 1000.0;  // Mbit/s
  double intra_sd = 100.0;
  double inter_mean = 100.0;
  double inter_sd = 20.0;
  // Fraction of all viewers arriving at step 0, 1, ...; must sum to <= 1.
  std::vector<double> arrivals{0.5, 0.2, 0.1, 0.1, 0.05, 0.05};
  // Fraction of edges rewired between consecutive steps, linearly decaying
  // from rewire_start (step 1) to rewire_end (step K-1) unless
  // rewire_schedule lists explicit rates for steps 1..K-1.
  double rewire_start = 0.6;
  double rewire_end = 0.07;
  std::vector<double> rewire_schedule;
  int cap = 7;  // max connections per viewer, 0 = uncapped
  std::size_t links_per_arrival = 3;
  double intra_prob = 0.8;  // chance a new connection stays inside the office
  std::size_t snapshots = 12;
  double interval_minutes = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t node_count() const { return offices * viewers_per_office; }
  std::size_t office_of(NodeId v) const { return v / viewers_per_office; }
  /// Rewiring rate applied when moving from step k-1 to k (k >= 1).
  double rewire_rate(std::size_t k) const;
};

/// Seed-deterministic synthetic streaming event. Viewers arrive on the
/// configured schedule and attach preferentially inside their office; each
/// later step rewires the scheduled fraction of edges to fresh pairs.
DynamicGraph generate_event(const SynthConfig& cfg);

struct SnapshotSummary {
  std::size_t step = 0;
  std::size_t nodes = 0;
  std::size_t edges = 0;
  double mean_degree = 0.0;
  std::size_t max_degree = 0;
  double weight_min = 0.0;
  double weight_q25 = 0.0;
  double weight_median = 0.0;
  double weight_q75 = 0.0;
  double weight_max = 0.0;
  double edge_evolution = 0.0;  // NaN for step 0 or an empty snapshot
  double node_evolution = 0.0;
};

struct EventStats {
  std::vector<SnapshotSummary> snapshots;
  EvolutionStats evolution;  // empty when K == 1
  std::map<std::size_t, std::size_t> degree_histogram;  // over all snapshots
};

EventStats event_stats(const DynamicGraph& dyn);

void write_stats_csv(const EventStats& stats, const std::string& path);
void write_degree_histogram_csv(const EventStats& stats, const std::string& path);

}  // namespace vstream
