#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vstream/numkit.hpp"

namespace vstream {

/// Global node identifier, stable across every snapshot of one event.
using NodeId = std::uint32_t;

/// Undirected weighted edge stored canonically with u < v. Weight is a
/// capacity in Mbit/s.
struct Edge {
  NodeId u;
  NodeId v;
  double weight;

  bool operator==(const Edge&) const = default;
};

/// Order-independent key of an unordered node pair.
inline std::uint64_t pair_key(NodeId a, NodeId b) {
  const NodeId lo = a < b ? a : b;
  const NodeId hi = a < b ? b : a;
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}

struct Neighbor {
  NodeId id;
  double weight;

  bool operator==(const Neighbor&) const = default;
};

/// Symmetric normalisation D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.
/// Inactive nodes keep only their self-loop (diagonal entry 1).
SparseMatrix normalize_adjacency(const SparseMatrix& a, std::span<const NodeId> active_nodes);

/// One timestamped weighted undirected graph over the global node universe.
/// Immutable once built; the raw and normalised adjacency are precomputed.
class GraphSnapshot {
 public:
  /// Validates and canonicalises `edges`: endpoints are swapped so u < v,
  /// exact duplicates are merged, conflicting duplicates, self-loops and
  /// non-positive weights raise DataError. Active nodes are the edge endpoints
  /// plus `isolated_active`.
  GraphSnapshot(std::size_t step, std::size_t node_universe, std::vector<Edge> edges,
                std::vector<NodeId> isolated_active = {});

  std::size_t step() const { return step_; }
  std::size_t node_universe() const { return node_universe_; }
  /// Canonical edges sorted by (u, v).
  const std::vector<Edge>& edges() const { return edges_; }
  /// Sorted active node ids.
  const std::vector<NodeId>& active_nodes() const { return active_; }
  /// Active nodes that have no incident edge.
  std::vector<NodeId> isolated_active() const;
  bool is_active(NodeId v) const { return v < active_mask_.size() && active_mask_[v]; }

  const SparseMatrix& adjacency() const { return adjacency_; }
  const SparseMatrix& normalized() const { return normalized_; }
  double weight(NodeId u, NodeId v) const { return adjacency_.at(u, v); }

  /// Same snapshot re-labelled with a different step index.
  GraphSnapshot with_step(std::size_t step) const;

 private:
  std::size_t step_;
  std::size_t node_universe_;
  std::vector<Edge> edges_;
  std::vector<NodeId> active_;
  std::vector<bool> active_mask_;
  SparseMatrix adjacency_;
  SparseMatrix normalized_;
};

/// Neighbours of v sorted by id; empty for inactive or isolated nodes.
std::vector<Neighbor> neighborhood(const GraphSnapshot& snapshot, NodeId v);

struct EventMetadata {
  std::string name = "event";
  double interval_minutes = 5.0;
};

/// Snapshot sequence with consecutive step indices 0..K-1 over a shared
/// node universe.
class DynamicGraph {
 public:
  DynamicGraph(std::vector<GraphSnapshot> snapshots, std::size_t node_universe,
               EventMetadata metadata = {}, std::vector<std::int64_t> external_ids = {});

  std::size_t size() const { return snapshots_.size(); }
  std::size_t node_universe() const { return node_universe_; }
  const GraphSnapshot& operator[](std::size_t k) const { return snapshots_[k]; }
  const GraphSnapshot& at(std::size_t k) const;
  const std::vector<GraphSnapshot>& snapshots() const { return snapshots_; }
  const EventMetadata& metadata() const { return metadata_; }
  /// Original ids from the source file when they were remapped; empty means
  /// NodeId equals the external id.
  const std::vector<std::int64_t>& external_ids() const { return external_ids_; }

  /// Total number of distinct unordered pairs over all snapshots.
  std::size_t distinct_edge_count() const;

 private:
  std::vector<GraphSnapshot> snapshots_;
  std::size_t node_universe_;
  EventMetadata metadata_;
  std::vector<std::int64_t> external_ids_;
};

/// (1 - |E_prev ∩ E_curr| / |E_curr|) * 100 over unordered pairs; weights ignored.
double edge_evolution(const GraphSnapshot& prev, const GraphSnapshot& curr);
/// Same formula on the active node sets.
double node_evolution(const GraphSnapshot& prev, const GraphSnapshot& curr);

struct EvolutionStats {
  // Entry i describes the transition from step i to step i + 1.
  std::vector<double> edge_evolution;
  std::vector<double> node_evolution;
};

EvolutionStats evolution_stats(const DynamicGraph& dyn);

}  // namespace vstream
