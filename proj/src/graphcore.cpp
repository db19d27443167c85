#include "vstream/graphcore.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/core.h>

#include "vstream/error.hpp"

namespace vstream {

SparseMatrix normalize_adjacency(const SparseMatrix& a, std::span<const NodeId> active_nodes) {
  if (a.rows() != a.cols()) {
    throw DimensionError(
        fmt::format("adjacency must be square, got ({}x{})", a.rows(), a.cols()));
  }
  const std::size_t n = a.rows();
  std::vector<bool> active(n, false);
  for (const NodeId v : active_nodes) {
    if (v >= n) throw ContractError(fmt::format("active node {} outside universe {}", v, n));
    active[v] = true;
  }
  if (!a.is_symmetric()) throw ContractError("normalize_adjacency: input is not symmetric");

  std::vector<double> degree(n, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto cols = a.row_cols(r);
    const auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (vals[k] < 0.0) {
        throw ContractError(fmt::format("normalize_adjacency: negative weight at ({}, {})", r,
                                        cols[k]));
      }
      if (cols[k] == r) {
        throw ContractError(fmt::format("normalize_adjacency: nonzero diagonal at node {}", r));
      }
      if (!active[r]) {
        throw ContractError(fmt::format("normalize_adjacency: inactive node {} has edges", r));
      }
      degree[r] += vals[k];
    }
  }

  std::vector<Triplet> entries;
  entries.reserve(a.nonzeros() + n);
  for (std::size_t r = 0; r < n; ++r) {
    const double dr = 1.0 / std::sqrt(degree[r]);
    entries.push_back({r, r, dr * dr});
    const auto cols = a.row_cols(r);
    const auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      entries.push_back({r, cols[k], dr * vals[k] / std::sqrt(degree[cols[k]])});
    }
  }
  return SparseMatrix::from_triplets(n, n, std::move(entries));
}

GraphSnapshot::GraphSnapshot(std::size_t step, std::size_t node_universe,
                             std::vector<Edge> edges, std::vector<NodeId> isolated_active)
    : step_(step), node_universe_(node_universe), active_mask_(node_universe, false) {
  for (auto& e : edges) {
    if (e.u >= node_universe || e.v >= node_universe) {
      throw DataError(fmt::format("snapshot {}: edge ({}, {}) outside node universe {}", step,
                                  e.u, e.v, node_universe));
    }
    if (e.u == e.v) throw DataError(fmt::format("snapshot {}: self-loop at node {}", step, e.u));
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
      throw DataError(fmt::format("snapshot {}: edge ({}, {}) has non-positive weight {}", step,
                                  e.u, e.v, e.weight));
    }
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.u != b.u ? a.u < b.u : a.v < b.v;
  });
  for (const auto& e : edges) {
    if (!edges_.empty() && edges_.back().u == e.u && edges_.back().v == e.v) {
      if (edges_.back().weight != e.weight) {
        throw DataError(fmt::format("snapshot {}: edge ({}, {}) listed with weights {} and {}",
                                    step, e.u, e.v, edges_.back().weight, e.weight));
      }
      continue;
    }
    edges_.push_back(e);
    active_mask_[e.u] = true;
    active_mask_[e.v] = true;
  }
  for (const NodeId v : isolated_active) {
    if (v >= node_universe) {
      throw DataError(fmt::format("snapshot {}: active node {} outside universe", step, v));
    }
    active_mask_[v] = true;
  }
  for (std::size_t v = 0; v < node_universe; ++v) {
    if (active_mask_[v]) active_.push_back(static_cast<NodeId>(v));
  }

  std::vector<Triplet> triplets;
  triplets.reserve(2 * edges_.size());
  for (const auto& e : edges_) {
    triplets.push_back({e.u, e.v, e.weight});
    triplets.push_back({e.v, e.u, e.weight});
  }
  adjacency_ = SparseMatrix::from_triplets(node_universe, node_universe, std::move(triplets));
  normalized_ = normalize_adjacency(adjacency_, active_);
}

std::vector<NodeId> GraphSnapshot::isolated_active() const {
  std::vector<NodeId> out;
  for (const NodeId v : active_) {
    if (adjacency_.row_cols(v).empty()) out.push_back(v);
  }
  return out;
}

GraphSnapshot GraphSnapshot::with_step(std::size_t step) const {
  GraphSnapshot copy = *this;
  copy.step_ = step;
  return copy;
}

std::vector<Neighbor> neighborhood(const GraphSnapshot& snapshot, NodeId v) {
  if (v >= snapshot.node_universe()) {
    throw ContractError(
        fmt::format("node {} outside universe {}", v, snapshot.node_universe()));
  }
  const auto& adj = snapshot.adjacency();
  const auto cols = adj.row_cols(v);
  const auto vals = adj.row_values(v);
  std::vector<Neighbor> out;
  out.reserve(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.push_back({static_cast<NodeId>(cols[k]), vals[k]});
  }
  return out;
}

DynamicGraph::DynamicGraph(std::vector<GraphSnapshot> snapshots, std::size_t node_universe,
                           EventMetadata metadata, std::vector<std::int64_t> external_ids)
    : snapshots_(std::move(snapshots)),
      node_universe_(node_universe),
      metadata_(std::move(metadata)),
      external_ids_(std::move(external_ids)) {
  for (std::size_t k = 0; k < snapshots_.size(); ++k) {
    if (snapshots_[k].step() != k) {
      throw DataError(fmt::format("snapshot at position {} has step index {}", k,
                                  snapshots_[k].step()));
    }
    if (snapshots_[k].node_universe() != node_universe_) {
      throw DataError(fmt::format("snapshot {} has node universe {}, expected {}", k,
                                  snapshots_[k].node_universe(), node_universe_));
    }
  }
  if (!external_ids_.empty() && external_ids_.size() != node_universe_) {
    throw DataError("external id table does not cover the node universe");
  }
}

const GraphSnapshot& DynamicGraph::at(std::size_t k) const {
  if (k >= snapshots_.size()) {
    throw ContractError(fmt::format("step {} out of range (K = {})", k, snapshots_.size()));
  }
  return snapshots_[k];
}

std::size_t DynamicGraph::distinct_edge_count() const {
  std::unordered_set<std::uint64_t> seen;
  for (const auto& s : snapshots_)
    for (const auto& e : s.edges()) seen.insert(pair_key(e.u, e.v));
  return seen.size();
}

double edge_evolution(const GraphSnapshot& prev, const GraphSnapshot& curr) {
  if (curr.edges().empty()) {
    throw UndefinedMetricError(
        fmt::format("edge evolution undefined: snapshot {} has no edges", curr.step()));
  }
  std::unordered_set<std::uint64_t> before;
  before.reserve(prev.edges().size());
  for (const auto& e : prev.edges()) before.insert(pair_key(e.u, e.v));
  std::size_t kept = 0;
  for (const auto& e : curr.edges()) kept += before.count(pair_key(e.u, e.v));
  return (1.0 - static_cast<double>(kept) / static_cast<double>(curr.edges().size())) * 100.0;
}

double node_evolution(const GraphSnapshot& prev, const GraphSnapshot& curr) {
  if (curr.active_nodes().empty()) {
    throw UndefinedMetricError(
        fmt::format("node evolution undefined: snapshot {} has no active nodes", curr.step()));
  }
  std::size_t kept = 0;
  for (const NodeId v : curr.active_nodes()) kept += prev.is_active(v) ? 1 : 0;
  return (1.0 - static_cast<double>(kept) / static_cast<double>(curr.active_nodes().size())) *
         100.0;
}

EvolutionStats evolution_stats(const DynamicGraph& dyn) {
  EvolutionStats stats;
  for (std::size_t k = 1; k < dyn.size(); ++k) {
    stats.edge_evolution.push_back(edge_evolution(dyn[k - 1], dyn[k]));
    stats.node_evolution.push_back(node_evolution(dyn[k - 1], dyn[k]));
  }
  return stats;
}

}  // namespace vstream
