#pragma once

// Brute-force dense reference implementations used only by the tests. They
// follow the defining formulas literally, with no sparsity or caching.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "vstream/graphcore.hpp"
#include "vstream/numkit.hpp"

namespace oracle {

using vstream::Edge;
using vstream::GraphSnapshot;
using vstream::Matrix;
using vstream::NodeId;

inline Matrix dense_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// D^-1/2 (A + I) D^-1/2 restricted to active nodes; inactive nodes get 1 on
/// the diagonal only.
inline Matrix normalize(const Matrix& a, const std::vector<bool>& active) {
  const std::size_t n = a.rows();
  Matrix tilde = a;
  for (std::size_t i = 0; i < n; ++i) tilde(i, i) += 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += tilde(i, j);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!active[i] || !active[j]) continue;
      out(i, j) = tilde(i, j) / std::sqrt(deg[i] * deg[j]);
    }
    if (!active[i]) out(i, i) = 1.0;
  }
  return out;
}

inline std::vector<bool> active_mask(const GraphSnapshot& g) {
  std::vector<bool> mask(g.node_universe(), false);
  for (const auto v : g.active_nodes()) mask[v] = true;
  return mask;
}

inline double elu(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One attention step straight from the definition, neighbours of v visited
/// in increasing id order. Also returns alpha per (u, v).
inline Matrix evolve(const Matrix& w_prev, const Matrix& h, const Matrix& a, const Matrix& adj,
                     std::map<std::pair<std::size_t, std::size_t>, double>* alpha_out = nullptr) {
  const std::size_t n = w_prev.rows();
  const std::size_t d = w_prev.cols();
  // P(u) = H w_prev(u), i.e. row u of w_prev H^T.
  Matrix p(n, d);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += h(i, j) * w_prev(u, j);
      p(u, i) = s;
    }
  Matrix out = w_prev;
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::size_t> nbrs;
    for (std::size_t u = 0; u < n; ++u)
      if (adj(u, v) != 0.0) nbrs.push_back(u);
    if (nbrs.empty()) continue;
    std::vector<double> c;
    for (const auto u : nbrs) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += a(i, 0) * p(u, i) + a(d + i, 0) * p(v, i);
      c.push_back(sigmoid(adj(u, v) * s));
    }
    double denom = 0.0;
    for (const double x : c) denom += std::exp(x);
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < nbrs.size(); ++t) s += std::exp(c[t]) / denom * p(nbrs[t], i);
      out(v, i) = elu(s);
    }
    if (alpha_out)
      for (std::size_t t = 0; t < nbrs.size(); ++t)
        (*alpha_out)[{nbrs[t], v}] = std::exp(c[t]) / denom;
  }
  return out;
}

/// Z = Â W1 -> ReLU -> (Â Z W_l, ReLU except last). A single layer is linear.
inline Matrix gcn(const Matrix& a_hat, const Matrix& w1, const std::vector<Matrix>& upper) {
  Matrix z = dense_matmul(a_hat, w1);
  for (const auto& w : upper) {
    for (auto& x : z.data()) x = std::max(0.0, x);
    z = dense_matmul(dense_matmul(a_hat, z), w);
  }
  return z;
}

/// The double sum over ordered neighbour pairs, divided by the active count.
inline double loss(const Matrix& z, const Matrix& adj, const std::vector<bool>& active) {
  double total = 0.0;
  std::size_t n_active = 0;
  for (std::size_t v = 0; v < adj.rows(); ++v) {
    if (!active[v]) continue;
    ++n_active;
    for (std::size_t u = 0; u < adj.rows(); ++u) {
      if (adj(u, v) == 0.0) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < z.cols(); ++j) dot += z(u, j) * z(v, j);
      const double r = std::max(0.0, dot) - adj(u, v);
      total += r * r;
    }
  }
  return std::sqrt(total / static_cast<double>(n_active));
}

inline std::pair<double, double> mae_rmse(const std::vector<double>& residuals) {
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const double r : residuals) {
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  const auto n = static_cast<double>(residuals.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

/// Pairs present in some snapshot after k but not in snapshot k, with the
/// weight of their earliest future appearance.
inline std::map<std::pair<NodeId, NodeId>, double> future_pairs(
    const std::vector<std::vector<Edge>>& snapshots, std::size_t k) {
  std::set<std::pair<NodeId, NodeId>> present;
  for (const auto& e : snapshots[k]) present.insert({std::min(e.u, e.v), std::max(e.u, e.v)});
  std::map<std::pair<NodeId, NodeId>, double> out;
  for (std::size_t t = k + 1; t < snapshots.size(); ++t)
    for (const auto& e : snapshots[t]) {
      const std::pair key{std::min(e.u, e.v), std::max(e.u, e.v)};
      if (!present.contains(key) && !out.contains(key)) out[key] = e.weight;
    }
  return out;
}

inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    for (std::size_t t = i; t <= j; ++t) r[idx[t]] = 0.5 * static_cast<double>(i + j);
    i = j + 1;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Random instance generators for the property tests.

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(r, c);
  for (auto& x : m.data()) x = dist(rng);
  return m;
}

/// Random undirected graph; each pair is an edge with probability p, weights
/// in [lo, hi]. Some nodes may end up inactive.
inline std::vector<Edge> random_edges(std::size_t n, double p, std::mt19937_64& rng,
                                      double lo = 0.5, double hi = 2.0) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_real_distribution<double> weight(lo, hi);
  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (coin(rng) < p) edges.push_back({u, v, weight(rng)});
  return edges;
}

}  // namespace oracle
