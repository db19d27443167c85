#pragma once

// Windowed GCN whose first-layer weights are evolved across snapshots by
// self-attention, plus the reconstruction loss and its analytic gradient.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vstream/graphcore.hpp"
#include "vstream/numkit.hpp"

namespace vstream {

struct ModelConfig {
  std::size_t window = 3;
  // [d1, d2, ..., dL]; hidden layers use ReLU, the last layer is linear.
  std::vector<std::size_t> layer_dims{32, 16};
  // When false the first layer uses W1_base directly (static GCN).
  bool evolve = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an empty window or a zero dimension.
  void validate() const;
  std::size_t first_dim() const { return layer_dims.front(); }
  std::size_t embedding_dim() const { return layer_dims.back(); }
};

/// All trainable parameters of one windowed model.
struct ModelState {
  Matrix base_weight;                 // node_universe x d1
  std::vector<Matrix> transforms;     // per window step, d1 x d1
  std::vector<Matrix> attention;      // per window step, (2 d1) x 1
  std::vector<Matrix> upper_weights;  // W2..WL, d_{l-1} x d_l

  /// Glorot initialisation of every parameter, each from its own derived seed.
  static ModelState initialize(std::size_t node_universe, const ModelConfig& cfg);

  std::size_t window() const { return transforms.size(); }
  std::size_t node_universe() const { return base_weight.rows(); }

  /// Every parameter with its checkpoint name: W1_base, H_i, a_i, W2..WL.
  ParamList parameters();
  std::vector<std::pair<std::string, const Matrix*>> parameters() const;
  /// Zero-filled gradients for every parameter.
  Gradients zero_gradients() const;

  bool operator==(const ModelState&) const = default;
};

struct Embedding {
  Matrix z;
  std::size_t step = 0;
};

/// Intermediates of one attention step, kept for the backward pass. Per-edge
/// vectors are aligned with the CSR layout of the snapshot adjacency: entry k
/// of row v belongs to the neighbour col_idx[k].
struct EvolutionCache {
  Matrix projected;       // rows are H * w_prev(u)
  Matrix pre_activation;  // attention-weighted sums before ELU
  std::vector<double> score;
  std::vector<double> coefficient;
  std::vector<double> alpha;
};

/// One attention step. For each node v with neighbours N_v:
///   c_uv  = sigmoid(A(u,v) * a^T [H w(u) || H w(v)])
///   alpha = softmax_{u in N_v}(c_uv)
///   w'(v) = ELU(sum_u alpha_uv H w(u))
/// Nodes without neighbours keep their previous row.
Matrix evolve_weights(const Matrix& w_prev, const Matrix& h, const Matrix& a,
                      const GraphSnapshot& snapshot, EvolutionCache* cache = nullptr);

struct EvolutionGrads {
  Matrix w_prev;
  Matrix h;
  Matrix a;
};

EvolutionGrads evolve_weights_backward(const Matrix& w_prev, const Matrix& h, const Matrix& a,
                                       const GraphSnapshot& snapshot,
                                       const EvolutionCache& cache, const Matrix& d_out);

struct GcnCache {
  Matrix first_layer;
  std::vector<Matrix> aggregated;       // Â Z^{l-1} for layers 2..L
  std::vector<Matrix> pre_activations;  // per layer
};

/// Z = GCN with identity node features, so the first layer is Â·W1.
Embedding gcn_forward(const SparseMatrix& a_hat, const Matrix& first_layer,
                      std::span<const Matrix> upper_weights, GcnCache* cache = nullptr);
/// General node features: first layer is Â·X·W1.
Embedding gcn_forward(const SparseMatrix& a_hat, const Matrix& features,
                      const Matrix& first_layer, std::span<const Matrix> upper_weights);

struct GcnGrads {
  Matrix first_layer;
  std::vector<Matrix> upper_weights;
};

GcnGrads gcn_backward(const SparseMatrix& a_hat, std::span<const Matrix> upper_weights,
                      const GcnCache& cache, const Matrix& d_z);

struct ForwardCache {
  std::vector<Matrix> evolved;  // W1 after each window step
  std::vector<EvolutionCache> steps;
  GcnCache gcn;
};

/// Evolves W1 through every snapshot in `window` (oldest first) and runs the
/// full GCN on the last one.
Embedding vstream_forward(std::span<const GraphSnapshot> window, const ModelState& state,
                          const ModelConfig& cfg, ForwardCache* cache = nullptr);

/// sqrt((1/n_k) * sum_v sum_{u in N_v} (ReLU(z_u . z_v) - A(u,v))^2), n_k the
/// active node count; each undirected edge enters twice.
double reconstruction_loss(const Embedding& z, const GraphSnapshot& snapshot);

/// dLoss/dZ given the loss value computed on the same inputs.
Matrix reconstruction_loss_grad(const Embedding& z, const GraphSnapshot& snapshot, double loss);

struct LossAndGradients {
  double loss = 0.0;
  Gradients gradients;
  Embedding embedding;
};

LossAndGradients loss_and_gradients(std::span<const GraphSnapshot> window,
                                    const ModelState& state, const ModelConfig& cfg);

/// Aggregate statistics over every attention row produced in this process.
struct AttentionAudit {
  std::uint64_t rows = 0;
  std::uint64_t non_positive = 0;
  double max_sum_deviation = 0.0;
  double min_alpha = 1.0;
};

AttentionAudit attention_audit();
void reset_attention_audit();

}  // namespace vstream
