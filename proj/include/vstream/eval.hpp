#pragma once

// Link-weight prediction protocol: future-edge test sets, prediction heads
// and MAE/RMSE scoring.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vstream/graphcore.hpp"
#include "vstream/model.hpp"
#include "vstream/numkit.hpp"

namespace vstream {

struct TestPair {
  NodeId u;
  NodeId v;
  double weight;

  bool operator==(const TestPair&) const = default;
};

/// Unordered pairs that are absent at step k but appear in a later snapshot.
struct TestSet {
  std::size_t step = 0;
  std::vector<TestPair> pairs;  // u < v, sorted
};

/// How the true weight of a future edge seen in several snapshots is chosen.
enum class TruthRule { Earliest, Mean };

/// Union of edges over snapshots k+1..K-1 minus the edges of snapshot k.
/// Throws EmptyTestSetError when k is the last step or nothing new appears.
TestSet build_test_set(const DynamicGraph& dyn, std::size_t k,
                       TruthRule rule = TruthRule::Earliest);

/// ReLU(z_u . z_v), the same prediction the reconstruction loss uses.
double predict_inner(const Embedding& z, NodeId u, NodeId v);

/// Two affine layers 2d -> hidden -> 1 with ReLU in between. Inputs and
/// targets are rescaled internally so the head trains at unit scale.
struct MlpHead {
  Matrix w1;  // 2d x hidden
  Matrix b1;  // 1 x hidden
  Matrix w2;  // hidden x 1
  Matrix b2;  // 1 x 1
  double input_scale = 1.0;
  double target_scale = 1.0;

  ParamList parameters();
};

struct MlpConfig {
  std::size_t hidden = 0;  // 0 means the embedding dimension
  std::size_t epochs = 1000;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
};

/// Head with Glorot weights and zero biases, scales fixed at 1.
MlpHead init_mlp_head(std::size_t embedding_dim, std::size_t hidden, std::uint64_t seed);

/// Training samples: both orderings (u,v) and (v,u) of every edge in `snapshot`.
struct MlpSamples {
  Matrix inputs;   // rows are [z_u || z_v] / input_scale
  std::vector<double> targets;  // weight / target_scale
};

MlpSamples mlp_samples(const MlpHead& head, const Embedding& z, const GraphSnapshot& snapshot);

/// Mean squared error of the head on the samples and its gradients.
double mlp_loss_and_gradients(const MlpHead& head, const MlpSamples& samples, Gradients* grads);

/// Fits a head by full-batch Adam on the observed edges of `snapshot`.
/// Throws ContractError when the snapshot has no edges.
MlpHead train_mlp_head(const Embedding& z, const GraphSnapshot& snapshot, const MlpConfig& cfg);

/// Raw head output for the ordered pair (u, v) in weight units.
double mlp_output(const MlpHead& head, const Embedding& z, NodeId u, NodeId v);
/// Mean of both orderings, floor-clipped at 0.
double predict_mlp(const MlpHead& head, const Embedding& z, NodeId u, NodeId v);

using Predictor = std::function<double(NodeId, NodeId)>;

struct Score {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

/// MAE and RMSE of `predict` over every pair; EmptyTestSetError when empty.
Score score(const TestSet& test, const Predictor& predict);

enum class Head { Inner, Mlp };

std::string to_string(Head head);
Head parse_head(const std::string& text);

struct StepReport {
  std::size_t k = 0;
  std::size_t test_size = 0;
  double mae = 0.0;
  double rmse = 0.0;
};

struct EvalReport {
  std::string model = "vstream";
  Head head = Head::Inner;
  std::string fingerprint;
  std::vector<StepReport> steps;
};

/// Scores embedding `z` (trained on snapshot k of `dyn`) on O_k with `head`.
StepReport evaluate_step(const DynamicGraph& dyn, std::size_t k, const Embedding& z, Head head,
                         const MlpConfig& mlp = {}, TruthRule rule = TruthRule::Earliest);

/// CSV with header `step,k,|O_k|,MAE,RMSE,head`; `step` numbers the rows.
void write_report_csv(const EvalReport& report, const std::string& path);
/// Side-by-side table of several reports, header `model,k,|O_k|,MAE,RMSE,head`.
void write_comparison_csv(const std::vector<EvalReport>& reports, const std::string& path);

}  // namespace vstream
