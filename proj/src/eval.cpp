#include "vstream/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/core.h>

#include "vstream/error.hpp"

namespace vstream {

TestSet build_test_set(const DynamicGraph& dyn, std::size_t k, TruthRule rule) {
  if (k >= dyn.size()) {
    throw ContractError(fmt::format("build_test_set: step {} out of range (K = {})", k, dyn.size()));
  }
  if (k + 1 == dyn.size()) {
    throw EmptyTestSetError(fmt::format("step {} is the last snapshot: no future edges", k));
  }
  const GraphSnapshot& current = dyn[k];
  struct Accumulator {
    double first = 0.0;
    double total = 0.0;
    std::size_t seen = 0;
  };
  std::map<std::uint64_t, Accumulator> future;
  for (std::size_t j = k + 1; j < dyn.size(); ++j) {
    for (const auto& e : dyn[j].edges()) {
      if (current.weight(e.u, e.v) > 0.0) continue;
      auto& acc = future[pair_key(e.u, e.v)];
      if (acc.seen == 0) acc.first = e.weight;
      acc.total += e.weight;
      ++acc.seen;
    }
  }
  if (future.empty()) {
    throw EmptyTestSetError(fmt::format("no unobserved future edges after step {}", k));
  }
  TestSet test{k, {}};
  test.pairs.reserve(future.size());
  for (const auto& [key, acc] : future) {
    const double truth = rule == TruthRule::Earliest ? acc.first
                                                     : acc.total / static_cast<double>(acc.seen);
    test.pairs.push_back(
        {static_cast<NodeId>(key >> 32), static_cast<NodeId>(key & 0xffffffffULL), truth});
  }
  return test;
}

double predict_inner(const Embedding& z, NodeId u, NodeId v) {
  if (u >= z.z.rows() || v >= z.z.rows()) {
    throw ContractError(fmt::format("predict_inner: node pair ({}, {}) outside embedding of {} rows",
                                    u, v, z.z.rows()));
  }
  const auto zu = z.z.row(u);
  const auto zv = z.z.row(v);
  double acc = 0.0;
  for (std::size_t j = 0; j < zu.size(); ++j) acc += zu[j] * zv[j];
  return relu(acc);
}

ParamList MlpHead::parameters() {
  return {{"mlp_w1", &w1}, {"mlp_b1", &b1}, {"mlp_w2", &w2}, {"mlp_b2", &b2}};
}

MlpHead init_mlp_head(std::size_t embedding_dim, std::size_t hidden, std::uint64_t seed) {
  MlpHead head;
  head.w1 = glorot_init(2 * embedding_dim, hidden, derive_seed(seed, 1));
  head.b1 = Matrix(1, hidden);
  head.w2 = glorot_init(hidden, 1, derive_seed(seed, 2));
  head.b2 = Matrix(1, 1);
  return head;
}

namespace {

void fill_input(const MlpHead& head, const Embedding& z, NodeId u, NodeId v, std::span<double> out) {
  const auto zu = z.z.row(u);
  const auto zv = z.z.row(v);
  const std::size_t d = zu.size();
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = zu[j] / head.input_scale;
    out[d + j] = zv[j] / head.input_scale;
  }
}

double head_forward(const MlpHead& head, std::span<const double> x, std::vector<double>& hidden) {
  const std::size_t h = head.w1.cols();
  hidden.assign(h, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0.0) continue;
    const auto w_row = head.w1.row(i);
    for (std::size_t j = 0; j < h; ++j) hidden[j] += x[i] * w_row[j];
  }
  double out = head.b2(0, 0);
  for (std::size_t j = 0; j < h; ++j) {
    hidden[j] += head.b1(0, j);
    out += relu(hidden[j]) * head.w2(j, 0);
  }
  return out;
}

}  // namespace

MlpSamples mlp_samples(const MlpHead& head, const Embedding& z, const GraphSnapshot& snapshot) {
  const std::size_t d = z.z.cols();
  if (head.w1.rows() != 2 * d) {
    throw DimensionError(fmt::format("MLP head expects {}-wide inputs, embedding has {} columns",
                                     head.w1.rows(), d));
  }
  MlpSamples samples{Matrix(2 * snapshot.edges().size(), 2 * d), {}};
  std::size_t row = 0;
  for (const auto& e : snapshot.edges()) {
    fill_input(head, z, e.u, e.v, samples.inputs.row(row++));
    samples.targets.push_back(e.weight / head.target_scale);
    fill_input(head, z, e.v, e.u, samples.inputs.row(row++));
    samples.targets.push_back(e.weight / head.target_scale);
  }
  return samples;
}

double mlp_loss_and_gradients(const MlpHead& head, const MlpSamples& samples, Gradients* grads) {
  const std::size_t m = samples.targets.size();
  if (m == 0) throw ContractError("MLP loss on an empty sample set");
  Matrix pre = matmul(samples.inputs, head.w1);
  for (std::size_t i = 0; i < m; ++i) {
    auto row = pre.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += head.b1(0, j);
  }
  const Matrix activated = relu(pre);
  const Matrix output = matmul(activated, head.w2);

  double loss = 0.0;
  Matrix d_out(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    const double r = output(i, 0) + head.b2(0, 0) - samples.targets[i];
    loss += r * r;
    d_out(i, 0) = 2.0 * r / static_cast<double>(m);
  }
  loss /= static_cast<double>(m);
  if (grads == nullptr) return loss;

  Matrix d_w2 = matmul_tn(activated, d_out);
  Matrix d_b2(1, 1);
  for (std::size_t i = 0; i < m; ++i) d_b2(0, 0) += d_out(i, 0);
  Matrix d_pre = matmul_nt(d_out, head.w2);
  for (std::size_t i = 0; i < d_pre.size(); ++i) d_pre.data()[i] *= relu_grad(pre.data()[i]);
  Matrix d_b1(1, head.b1.cols());
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = d_pre.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) d_b1(0, j) += row[j];
  }
  (*grads)["mlp_w1"] = matmul_tn(samples.inputs, d_pre);
  (*grads)["mlp_b1"] = std::move(d_b1);
  (*grads)["mlp_w2"] = std::move(d_w2);
  (*grads)["mlp_b2"] = std::move(d_b2);
  return loss;
}

MlpHead train_mlp_head(const Embedding& z, const GraphSnapshot& snapshot, const MlpConfig& cfg) {
  if (snapshot.edges().empty()) {
    throw ContractError(fmt::format("cannot train an MLP head: snapshot {} has no edges",
                                    snapshot.step()));
  }
  const std::size_t d = z.z.cols();
  const std::size_t hidden = cfg.hidden == 0 ? d : cfg.hidden;
  MlpHead head = init_mlp_head(d, hidden, cfg.seed);

  double sum_sq = 0.0;
  std::size_t count = 0;
  for (const NodeId v : snapshot.active_nodes()) {
    for (const double x : z.z.row(v)) sum_sq += x * x;
    count += d;
  }
  const double rms = count == 0 ? 0.0 : std::sqrt(sum_sq / static_cast<double>(count));
  head.input_scale = rms > 0.0 ? rms : 1.0;
  double total = 0.0;
  for (const auto& e : snapshot.edges()) total += e.weight;
  head.target_scale = total / static_cast<double>(snapshot.edges().size());
  // Targets average 1 after rescaling; start the output bias there.
  head.b2(0, 0) = 1.0;

  const MlpSamples samples = mlp_samples(head, z, snapshot);
  AdamState adam;
  adam.hyper.learning_rate = cfg.learning_rate;
  const ParamList params = head.parameters();
  Gradients grads;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = mlp_loss_and_gradients(head, samples, &grads);
    if (!std::isfinite(loss)) {
      throw NumericError(fmt::format("MLP head loss is not finite at epoch {}", epoch + 1));
    }
    adam_step(params, grads, adam);
  }
  return head;
}

double mlp_output(const MlpHead& head, const Embedding& z, NodeId u, NodeId v) {
  if (u >= z.z.rows() || v >= z.z.rows()) {
    throw ContractError(fmt::format("predict_mlp: node pair ({}, {}) outside embedding", u, v));
  }
  std::vector<double> x(2 * z.z.cols());
  std::vector<double> hidden;
  fill_input(head, z, u, v, x);
  return head_forward(head, x, hidden) * head.target_scale;
}

double predict_mlp(const MlpHead& head, const Embedding& z, NodeId u, NodeId v) {
  return relu(0.5 * (mlp_output(head, z, u, v) + mlp_output(head, z, v, u)));
}

Score score(const TestSet& test, const Predictor& predict) {
  if (test.pairs.empty()) {
    throw EmptyTestSetError(fmt::format("cannot score an empty test set (step {})", test.step));
  }
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (const auto& p : test.pairs) {
    const double r = predict(p.u, p.v) - p.weight;
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  const double n = static_cast<double>(test.pairs.size());
  return Score{abs_sum / n, std::sqrt(sq_sum / n), test.pairs.size()};
}

std::string to_string(Head head) { return head == Head::Inner ? "inner" : "mlp"; }

Head parse_head(const std::string& text) {
  if (text == "inner") return Head::Inner;
  if (text == "mlp") return Head::Mlp;
  throw ConfigError(fmt::format("unknown head '{}' (expected inner or mlp)", text));
}

StepReport evaluate_step(const DynamicGraph& dyn, std::size_t k, const Embedding& z, Head head,
                         const MlpConfig& mlp, TruthRule rule) {
  const TestSet test = build_test_set(dyn, k, rule);
  Score s;
  if (head == Head::Inner) {
    s = score(test, [&](NodeId u, NodeId v) { return predict_inner(z, u, v); });
  } else {
    const MlpHead trained = train_mlp_head(z, dyn[k], mlp);
    s = score(test, [&](NodeId u, NodeId v) { return predict_mlp(trained, z, u, v); });
  }
  return StepReport{k, s.count, s.mae, s.rmse};
}

void write_report_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write report '{}'", path));
  out << "step,k,|O_k|,MAE,RMSE,head\n";
  for (std::size_t i = 0; i < report.steps.size(); ++i) {
    const auto& s = report.steps[i];
    out << fmt::format("{},{},{},{:.17g},{:.17g},{}\n", i, s.k, s.test_size, s.mae, s.rmse,
                       to_string(report.head));
  }
  if (!out) throw IoError(fmt::format("failed writing report '{}'", path));
}

void write_comparison_csv(const std::vector<EvalReport>& reports, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write comparison '{}'", path));
  out << "model,k,|O_k|,MAE,RMSE,head\n";
  for (const auto& r : reports) {
    for (const auto& s : r.steps) {
      out << fmt::format("{},{},{},{:.17g},{:.17g},{}\n", r.model, s.k, s.test_size, s.mae, s.rmse,
                         to_string(r.head));
    }
  }
  if (!out) throw IoError(fmt::format("failed writing comparison '{}'", path));
}

}  // namespace vstream
