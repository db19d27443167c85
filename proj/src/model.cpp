#include "vstream/model.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fmt/core.h>

#include "vstream/error.hpp"

namespace vstream {

namespace {

std::mutex audit_mutex;
AttentionAudit audit_totals;

void record_attention(const AttentionAudit& local) {
  std::lock_guard lock(audit_mutex);
  audit_totals.rows += local.rows;
  audit_totals.non_positive += local.non_positive;
  audit_totals.max_sum_deviation = std::max(audit_totals.max_sum_deviation, local.max_sum_deviation);
  audit_totals.min_alpha = std::min(audit_totals.min_alpha, local.min_alpha);
}

double dot(std::span<const double> x, std::span<const double> y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

void check_evolution_shapes(const Matrix& w_prev, const Matrix& h, const Matrix& a,
                            const GraphSnapshot& snapshot) {
  const std::size_t d1 = w_prev.cols();
  if (w_prev.rows() != snapshot.node_universe()) {
    throw DimensionError(fmt::format("evolve_weights: weight {} does not cover {} nodes",
                                     w_prev.shape_string(), snapshot.node_universe()));
  }
  if (h.rows() != d1 || h.cols() != d1) {
    throw DimensionError(fmt::format("evolve_weights: transform {} incompatible with weight {}",
                                     h.shape_string(), w_prev.shape_string()));
  }
  if (a.size() != 2 * d1) {
    throw DimensionError(fmt::format("evolve_weights: attention vector {} needs {} entries",
                                     a.shape_string(), 2 * d1));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (window < 1) throw ConfigError("model window must be >= 1");
  if (layer_dims.empty()) throw ConfigError("model needs at least one layer");
  for (const auto d : layer_dims) {
    if (d < 1) throw ConfigError("layer dimensions must be >= 1");
  }
}

ModelState ModelState::initialize(std::size_t node_universe, const ModelConfig& cfg) {
  cfg.validate();
  if (node_universe == 0) throw ContractError("cannot initialise a model over zero nodes");
  const std::size_t d1 = cfg.first_dim();
  ModelState s;
  s.base_weight = glorot_init(node_universe, d1, derive_seed(cfg.seed, 0));
  for (std::size_t i = 0; i < cfg.window; ++i) {
    s.transforms.push_back(glorot_init(d1, d1, derive_seed(cfg.seed, 100 + i)));
    s.attention.push_back(glorot_init(2 * d1, 1, derive_seed(cfg.seed, 200 + i)));
  }
  for (std::size_t l = 1; l < cfg.layer_dims.size(); ++l) {
    s.upper_weights.push_back(
        glorot_init(cfg.layer_dims[l - 1], cfg.layer_dims[l], derive_seed(cfg.seed, 300 + l)));
  }
  return s;
}

ParamList ModelState::parameters() {
  ParamList out;
  out.push_back({"W1_base", &base_weight});
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    out.push_back({fmt::format("H_{}", i), &transforms[i]});
  }
  for (std::size_t i = 0; i < attention.size(); ++i) {
    out.push_back({fmt::format("a_{}", i), &attention[i]});
  }
  for (std::size_t l = 0; l < upper_weights.size(); ++l) {
    out.push_back({fmt::format("W{}", l + 2), &upper_weights[l]});
  }
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelState::parameters() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  for (const auto& p : const_cast<ModelState*>(this)->parameters()) {
    out.emplace_back(p.name, p.value);
  }
  return out;
}

Gradients ModelState::zero_gradients() const {
  Gradients g;
  for (const auto& [name, m] : parameters()) g.emplace(name, Matrix(m->rows(), m->cols()));
  return g;
}

Matrix evolve_weights(const Matrix& w_prev, const Matrix& h, const Matrix& a,
                      const GraphSnapshot& snapshot, EvolutionCache* cache) {
  check_evolution_shapes(w_prev, h, a, snapshot);
  const std::size_t n = w_prev.rows();
  const std::size_t d1 = w_prev.cols();
  const SparseMatrix& adj = snapshot.adjacency();
  const std::span<const double> a_src(a.data().data(), d1);
  const std::span<const double> a_dst(a.data().data() + d1, d1);

  Matrix projected = matmul_nt(w_prev, h);
  std::vector<double> src(n), dst(n);
  for (std::size_t u = 0; u < n; ++u) {
    src[u] = dot(a_src, projected.row(u));
    dst[u] = dot(a_dst, projected.row(u));
  }

  const std::size_t nnz = adj.nonzeros();
  std::vector<double> score(nnz), coefficient(nnz), alpha(nnz);
  Matrix pre(n, d1);
  Matrix out = w_prev;
  AttentionAudit local;

  const auto& row_ptr = adj.row_ptr();
  const auto& col_idx = adj.col_idx();
  const auto& values = adj.values();
  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t begin = row_ptr[v];
    const std::size_t end = row_ptr[v + 1];
    if (begin == end) continue;
    for (std::size_t k = begin; k < end; ++k) {
      score[k] = values[k] * (src[col_idx[k]] + dst[v]);
      coefficient[k] = sigmoid(score[k]);
    }
    const auto weights =
        softmax(std::span<const double>(coefficient.data() + begin, end - begin));
    std::copy(weights.begin(), weights.end(), alpha.begin() + static_cast<std::ptrdiff_t>(begin));

    auto pre_row = pre.row(v);
    double total = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const auto p_row = projected.row(col_idx[k]);
      for (std::size_t j = 0; j < d1; ++j) pre_row[j] += alpha[k] * p_row[j];
      total += alpha[k];
      local.min_alpha = std::min(local.min_alpha, alpha[k]);
      if (!(alpha[k] > 0.0)) ++local.non_positive;
    }
    ++local.rows;
    local.max_sum_deviation = std::max(local.max_sum_deviation, std::abs(total - 1.0));

    auto out_row = out.row(v);
    for (std::size_t j = 0; j < d1; ++j) out_row[j] = elu(pre_row[j]);
  }
  record_attention(local);

  if (cache != nullptr) {
    cache->projected = std::move(projected);
    cache->pre_activation = std::move(pre);
    cache->score = std::move(score);
    cache->coefficient = std::move(coefficient);
    cache->alpha = std::move(alpha);
  }
  return out;
}

EvolutionGrads evolve_weights_backward(const Matrix& w_prev, const Matrix& h, const Matrix& a,
                                       const GraphSnapshot& snapshot,
                                       const EvolutionCache& cache, const Matrix& d_out) {
  check_evolution_shapes(w_prev, h, a, snapshot);
  if (!d_out.same_shape(w_prev)) {
    throw DimensionError(fmt::format("evolve_weights_backward: upstream {} vs weight {}",
                                     d_out.shape_string(), w_prev.shape_string()));
  }
  const std::size_t n = w_prev.rows();
  const std::size_t d1 = w_prev.cols();
  const SparseMatrix& adj = snapshot.adjacency();
  const auto& row_ptr = adj.row_ptr();
  const auto& col_idx = adj.col_idx();
  const auto& values = adj.values();
  const Matrix& projected = cache.projected;

  EvolutionGrads g{Matrix(n, d1), Matrix(d1, d1), Matrix(2 * d1, 1)};
  Matrix d_projected(n, d1);
  std::vector<double> d_src(n, 0.0), d_dst(n, 0.0);
  std::vector<double> d_pre(d1), d_alpha;

  for (std::size_t v = 0; v < n; ++v) {
    const std::size_t begin = row_ptr[v];
    const std::size_t end = row_ptr[v + 1];
    const auto up = d_out.row(v);
    if (begin == end) {
      auto carry = g.w_prev.row(v);
      for (std::size_t j = 0; j < d1; ++j) carry[j] += up[j];
      continue;
    }
    const auto pre_row = cache.pre_activation.row(v);
    for (std::size_t j = 0; j < d1; ++j) d_pre[j] = up[j] * elu_grad(pre_row[j]);

    d_alpha.assign(end - begin, 0.0);
    double weighted = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t u = col_idx[k];
      d_alpha[k - begin] = dot(d_pre, projected.row(u));
      weighted += cache.alpha[k] * d_alpha[k - begin];
      auto dp_row = d_projected.row(u);
      for (std::size_t j = 0; j < d1; ++j) dp_row[j] += cache.alpha[k] * d_pre[j];
    }
    for (std::size_t k = begin; k < end; ++k) {
      const double d_coef = cache.alpha[k] * (d_alpha[k - begin] - weighted);
      const double c = cache.coefficient[k];
      const double d_score = d_coef * c * (1.0 - c);
      d_src[col_idx[k]] += d_score * values[k];
      d_dst[v] += d_score * values[k];
    }
  }

  for (std::size_t u = 0; u < n; ++u) {
    if (d_src[u] == 0.0 && d_dst[u] == 0.0) continue;
    const auto p_row = projected.row(u);
    auto dp_row = d_projected.row(u);
    for (std::size_t j = 0; j < d1; ++j) {
      g.a.data()[j] += d_src[u] * p_row[j];
      g.a.data()[d1 + j] += d_dst[u] * p_row[j];
      dp_row[j] += d_src[u] * a.data()[j] + d_dst[u] * a.data()[d1 + j];
    }
  }

  g.w_prev += matmul(d_projected, h);
  g.h = matmul_tn(d_projected, w_prev);
  return g;
}

Embedding gcn_forward(const SparseMatrix& a_hat, const Matrix& first_layer,
                      std::span<const Matrix> upper_weights, GcnCache* cache) {
  if (a_hat.cols() != first_layer.rows()) {
    throw DimensionError(fmt::format("gcn_forward: Â ({}x{}) vs first-layer weight {}",
                                     a_hat.rows(), a_hat.cols(), first_layer.shape_string()));
  }
  const std::size_t layers = upper_weights.size() + 1;
  Matrix pre = spmm(a_hat, first_layer);
  if (cache != nullptr) {
    cache->first_layer = first_layer;
    cache->aggregated.clear();
    cache->pre_activations.clear();
    cache->pre_activations.push_back(pre);
  }
  Matrix z = layers == 1 ? std::move(pre) : relu(pre);
  for (std::size_t l = 0; l < upper_weights.size(); ++l) {
    const Matrix& w = upper_weights[l];
    if (z.cols() != w.rows()) {
      throw DimensionError(fmt::format("gcn_forward: layer {} input {} vs weight {}", l + 2,
                                       z.shape_string(), w.shape_string()));
    }
    Matrix aggregated = spmm(a_hat, z);
    Matrix s = matmul(aggregated, w);
    const bool last = l + 1 == upper_weights.size();
    z = last ? s : relu(s);
    if (cache != nullptr) {
      cache->aggregated.push_back(std::move(aggregated));
      cache->pre_activations.push_back(std::move(s));
    }
  }
  return Embedding{std::move(z), 0};
}

Embedding gcn_forward(const SparseMatrix& a_hat, const Matrix& features,
                      const Matrix& first_layer, std::span<const Matrix> upper_weights) {
  if (features.rows() != a_hat.cols()) {
    throw DimensionError(fmt::format("gcn_forward: Â ({}x{}) vs features {}", a_hat.rows(),
                                     a_hat.cols(), features.shape_string()));
  }
  if (features.cols() != first_layer.rows()) {
    throw DimensionError(fmt::format("gcn_forward: features {} vs first-layer weight {}",
                                     features.shape_string(), first_layer.shape_string()));
  }
  return gcn_forward(a_hat, matmul(features, first_layer), upper_weights);
}

GcnGrads gcn_backward(const SparseMatrix& a_hat, std::span<const Matrix> upper_weights,
                      const GcnCache& cache, const Matrix& d_z) {
  const std::size_t layers = upper_weights.size() + 1;
  GcnGrads g;
  g.upper_weights.resize(upper_weights.size());
  Matrix d_s = d_z;
  for (std::size_t l = layers - 1; l >= 1; --l) {
    if (l + 1 < layers) {
      const Matrix& s = cache.pre_activations[l];
      for (std::size_t i = 0; i < d_s.size(); ++i) d_s.data()[i] *= relu_grad(s.data()[i]);
    }
    const Matrix& aggregated = cache.aggregated[l - 1];
    g.upper_weights[l - 1] = matmul_tn(aggregated, d_s);
    d_s = spmm_t(a_hat, matmul_nt(d_s, upper_weights[l - 1]));
  }
  if (layers > 1) {
    const Matrix& s = cache.pre_activations[0];
    for (std::size_t i = 0; i < d_s.size(); ++i) d_s.data()[i] *= relu_grad(s.data()[i]);
  }
  g.first_layer = spmm_t(a_hat, d_s);
  return g;
}

Embedding vstream_forward(std::span<const GraphSnapshot> window, const ModelState& state,
                          const ModelConfig& cfg, ForwardCache* cache) {
  if (window.empty()) throw ContractError("vstream_forward: empty window");
  if (window.size() != state.window() || state.attention.size() != state.window()) {
    throw ContractError(fmt::format(
        "vstream_forward: window of {} snapshots but state holds {} transforms", window.size(),
        state.window()));
  }
  if (state.upper_weights.size() + 1 != cfg.layer_dims.size()) {
    throw ContractError(fmt::format("vstream_forward: state has {} layers, config {}",
                                    state.upper_weights.size() + 1, cfg.layer_dims.size()));
  }
  if (cache != nullptr) {
    cache->evolved.clear();
    cache->steps.assign(window.size(), {});
  }
  const Matrix* current = &state.base_weight;
  Matrix evolved;
  if (cfg.evolve) {
    for (std::size_t i = 0; i < window.size(); ++i) {
      evolved = evolve_weights(*current, state.transforms[i], state.attention[i], window[i],
                               cache != nullptr ? &cache->steps[i] : nullptr);
      if (cache != nullptr) {
        cache->evolved.push_back(evolved);
        current = &cache->evolved.back();
      } else {
        current = &evolved;
      }
    }
  }
  const GraphSnapshot& last = window.back();
  Embedding z = gcn_forward(last.normalized(), *current, state.upper_weights,
                            cache != nullptr ? &cache->gcn : nullptr);
  z.step = last.step();
  return z;
}

double reconstruction_loss(const Embedding& z, const GraphSnapshot& snapshot) {
  if (z.z.rows() != snapshot.node_universe()) {
    throw DimensionError(fmt::format("reconstruction_loss: embedding {} vs {} nodes",
                                     z.z.shape_string(), snapshot.node_universe()));
  }
  const std::size_t active = snapshot.active_nodes().size();
  if (active == 0) {
    throw UndefinedMetricError(
        fmt::format("loss undefined: snapshot {} has no active nodes", snapshot.step()));
  }
  const SparseMatrix& adj = snapshot.adjacency();
  double total = 0.0;
  for (const NodeId v : snapshot.active_nodes()) {
    const auto cols = adj.row_cols(v);
    const auto vals = adj.row_values(v);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double r = relu(dot(z.z.row(cols[k]), z.z.row(v))) - vals[k];
      total += r * r;
    }
  }
  return std::sqrt(total / static_cast<double>(active));
}

Matrix reconstruction_loss_grad(const Embedding& z, const GraphSnapshot& snapshot, double loss) {
  Matrix d_z(z.z.rows(), z.z.cols());
  if (loss == 0.0) return d_z;
  const double scale = 1.0 / (static_cast<double>(snapshot.active_nodes().size()) * loss);
  const SparseMatrix& adj = snapshot.adjacency();
  for (const NodeId v : snapshot.active_nodes()) {
    const auto cols = adj.row_cols(v);
    const auto vals = adj.row_values(v);
    const auto zv = z.z.row(v);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto zu = z.z.row(cols[k]);
      const double p = dot(zu, zv);
      if (p <= 0.0) continue;
      const double g = scale * (p - vals[k]);
      auto du = d_z.row(cols[k]);
      auto dv = d_z.row(v);
      for (std::size_t j = 0; j < zv.size(); ++j) {
        du[j] += g * zv[j];
        dv[j] += g * zu[j];
      }
    }
  }
  return d_z;
}

LossAndGradients loss_and_gradients(std::span<const GraphSnapshot> window,
                                    const ModelState& state, const ModelConfig& cfg) {
  ForwardCache cache;
  LossAndGradients out;
  out.embedding = vstream_forward(window, state, cfg, &cache);
  const GraphSnapshot& last = window.back();
  out.loss = reconstruction_loss(out.embedding, last);
  if (!std::isfinite(out.loss)) throw NumericError("loss is not finite");

  const Matrix d_z = reconstruction_loss_grad(out.embedding, last, out.loss);
  GcnGrads gcn = gcn_backward(last.normalized(), state.upper_weights, cache.gcn, d_z);

  out.gradients = state.zero_gradients();
  for (std::size_t l = 0; l < gcn.upper_weights.size(); ++l) {
    out.gradients[fmt::format("W{}", l + 2)] = std::move(gcn.upper_weights[l]);
  }
  Matrix upstream = std::move(gcn.first_layer);
  if (cfg.evolve) {
    for (std::size_t i = window.size(); i-- > 0;) {
      const Matrix& input = i == 0 ? state.base_weight : cache.evolved[i - 1];
      EvolutionGrads eg = evolve_weights_backward(input, state.transforms[i], state.attention[i],
                                                  window[i], cache.steps[i], upstream);
      out.gradients[fmt::format("H_{}", i)] = std::move(eg.h);
      out.gradients[fmt::format("a_{}", i)] = std::move(eg.a);
      upstream = std::move(eg.w_prev);
    }
  }
  out.gradients["W1_base"] = std::move(upstream);
  return out;
}

AttentionAudit attention_audit() {
  std::lock_guard lock(audit_mutex);
  return audit_totals;
}

void reset_attention_audit() {
  std::lock_guard lock(audit_mutex);
  audit_totals = AttentionAudit{};
}

}  // namespace vstream
