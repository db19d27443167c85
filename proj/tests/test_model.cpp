#include <doctest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "vstream/error.hpp"
#include "vstream/model.hpp"

using namespace vstream;

namespace {

using AlphaMap = std::map<std::pair<std::size_t, std::size_t>, double>;

struct Instance {
  std::vector<GraphSnapshot> window;
  ModelConfig cfg;
  ModelState state;
};

// Connected-ish random window on n nodes; every snapshot keeps a spanning path
// over its active nodes so that losses are non-trivial.
Instance random_instance(std::mt19937_64& rng, std::size_t n, std::size_t w,
                         std::vector<std::size_t> dims) {
  Instance inst;
  inst.cfg.window = w;
  inst.cfg.layer_dims = std::move(dims);
  inst.cfg.seed = rng();
  std::uniform_real_distribution<double> weight(0.5, 2.0);
  for (std::size_t t = 0; t < w; ++t) {
    auto edges = oracle::random_edges(n, 0.3, rng, 0.5, 2.0);
    const NodeId last = static_cast<NodeId>(n - 1 - (t % 2));  // one node may be inactive
    std::erase_if(edges, [&](const Edge& e) { return e.u > last || e.v > last; });
    for (NodeId v = 0; v + 1 <= last; ++v) {
      const bool exists = std::any_of(edges.begin(), edges.end(),
                                      [&](const Edge& e) { return e.u == v && e.v == v + 1; });
      if (!exists) edges.push_back({v, v + 1, weight(rng)});
    }
    inst.window.emplace_back(t, n, edges);
  }
  inst.state = ModelState::initialize(n, inst.cfg);
  // Larger weights keep the inner products away from the ReLU kink.
  for (auto& p : inst.state.parameters()) *p.value *= 1.5;
  return inst;
}

double full_loss(const Instance& inst) {
  return reconstruction_loss(vstream_forward(inst.window, inst.state, inst.cfg), inst.window.back());
}

}  // namespace

TEST_CASE("evolve_weights: single neighbour takes the whole attention") {
  const GraphSnapshot g(0, 2, {{0, 1, 3.0}});
  const Matrix w = Matrix::from_rows({{0.2, -0.4}, {0.1, 0.3}});
  const Matrix h = Matrix::from_rows({{1.0, 0.5}, {-0.5, 2.0}});
  const Matrix a = Matrix::from_rows({{0.3}, {-0.2}, {0.7}, {0.1}});
  EvolutionCache cache;
  const Matrix out = evolve_weights(w, h, a, g, &cache);
  CHECK(cache.alpha == std::vector<double>{1.0, 1.0});
  // row 1 = ELU(H w(0))
  const double p0 = 1.0 * 0.2 + 0.5 * -0.4;
  const double p1 = -0.5 * 0.2 + 2.0 * -0.4;
  CHECK(std::abs(out(1, 0) - oracle::elu(p0)) <= 1e-12);
  CHECK(std::abs(out(1, 1) - oracle::elu(p1)) <= 1e-12);
}

TEST_CASE("evolve_weights: zero attention vector gives uniform weights") {
  const GraphSnapshot g(0, 4, {{0, 1, 1.0}, {0, 2, 5.0}, {0, 3, 0.5}});
  std::mt19937_64 rng(3);
  const Matrix w = oracle::random_matrix(4, 3, rng);
  const Matrix h = oracle::random_matrix(3, 3, rng);
  EvolutionCache cache;
  const Matrix out = evolve_weights(w, h, Matrix(6, 1), g, &cache);
  for (const double c : cache.coefficient) CHECK(c == 0.5);
  // Row 0 has three neighbours in CSR order.
  const auto& ptr = g.adjacency().row_ptr();
  for (std::size_t k = ptr[0]; k < ptr[1]; ++k) CHECK(std::abs(cache.alpha[k] - 1.0 / 3.0) <= 1e-15);
  const Matrix expected = oracle::evolve(w, h, Matrix(6, 1), g.adjacency().densify());
  CHECK(oracle::max_abs_diff(out, expected) <= 1e-12);
}

TEST_CASE("evolve_weights: symmetric neighbours split attention evenly") {
  const GraphSnapshot g(0, 3, {{0, 2, 2.0}, {1, 2, 2.0}});
  Matrix w = Matrix::from_rows({{0.5, 0.1}, {0.5, 0.1}, {-0.3, 0.9}});
  std::mt19937_64 rng(8);
  const Matrix h = oracle::random_matrix(2, 2, rng);
  const Matrix a = oracle::random_matrix(4, 1, rng);
  EvolutionCache cache;
  evolve_weights(w, h, a, g, &cache);
  const auto& ptr = g.adjacency().row_ptr();
  REQUIRE(ptr[3] - ptr[2] == 2);
  CHECK(cache.alpha[ptr[2]] == 0.5);
  CHECK(cache.alpha[ptr[2] + 1] == 0.5);
}

TEST_CASE("evolve_weights matches the brute-force oracle") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const std::size_t d = 1 + trial % 4;
    const GraphSnapshot g(0, n, oracle::random_edges(n, 0.4, rng, 0.1, 3.0));
    const Matrix w = oracle::random_matrix(n, d, rng);
    const Matrix h = oracle::random_matrix(d, d, rng);
    const Matrix a = oracle::random_matrix(2 * d, 1, rng);
    AlphaMap alpha;
    const Matrix expected = oracle::evolve(w, h, a, g.adjacency().densify(), &alpha);
    EvolutionCache cache;
    const Matrix out = evolve_weights(w, h, a, g, &cache);
    CHECK(out.same_shape(w));
    CHECK(oracle::max_abs_diff(out, expected) <= 1e-9);
    // Rows of isolated or inactive nodes are carried over unchanged.
    for (NodeId v = 0; v < n; ++v)
      if (neighborhood(g, v).empty())
        for (std::size_t j = 0; j < d; ++j) CHECK(out(v, j) == w(v, j));
    const auto& adj = g.adjacency();
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t k = adj.row_ptr()[v]; k < adj.row_ptr()[v + 1]; ++k)
        CHECK(std::abs(cache.alpha[k] - alpha.at({adj.col_idx()[k], v})) <= 1e-12);
  }
}

TEST_CASE("evolve_weights shape errors") {
  const GraphSnapshot g(0, 3, {{0, 1, 1.0}});
  CHECK_THROWS_AS(evolve_weights(Matrix(2, 2), Matrix(2, 2), Matrix(4, 1), g), DimensionError);
  CHECK_THROWS_AS(evolve_weights(Matrix(3, 2), Matrix(3, 3), Matrix(4, 1), g), DimensionError);
  CHECK_THROWS_AS(evolve_weights(Matrix(3, 2), Matrix(2, 2), Matrix(3, 1), g), DimensionError);
}

TEST_CASE("gcn_forward hand cases") {
  const Matrix w1 = Matrix::from_rows({{1.0, -2.0}, {0.5, 3.0}});
  CHECK(gcn_forward(SparseMatrix::identity(2), w1, {}).z == w1);

  const GraphSnapshot pair(0, 2, {{0, 1, 1.0}});
  const auto z = gcn_forward(pair.normalized(), Matrix::from_rows({{1.0}, {0.0}}), {});
  CHECK(oracle::max_abs_diff(z.z, Matrix::from_rows({{0.5}, {0.5}})) <= 1e-12);

  std::mt19937_64 rng(2);
  const std::vector<Matrix> upper{oracle::random_matrix(3, 2, rng)};
  CHECK(gcn_forward(pair.normalized(), Matrix(2, 3), upper).z == Matrix(2, 2));

  CHECK_THROWS_AS(gcn_forward(pair.normalized(), Matrix(3, 3), {}), DimensionError);
  const std::vector<Matrix> bad{Matrix(2, 2)};
  CHECK_THROWS_AS(gcn_forward(pair.normalized(), Matrix(2, 3), bad), DimensionError);
}

TEST_CASE("gcn_forward matches the dense oracle") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const GraphSnapshot g(0, n, oracle::random_edges(n, 0.4, rng, 0.2, 4.0));
    const Matrix w1 = oracle::random_matrix(n, 4, rng);
    std::vector<Matrix> upper;
    const std::size_t layers = trial % 3;
    std::size_t prev = 4;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t next = 1 + (trial + l) % 3;
      upper.push_back(oracle::random_matrix(prev, next, rng));
      prev = next;
    }
    const Matrix expected = oracle::gcn(g.normalized().densify(), w1, upper);
    CHECK(oracle::max_abs_diff(gcn_forward(g.normalized(), w1, upper).z, expected) <= 1e-9);
    // X = I through the general-features overload gives the same answer.
    CHECK(oracle::max_abs_diff(gcn_forward(g.normalized(), Matrix::identity(n), w1, upper).z,
                               expected) <= 1e-9);
  }
}

TEST_CASE("vstream_forward compositional oracle, w = 1") {
  const GraphSnapshot g(0, 2, {{0, 1, 1.0}});
  ModelConfig cfg;
  cfg.window = 1;
  cfg.layer_dims = {2};
  ModelState st = ModelState::initialize(2, cfg);
  st.base_weight = Matrix::from_rows({{0.1, -0.2}, {0.05, 0.3}});
  st.transforms[0] = Matrix::from_rows({{0.1, 0.0}, {0.0, 0.1}});
  st.attention[0] = Matrix::from_rows({{0.4}, {-0.1}, {0.2}, {0.3}});
  const Matrix w1 = evolve_weights(st.base_weight, st.transforms[0], st.attention[0], g);
  const Matrix expected = gcn_forward(g.normalized(), w1, {}).z;
  const std::vector<GraphSnapshot> window{g};
  CHECK(vstream_forward(window, st, cfg).z == expected);
  const Matrix hand = oracle::gcn(g.normalized().densify(),
                                  oracle::evolve(st.base_weight, st.transforms[0], st.attention[0],
                                                 g.adjacency().densify()),
                                  {});
  CHECK(oracle::max_abs_diff(vstream_forward(window, st, cfg).z, hand) <= 1e-12);
}

TEST_CASE("vstream_forward over identical snapshots iterates the uniform average") {
  std::mt19937_64 rng(12);
  const auto edges = oracle::random_edges(6, 0.5, rng);
  for (std::size_t w = 1; w <= 4; ++w) {
    std::vector<GraphSnapshot> window;
    for (std::size_t t = 0; t < w; ++t) window.emplace_back(t, 6, edges);
    ModelConfig cfg;
    cfg.window = w;
    cfg.layer_dims = {3, 2};
    ModelState st = ModelState::initialize(6, cfg);
    for (auto& h : st.transforms) h = Matrix::identity(3);
    for (auto& a : st.attention) a.fill(0.0);
    const Matrix adj = window[0].adjacency().densify();
    Matrix w1 = st.base_weight;
    for (std::size_t t = 0; t < w; ++t) {
      // Uniform average over neighbours followed by ELU.
      Matrix next = w1;
      for (std::size_t v = 0; v < 6; ++v) {
        std::vector<std::size_t> nb;
        for (std::size_t u = 0; u < 6; ++u)
          if (adj(u, v) != 0.0) nb.push_back(u);
        if (nb.empty()) continue;
        for (std::size_t j = 0; j < 3; ++j) {
          double s = 0.0;
          for (const auto u : nb) s += w1(u, j);
          next(v, j) = oracle::elu(s / static_cast<double>(nb.size()));
        }
      }
      w1 = next;
    }
    const Matrix expected = oracle::gcn(window.back().normalized().densify(), w1, st.upper_weights);
    CHECK(oracle::max_abs_diff(vstream_forward(window, st, cfg).z, expected) <= 1e-12);
  }
}

TEST_CASE("vstream_forward contracts and purity") {
  ModelConfig cfg;
  cfg.window = 2;
  cfg.layer_dims = {3, 2};
  const ModelState st = ModelState::initialize(4, cfg);
  const std::vector<GraphSnapshot> none;
  CHECK_THROWS_AS(vstream_forward(none, st, cfg), ContractError);
  const std::vector<GraphSnapshot> one{GraphSnapshot(0, 4, {{0, 1, 1.0}})};
  CHECK_THROWS_AS(vstream_forward(one, st, cfg), ContractError);

  cfg.window = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  std::mt19937_64 rng(4);
  auto inst = random_instance(rng, 8, 3, {4, 3});
  const auto z1 = vstream_forward(inst.window, inst.state, inst.cfg);
  const auto z2 = vstream_forward(inst.window, inst.state, inst.cfg);
  CHECK(z1.z == z2.z);
}

TEST_CASE("vstream_forward is equivariant under node relabelling") {
  std::mt19937_64 rng(909);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 4 + trial % 6;
    auto inst = random_instance(rng, n, 1 + trial % 3, {3, 2});
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    std::vector<GraphSnapshot> permuted;
    for (const auto& g : inst.window) {
      std::vector<Edge> edges;
      for (const auto& e : g.edges()) edges.push_back({perm[e.u], perm[e.v], e.weight});
      std::vector<NodeId> iso;
      for (const auto v : g.isolated_active()) iso.push_back(perm[v]);
      permuted.emplace_back(g.step(), n, edges, iso);
    }
    ModelState st = inst.state;
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < st.base_weight.cols(); ++j)
        st.base_weight(perm[v], j) = inst.state.base_weight(v, j);

    const Matrix z = vstream_forward(inst.window, inst.state, inst.cfg).z;
    const Matrix zp = vstream_forward(permuted, st, inst.cfg).z;
    double diff = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t j = 0; j < z.cols(); ++j) diff = std::max(diff, std::abs(z(v, j) - zp(perm[v], j)));
    CHECK(diff <= 1e-12);
  }
}

TEST_CASE("reconstruction_loss hand cases") {
  const GraphSnapshot g(0, 2, {{0, 1, 1.0}});
  CHECK(reconstruction_loss(Embedding{Matrix(2, 1), 0}, g) == 1.0);

  // Z(u).Z(v) = A(u,v) on every edge.
  const GraphSnapshot path(0, 3, {{0, 1, 2.0}, {1, 2, 4.0}});
  const Matrix z = Matrix::from_rows({{1.0}, {2.0}, {2.0}});
  CHECK(reconstruction_loss(Embedding{z, 0}, path) == 0.0);

  const GraphSnapshot empty(0, 3, {});
  CHECK_THROWS_AS(reconstruction_loss(Embedding{Matrix(3, 1), 0}, empty), UndefinedMetricError);
  CHECK_THROWS_AS(reconstruction_loss(Embedding{Matrix(2, 1), 0}, path), DimensionError);
}

TEST_CASE("reconstruction_loss matches the clipped brute-force oracle") {
  std::mt19937_64 rng(55);
  std::size_t clipped = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 9;
    const GraphSnapshot g(0, n, oracle::random_edges(n, 0.5, rng), {static_cast<NodeId>(n - 1)});
    if (g.edges().empty()) continue;
    const Matrix z = oracle::random_matrix(n, 3, rng);
    for (const auto& e : g.edges()) {
      double dot = 0.0;
      for (std::size_t j = 0; j < 3; ++j) dot += z(e.u, j) * z(e.v, j);
      clipped += dot < 0.0;
    }
    const double expected = oracle::loss(z, g.adjacency().densify(), oracle::active_mask(g));
    CHECK(std::abs(reconstruction_loss(Embedding{z, 0}, g) - expected) <= 1e-9);
  }
  CHECK(clipped > 0);
}

TEST_CASE("rows of inactive nodes never reach the loss") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const GraphSnapshot g(0, 8, {{0, 1, 1.0}, {1, 2, 2.0}, {2, 3, 0.5}}, {4});
    Matrix z = oracle::random_matrix(8, 2, rng);
    const double before = reconstruction_loss(Embedding{z, 0}, g);
    for (std::size_t v = 4; v < 8; ++v)
      for (std::size_t j = 0; j < 2; ++j) z(v, j) = oracle::random_matrix(1, 1, rng, 1e6)(0, 0);
    CHECK(reconstruction_loss(Embedding{z, 0}, g) == before);
  }
}

TEST_CASE("gradient of the full loss matches central differences") {
  std::mt19937_64 rng(6006);
  SUBCASE("6-node instance, w = 2") {
    auto inst = random_instance(rng, 6, 2, {4, 3});
    const auto lg = loss_and_gradients(inst.window, inst.state, inst.cfg);
    CHECK(lg.loss == full_loss(inst));
    GradCheckOptions opt;
    opt.max_entries_per_param = 1000;
    const auto report =
        finite_diff_check([&] { return full_loss(inst); }, inst.state.parameters(), lg.gradients, opt);
    MESSAGE("max relative error " << report.max_relative_error << " at " << report.worst_parameter);
    CHECK(report.max_relative_error < 1e-4);
  }
  SUBCASE("random small instances") {
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t n = 3 + trial % 8;
      const std::size_t w = 1 + trial % 3;
      std::vector<std::size_t> dims = trial % 2 ? std::vector<std::size_t>{3, 2}
                                                : std::vector<std::size_t>{3};
      auto inst = random_instance(rng, n, w, dims);
      const auto lg = loss_and_gradients(inst.window, inst.state, inst.cfg);
      GradCheckOptions opt;
      opt.max_entries_per_param = 1000;
      opt.noise_floor = 1e-6;
      const auto report = finite_diff_check([&] { return full_loss(inst); },
                                            inst.state.parameters(), lg.gradients, opt);
      CHECK_MESSAGE(report.max_relative_error < 1e-4, "trial " << trial << " worst "
                                                               << report.worst_parameter << " "
                                                               << report.max_relative_error << " analytic "
                                                               << report.worst_analytic << " numeric "
                                                               << report.worst_numeric);
    }
  }
}

TEST_CASE("static configuration bypasses the attention chain") {
  std::mt19937_64 rng(8);
  auto inst = random_instance(rng, 7, 1, {3, 2});
  inst.cfg.evolve = false;
  const Matrix expected =
      gcn_forward(inst.window.back().normalized(), inst.state.base_weight, inst.state.upper_weights).z;
  CHECK(vstream_forward(inst.window, inst.state, inst.cfg).z == expected);
  const auto lg = loss_and_gradients(inst.window, inst.state, inst.cfg);
  CHECK(lg.gradients.at("H_0") == Matrix(3, 3));
  CHECK(lg.gradients.at("a_0") == Matrix(6, 1));
}

TEST_CASE("model state layout") {
  ModelConfig cfg;
  cfg.window = 3;
  cfg.layer_dims = {5, 4, 2};
  auto st = ModelState::initialize(9, cfg);
  std::vector<std::string> names;
  for (const auto& p : st.parameters()) names.push_back(p.name);
  CHECK(names == std::vector<std::string>{"W1_base", "H_0", "H_1", "H_2", "a_0", "a_1", "a_2", "W2", "W3"});
  CHECK(st.base_weight.rows() == 9);
  CHECK(st.attention[1].rows() == 10);
  CHECK(st.upper_weights[1].rows() == 4);
  CHECK(ModelState::initialize(9, cfg) == st);
  cfg.seed = 1;
  CHECK_FALSE(ModelState::initialize(9, cfg) == st);
}

TEST_CASE("attention rows seen so far form a simplex") {
  const auto audit = attention_audit();
  CHECK(audit.rows > 0);
  CHECK(audit.non_positive == 0);
  CHECK(audit.max_sum_deviation <= 1e-12);
}
