#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vstream/error.hpp"
#include "vstream/numkit.hpp"

using namespace vstream;

TEST_CASE("matmul hand cases") {
  const Matrix m = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(matmul(Matrix::identity(2), m) == m);
  CHECK(matmul(m, Matrix::from_rows({{0}, {1}})) == Matrix::from_rows({{2}, {4}}));
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 2)), DimensionError);
}

TEST_CASE("transposed products agree with explicit transposes") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_matrix(4, 3, rng);
    const auto b = oracle::random_matrix(4, 5, rng);
    const auto c = oracle::random_matrix(6, 3, rng);
    CHECK(oracle::max_abs_diff(matmul_tn(a, b), oracle::dense_matmul(a.transposed(), b)) < 1e-12);
    CHECK(oracle::max_abs_diff(matmul_nt(a, c), oracle::dense_matmul(a, c.transposed())) < 1e-12);
  }
  CHECK_THROWS_AS(matmul_tn(Matrix(2, 2), Matrix(3, 2)), DimensionError);
  CHECK_THROWS_AS(matmul_nt(Matrix(2, 2), Matrix(2, 3)), DimensionError);
}

TEST_CASE("sparse construction") {
  const auto s = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {0, 1, 2.0}, {1, 0, 1.0}, {1, 0, -1.0}});
  CHECK(s.nonzeros() == 1);
  CHECK(s.at(0, 1) == 3.0);
  CHECK(s.at(1, 0) == 0.0);
  CHECK_THROWS_AS(SparseMatrix::from_triplets(2, 2, {{2, 0, 1.0}}), DimensionError);
  const Matrix d = Matrix::from_rows({{0, 1.5}, {0, 0}});
  CHECK(SparseMatrix::from_dense(d).densify() == d);
}

TEST_CASE("spmm hand cases") {
  std::mt19937_64 rng(1);
  const auto m = oracle::random_matrix(4, 3, rng);
  CHECK(spmm(SparseMatrix::identity(4), m) == m);
  CHECK(spmm(SparseMatrix(4, 4), m) == Matrix(4, 3));
  CHECK_THROWS_AS(spmm(SparseMatrix(3, 3), m), DimensionError);
}

TEST_CASE("spmm matches the dense oracle on random inputs") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> dim(1, 9);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = trial == 0 ? 5 : dim(rng);
    const std::size_t c = trial == 0 ? 5 : dim(rng);
    const std::size_t k = trial == 0 ? 3 : dim(rng);
    std::vector<Triplet> entries;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        if (coin(rng) < 0.3) entries.push_back({i, j, coin(rng) * 4.0 - 2.0});
    const auto s = SparseMatrix::from_triplets(r, c, entries);
    const auto d = oracle::random_matrix(c, k, rng);
    const auto dt = oracle::random_matrix(r, k, rng);
    CHECK(oracle::max_abs_diff(spmm(s, d), oracle::dense_matmul(s.densify(), d)) <= 1e-12);
    CHECK(oracle::max_abs_diff(spmm_t(s, dt), oracle::dense_matmul(s.densify().transposed(), dt)) <=
          1e-12);
  }
}

TEST_CASE("activations") {
  CHECK(relu(-3.0) == 0.0);
  CHECK(relu(2.0) == 2.0);
  CHECK(elu(0.0) == 0.0);
  CHECK(std::abs(elu(-20.0) + 1.0) < 1e-8);
  CHECK(std::abs(elu(1e-9)) <= 2e-9);
  CHECK(std::abs(elu(-1e-9)) <= 2e-9);
  CHECK(elu_grad(2.0) == 1.0);
  CHECK(elu_grad(-1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(std::isfinite(sigmoid(-1000.0)));
  CHECK(sigmoid(1000.0) == 1.0);
  const auto s = softmax(std::vector<double>{5.0, 5.0});
  CHECK(s[0] == 0.5);
  CHECK(s[1] == 0.5);
}

TEST_CASE("softmax is a simplex and shift invariant") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::size_t> len(1, 12);
  std::uniform_real_distribution<double> val(-30.0, 30.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> x(len(rng));
    for (auto& v : x) v = val(rng);
    const double shift = val(rng);
    std::vector<double> shifted = x;
    for (auto& v : shifted) v += shift;
    const auto p = softmax(x);
    const auto q = softmax(shifted);
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] > 0.0);
      CHECK(p[i] <= 1.0);
      CHECK(std::abs(p[i] - q[i]) <= 1e-12);
      sum += p[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("glorot initialisation") {
  CHECK(glorot_init(3, 4, 11) == glorot_init(3, 4, 11));
  CHECK_FALSE(glorot_init(3, 4, 11) == glorot_init(3, 4, 12));
  CHECK_THROWS_AS(glorot_init(0, 4, 1), DimensionError);

  const Matrix big = glorot_init(1000, 1000, 5);
  const double bound = std::sqrt(6.0 / 2000.0);
  double sum = 0.0;
  bool within = true;
  for (const double x : big.data()) {
    within = within && std::abs(x) <= bound;
    sum += x;
  }
  CHECK(within);
  CHECK(std::abs(sum / 1e6) < 0.01);
}

TEST_CASE("derived seeds are distinct and stable") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Matrix p = Matrix::from_rows({{1.5, -2.0}});
    const Matrix before = p;
    AdamState st;
    adam_step({{"p", &p}}, {{"p", Matrix(1, 2)}}, st);
    CHECK(p == before);
    CHECK(st.step == 1);
  }
  SUBCASE("first step moves by the learning rate") {
    Matrix p(1, 1, 0.0);
    AdamState st;
    st.hyper.learning_rate = 0.1;
    adam_step({{"p", &p}}, {{"p", Matrix(1, 1, 1.0)}}, st);
    // m_hat = 1, v_hat = 1 after bias correction.
    CHECK(p(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-14));
  }
  SUBCASE("trajectories are reproducible") {
    auto run = [] {
      Matrix p = glorot_init(3, 3, 4);
      AdamState st;
      for (int i = 0; i < 50; ++i) {
        Matrix g = p;
        for (auto& x : g.data()) x = std::sin(3.0 * x) + x;
        adam_step({{"p", &p}}, {{"p", g}}, st);
      }
      return p;
    };
    CHECK(run() == run());
  }
  SUBCASE("missing gradient") {
    Matrix p(1, 1);
    AdamState st;
    CHECK_THROWS_AS(adam_step({{"p", &p}}, {}, st), ContractError);
  }
}

TEST_CASE("finite difference checker") {
  Matrix x(1, 1, 3.0);
  const auto quadratic = [&] { return 0.5 * x(0, 0) * x(0, 0); };
  auto report = finite_diff_check(quadratic, {{"x", &x}}, {{"x", Matrix(1, 1, 3.0)}});
  CHECK(report.max_relative_error < 1e-8);
  CHECK(report.entries_checked == 1);
  CHECK(x(0, 0) == 3.0);

  Matrix y = Matrix::from_rows({{1, 2, 3}});
  report = finite_diff_check([] { return 4.0; }, {{"y", &y}}, {{"y", Matrix(1, 3)}});
  CHECK(report.max_relative_error == 0.0);

  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1.0, 0.5) == 0.5);
  CHECK(relative_error(1e-9, 2e-9, 1e-6) == doctest::Approx(1e-3));

  // A gradient far below the loss scale is compared against the floor.
  Matrix z(1, 2, 1.0);
  const auto tiny = [&] { return 1e3 + 1e-9 * z(0, 0) + z(0, 1); };
  GradCheckOptions opt;
  opt.noise_floor = 1e-6;
  report = finite_diff_check(tiny, {{"z", &z}}, {{"z", Matrix::from_rows({{1e-9, 1.0}})}}, opt);
  CHECK(report.max_relative_error < 1e-4);
}
