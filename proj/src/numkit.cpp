#include "vstream/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "vstream/error.hpp"

namespace vstream {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError(fmt::format("matrix data length {} does not match shape ({}x{})",
                                     data_.size(), rows, cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged rows in Matrix::from_rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const { return fmt::format("({}x{})", rows_, cols_); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other)) {
    throw DimensionError(
        fmt::format("cannot add {} to {}", other.shape_string(), shape_string()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double scale) {
  for (double& x : data_) x *= scale;
  return *this;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols,
                                         std::vector<Triplet> entries) {
  for (const auto& t : entries) {
    if (t.row >= rows || t.col >= cols) {
      throw DimensionError(fmt::format("triplet ({}, {}) outside ({}x{})", t.row, t.col,
                                       rows, cols));
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix s(rows, cols);
  std::size_t i = 0;
  while (i < entries.size()) {
    const std::size_t r = entries[i].row;
    const std::size_t c = entries[i].col;
    double v = 0.0;
    while (i < entries.size() && entries[i].row == r && entries[i].col == c) {
      v += entries[i].value;
      ++i;
    }
    if (v != 0.0) {
      s.col_idx_.push_back(c);
      s.values_.push_back(v);
      ++s.row_ptr_[r + 1];
    }
  }
  std::partial_sum(s.row_ptr_.begin(), s.row_ptr_.end(), s.row_ptr_.begin());
  return s;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<Triplet> t;
  t.reserve(n);
  for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

SparseMatrix SparseMatrix::from_dense(const Matrix& dense) {
  std::vector<Triplet> t;
  for (std::size_t r = 0; r < dense.rows(); ++r)
    for (std::size_t c = 0; c < dense.cols(); ++c)
      if (dense(r, c) != 0.0) t.push_back({r, c, dense(r, c)});
  return from_triplets(dense.rows(), dense.cols(), std::move(t));
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto cols = row_cols(r);
  const auto it = std::lower_bound(cols.begin(), cols.end(), c);
  if (it == cols.end() || *it != c) return 0.0;
  return values_[row_ptr_[r] + static_cast<std::size_t>(it - cols.begin())];
}

Matrix SparseMatrix::densify() const {
  Matrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(r, col_idx_[k]) = values_[k];
  }
  return d;
}

bool SparseMatrix::is_symmetric(double tol) const {
  if (rows_ != cols_) return false;
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
      if (std::abs(values_[k] - at(col_idx_[k], r)) > tol) return false;
    }
  }
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError(
        fmt::format("matmul shape mismatch: {} x {}", a.shape_string(), b.shape_string()));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError(fmt::format("matmul_tn shape mismatch: {}^T x {}", a.shape_string(),
                                     b.shape_string()));
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto a_row = a.row(k);
    const auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a_row[i];
      if (aki == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError(fmt::format("matmul_nt shape mismatch: {} x {}^T", a.shape_string(),
                                     b.shape_string()));
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

Matrix spmm(const SparseMatrix& s, const Matrix& d) {
  if (s.cols() != d.rows()) {
    throw DimensionError(fmt::format("spmm shape mismatch: sparse ({}x{}) x {}", s.rows(),
                                     s.cols(), d.shape_string()));
  }
  Matrix out(s.rows(), d.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    auto out_row = out.row(r);
    const auto cols = s.row_cols(r);
    const auto vals = s.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto d_row = d.row(cols[k]);
      for (std::size_t j = 0; j < d.cols(); ++j) out_row[j] += vals[k] * d_row[j];
    }
  }
  return out;
}

Matrix spmm_t(const SparseMatrix& s, const Matrix& d) {
  if (s.rows() != d.rows()) {
    throw DimensionError(fmt::format("spmm_t shape mismatch: sparse ({}x{})^T x {}", s.rows(),
                                     s.cols(), d.shape_string()));
  }
  Matrix out(s.cols(), d.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const auto d_row = d.row(r);
    const auto cols = s.row_cols(r);
    const auto vals = s.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      auto out_row = out.row(cols[k]);
      for (std::size_t j = 0; j < d.cols(); ++j) out_row[j] += vals[k] * d_row[j];
    }
  }
  return out;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }
double relu_grad(double x) { return x > 0.0 ? 1.0 : 0.0; }
double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

double sigmoid(double x) {
  // Branch keeps exp() from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> v) {
  std::vector<double> out(v.size());
  if (v.empty()) return out;
  const double peak = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

namespace {
template <typename F>
Matrix map_entries(const Matrix& m, F f) {
  Matrix out = m;
  for (double& x : out.data()) x = f(x);
  return out;
}
}  // namespace

Matrix relu(const Matrix& m) { return map_entries(m, [](double x) { return relu(x); }); }
Matrix elu(const Matrix& m) { return map_entries(m, [](double x) { return elu(x); }); }
Matrix sigmoid(const Matrix& m) { return map_entries(m, [](double x) { return sigmoid(x); }); }

Matrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) {
    throw DimensionError(fmt::format("glorot_init needs positive dimensions, got ({}x{})",
                                     rows, cols));
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& x : m.data()) x = dist(rng);
  return m;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void adam_step(const ParamList& params, const Gradients& grads, AdamState& state) {
  for (const auto& p : params) {
    const auto it = grads.find(p.name);
    if (it == grads.end()) {
      throw ContractError(fmt::format("adam_step: no gradient for parameter '{}'", p.name));
    }
    if (!it->second.same_shape(*p.value)) {
      throw DimensionError(fmt::format("adam_step: gradient {} does not match parameter '{}' {}",
                                       it->second.shape_string(), p.name,
                                       p.value->shape_string()));
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (const auto& p : params) {
    const Matrix& g = grads.at(p.name);
    auto [m_it, m_new] = state.first_moment.try_emplace(p.name, g.rows(), g.cols());
    auto [v_it, v_new] = state.second_moment.try_emplace(p.name, g.rows(), g.cols());
    auto& m = m_it->second.data();
    auto& v = v_it->second.data();
    auto& theta = p.value->data();
    const auto& gd = g.data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * gd[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * gd[i] * gd[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const ParamList& params, const Gradients& analytic,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw ContractError("finite_diff_check: epsilon must be > 0");
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  auto evaluate = [&]() {
    const double value = loss_fn();
    if (!std::isfinite(value)) throw NumericError("finite_diff_check: loss is not finite");
    return value;
  };
  const double floor = options.noise_floor * std::max(1.0, std::abs(evaluate()));

  for (const auto& p : params) {
    const auto it = analytic.find(p.name);
    if (it == analytic.end()) {
      throw ContractError(fmt::format("finite_diff_check: no gradient for '{}'", p.name));
    }
    const Matrix& grad = it->second;
    auto& theta = p.value->data();

    std::vector<std::size_t> indices(theta.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (indices.size() > options.max_entries_per_param) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_entries_per_param);
      std::sort(indices.begin(), indices.end());
    }

    for (const std::size_t i : indices) {
      const double original = theta[i];
      theta[i] = original + options.epsilon;
      const double up = evaluate();
      theta[i] = original - options.epsilon;
      const double down = evaluate();
      theta[i] = original;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double err = relative_error(grad.data()[i], numeric, floor);
      if (report.entries_checked++ == 0 || err > report.max_relative_error) {
        report.max_relative_error = err;
        report.worst_parameter = p.name;
        report.worst_index = i;
        report.worst_analytic = grad.data()[i];
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace vstream
