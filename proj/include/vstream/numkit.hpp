#pragma once

// Numeric kernel: dense and CSR matrices, activations, Glorot initialisation,
// Adam and a central-difference gradient checker. Everything is 64-bit.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vstream {

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds a matrix from nested initializer rows; all rows must have equal length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;
  bool all_finite() const;

  Matrix transposed() const;
  void fill(double value);
  Matrix& operator+=(const Matrix& other);
  Matrix& operator*=(double scale);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// (row, col, value) entry used to assemble sparse matrices.
struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix. Column indices are strictly increasing within
/// each row; explicit zeros are not stored.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  explicit SparseMatrix(std::size_t rows, std::size_t cols);

  /// Duplicate (row, col) entries are summed; resulting zeros are dropped.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> entries);
  static SparseMatrix identity(std::size_t n);
  static SparseMatrix from_dense(const Matrix& dense);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nonzeros() const { return values_.size(); }

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  /// Stored value at (r, c) or 0.
  double at(std::size_t r, std::size_t c) const;
  Matrix densify() const;
  bool is_symmetric(double tol = 0.0) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materialising the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materialising the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix spmm(const SparseMatrix& s, const Matrix& d);
/// sᵀ·d.
Matrix spmm_t(const SparseMatrix& s, const Matrix& d);

double relu(double x);
double relu_grad(double x);
double elu(double x);
/// Derivative of elu evaluated at the pre-activation x.
double elu_grad(double x);
double sigmoid(double x);
/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> v);

Matrix relu(const Matrix& m);
Matrix elu(const Matrix& m);
Matrix sigmoid(const Matrix& m);

/// Uniform draws from [-b, b] with b = sqrt(6 / (rows + cols)).
Matrix glorot_init(std::size_t rows, std::size_t cols, std::uint64_t seed);

/// Mixes a master seed with a stream index (splitmix64), so that derived
/// seeds for different purposes are decorrelated.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Non-owning handle on a named trainable matrix.
struct ParamRef {
  std::string name;
  Matrix* value;
};
using ParamList = std::vector<ParamRef>;
using Gradients = std::map<std::string, Matrix>;

struct AdamHyper {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::map<std::string, Matrix> first_moment;
  std::map<std::string, Matrix> second_moment;
};

/// One bias-corrected Adam update of every parameter in `params`. Moments are
/// created lazily on the first step.
void adam_step(const ParamList& params, const Gradients& grads, AdamState& state);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Parameters with more entries than this are checked on a random subsample.
  std::size_t max_entries_per_param = 64;
  std::uint64_t seed = 0;
  // Lower bound on the relative-error denominator, as a multiple of
  // max(1, |loss|). Central differences cannot resolve gradient entries much
  // smaller than |loss| * 1e-16 / epsilon; 0 disables the floor.
  double noise_floor = 0.0;
};

/// Relative gradient error |a - n| / max(|a|, |n|, floor); 0 when the
/// denominator vanishes.
double relative_error(double analytic, double numeric, double floor = 0.0);

/// Compares `analytic` against central differences of `loss_fn`, perturbing
/// each parameter entry in place and restoring it afterwards.
GradCheckReport finite_diff_check(const std::function<double()>& loss_fn,
                                  const ParamList& params, const Gradients& analytic,
                                  const GradCheckOptions& options = {});

}  // namespace vstream
