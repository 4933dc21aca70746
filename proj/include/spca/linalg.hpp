#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spca/rng.hpp"

namespace spca {

using DenseVector = std::vector<double>;

// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), v_(rows * cols, 0.0) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {v_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {v_.data() + r * cols_, cols_}; }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  const std::vector<double>& values() const { return v_; }

  void set_zero();
  bool all_finite() const;
  double frobenius_norm() const;
  double max_abs() const;

  DenseVector column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> v_;
};

// Compressed sparse rows; column indices strictly increase within a row.
class SparseBlock {
 public:
  SparseBlock() = default;
  explicit SparseBlock(std::size_t n_cols) : n_cols_(n_cols) {}

  std::size_t n_rows() const { return row_start_.size() - 1; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t nnz() const { return col_.size(); }

  // Appends a row given (column, value) pairs; enforces the index invariants.
  void add_row(std::span<const std::pair<std::uint32_t, double>> entries);

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {col_.data() + row_start_[r], row_start_[r + 1] - row_start_[r]};
  }
  std::span<const double> row_vals(std::size_t r) const {
    return {val_.data() + row_start_[r], row_start_[r + 1] - row_start_[r]};
  }

  DenseMatrix densify() const;
  double frobenius_sq() const;
  void clear();
  std::size_t byte_size() const {
    return row_start_.size() * sizeof(std::size_t) + col_.size() * sizeof(std::uint32_t) +
           val_.size() * sizeof(double);
  }

 private:
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> row_start_{0};
  std::vector<std::uint32_t> col_;
  std::vector<double> val_;
};

// One sample, dense or sparse, without owning the storage.
struct RowView {
  std::size_t dim = 0;
  std::span<const double> dense;          // non-empty iff dense
  std::span<const std::uint32_t> idx;     // sparse indices
  std::span<const double> val;            // sparse values
  bool is_dense() const { return !dense.empty() || (idx.empty() && val.empty()); }
};

// k non-negative weights; solvers keep them ordered non-increasing by
// co-sorting with the basis columns they belong to.
struct DiagonalWeights {
  std::vector<double> lambda;

  DiagonalWeights() = default;
  explicit DiagonalWeights(std::vector<double> values);

  std::size_t k() const { return lambda.size(); }
  double operator[](std::size_t j) const { return lambda[j]; }
};

struct ThinQr {
  DenseMatrix q;
  DenseMatrix r;
  int replaced_columns = 0;  // columns re-randomized due to rank collapse
};

struct SymEig {
  std::vector<double> values;  // descending
  DenseMatrix vectors;         // column j pairs with values[j]
};

// scale * X^T (X V) without ever forming X^T X.
DenseMatrix gram_apply(const DenseMatrix& x, const DenseMatrix& v, double scale);
DenseMatrix gram_apply(const SparseBlock& x, const DenseMatrix& v, double scale);
void gram_apply_into(const DenseMatrix& x, const DenseMatrix& v, double scale, DenseMatrix& out);
void gram_apply_into(const SparseBlock& x, const DenseMatrix& v, double scale, DenseMatrix& out);
void gram_apply_into(std::span<const double> x_rowmajor, std::size_t rows, std::size_t cols,
                     const DenseMatrix& v, double scale, DenseMatrix& out);

// Accumulates x (x^T v) for a single sample into acc (d x k). Summation order
// per output element matches the batched kernels exactly.
void gram_accumulate_row(const RowView& row, const DenseMatrix& v, DenseMatrix& acc,
                         std::vector<double>& scratch_k);

// Modified Gram-Schmidt with one reorthogonalization pass. R diagonal is kept
// positive; a numerically dead column (diagonal below 1e-12 * ||A||_F) is
// replaced by a fresh random unit vector orthogonal to the previous columns
// and reported through replaced_columns (its R diagonal is set to 0).
ThinQr thin_qr(const DenseMatrix& a, RngState& rng);
ThinQr thin_qr(const DenseMatrix& a);  // fixed internal seed for repairs

// In-place variant used by solvers to avoid reallocating panels.
int thin_qr_inplace(DenseMatrix& a, DenseMatrix& r, RngState& rng);

DenseVector normalized(const DenseVector& v);  // throws on zero vector

DiagonalWeights column_norms(const DenseMatrix& a);

// Full spectrum of a small symmetric matrix (n <= 64) by cyclic Jacobi
// rotations, eigenvalues descending.
SymEig jacobi_eigen(const DenseMatrix& sym);

// Dense helpers used by the solvers; all deterministic for any thread count.
DenseMatrix mat_tmat(const DenseMatrix& a, const DenseMatrix& b);           // A^T B
void matmul_into(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out);  // A B
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);
double orthonormality_defect(const DenseMatrix& q);  // ||Q^T Q - I||_max

namespace ref {
// Serial reference kernels; the OpenMP versions must match them bit for bit.
DenseMatrix gram_apply(const DenseMatrix& x, const DenseMatrix& v, double scale);
DenseMatrix gram_apply(const SparseBlock& x, const DenseMatrix& v, double scale);
}  // namespace ref

}  // namespace spca
