#include "spca/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spca {

namespace {

// Sum of fn(row r) over rows, reduced over fixed-size chunks so the result
// does not depend on the thread count.
template <class Fn>
double chunked_row_sum(std::size_t n, Fn&& fn) {
  constexpr std::size_t kChunk = 1024;
  const std::size_t n_chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(n_chunks, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(n_chunks); ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kChunk;
    const std::size_t hi = std::min(lo + kChunk, n);
    double s = 0.0;
    for (std::size_t r = lo; r < hi; ++r) s += fn(r);
    partial[c] = s;
  }
  double total = 0.0, comp = 0.0;
  for (double p : partial) {  // Kahan over chunk partials
    const double y = p - comp;
    const double t = total + y;
    comp = (t - total) - y;
    total = t;
  }
  return total;
}

double row_energy(const RowView& row) {
  double s = 0.0;
  if (!row.dense.empty())
    for (double x : row.dense) s += x * x;
  else
    for (double x : row.val) s += x * x;
  return s;
}

// ||W^T x||^2 for one sample.
double row_projection_energy(const RowView& row, const DenseMatrix& w) {
  const std::size_t k = w.cols();
  double p[64];
  std::vector<double> pbig;
  double* pp = p;
  if (k > 64) {
    pbig.assign(k, 0.0);
    pp = pbig.data();
  } else {
    for (std::size_t j = 0; j < k; ++j) pp[j] = 0.0;
  }
  if (!row.dense.empty()) {
    for (std::size_t c = 0; c < row.dense.size(); ++c) {
      const double xv = row.dense[c];
      if (xv == 0.0) continue;
      const double* wc = w.data() + c * k;
      for (std::size_t j = 0; j < k; ++j) pp[j] += xv * wc[j];
    }
  } else {
    for (std::size_t i = 0; i < row.idx.size(); ++i) {
      const double xv = row.val[i];
      const double* wc = w.data() + static_cast<std::size_t>(row.idx[i]) * k;
      for (std::size_t j = 0; j < k; ++j) pp[j] += xv * wc[j];
    }
  }
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += pp[j] * pp[j];
  return s;
}

}  // namespace

double principal_angle_distance(const DenseMatrix& u_in, const DenseMatrix& v_in) {
  if (u_in.cols() != v_in.cols())
    throw std::invalid_argument("principal_angle_distance: rank mismatch, " +
                                std::to_string(u_in.cols()) + " vs " +
                                std::to_string(v_in.cols()));
  if (u_in.rows() != v_in.rows())
    throw std::invalid_argument("principal_angle_distance: dimension mismatch, " +
                                std::to_string(u_in.rows()) + " vs " +
                                std::to_string(v_in.rows()));
  const DenseMatrix* u = &u_in;
  const DenseMatrix* v = &v_in;
  ThinQr uq, vq;
  if (orthonormality_defect(u_in) > 1e-6) {
    uq = thin_qr(u_in);
    u = &uq.q;
  }
  if (orthonormality_defect(v_in) > 1e-6) {
    vq = thin_qr(v_in);
    v = &vq.q;
  }
  // W = V - U (U^T V); distance is the top singular value of W.
  DenseMatrix c = mat_tmat(*u, *v);
  DenseMatrix w = *v;
  const std::size_t d = w.rows(), k = w.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(d); ++r) {
    double* wr = w.data() + r * k;
    const double* ur = u->data() + r * k;
    for (std::size_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += ur[i] * c(i, j);
      wr[j] -= s;
    }
  }
  const SymEig eig = jacobi_eigen(mat_tmat(w, w));
  const double top = std::clamp(eig.values.empty() ? 0.0 : eig.values.front(), 0.0, 1.0);
  return std::sqrt(top);
}

namespace {

double explained_variance_impl(const DenseMatrix& w, std::size_t n,
                               const std::function<RowView(std::size_t)>& row) {
  if (n == 0) throw std::invalid_argument("explained_variance: empty dataset");
  const double num = chunked_row_sum(n, [&](std::size_t r) { return row_projection_energy(row(r), w); });
  const double den = chunked_row_sum(n, [&](std::size_t r) { return row_energy(row(r)); });
  if (!(den > 0.0)) throw std::invalid_argument("explained_variance: data has zero energy");
  const double ratio = num / den;
  if (ratio > 1.0 + 1e-9)
    throw std::runtime_error("explained_variance: ratio " + std::to_string(ratio) +
                             " exceeds 1; basis is not orthonormal");
  return std::min(ratio, 1.0);
}

}  // namespace

double explained_variance(const DenseMatrix& w, const Dataset& data) {
  if (w.rows() != data.dim())
    throw std::invalid_argument("explained_variance: basis has " + std::to_string(w.rows()) +
                                " rows but data dimension is " + std::to_string(data.dim()));
  return explained_variance_impl(w, data.n(), [&](std::size_t r) { return data.row(r); });
}

double explained_variance(const DenseMatrix& w, BlockStream& stream) {
  double num = 0.0, den = 0.0;
  std::size_t n = 0;
  while (auto block = stream.next_block()) {
    const std::size_t rows = block->rows();
    num += chunked_row_sum(rows,
                           [&](std::size_t r) { return row_projection_energy(block->row(r), w); });
    den += block->frobenius_sq();
    n += rows;
  }
  if (n == 0) throw std::invalid_argument("explained_variance: empty stream");
  if (!(den > 0.0)) throw std::invalid_argument("explained_variance: data has zero energy");
  return std::min(num / den, 1.0);
}

double unnormalized_error(const DenseVector& w, const Dataset& data, double lambda_max) {
  if (w.size() != data.dim())
    throw std::invalid_argument("unnormalized_error: vector has dimension " +
                                std::to_string(w.size()) + " but data dimension is " +
                                std::to_string(data.dim()));
  DenseMatrix wm(w.size(), 1);
  for (std::size_t i = 0; i < w.size(); ++i) wm(i, 0) = w[i];
  const double captured =
      chunked_row_sum(data.n(), [&](std::size_t r) { return row_projection_energy(data.row(r), wm); });
  double err = lambda_max - captured;
  if (err < 0.0) {
    if (err < -1e-6 * std::max(1.0, std::abs(lambda_max)))
      throw std::runtime_error("unnormalized_error: captured energy exceeds lambda_max; "
                               "lambda_max is inconsistent with the data");
    err = 0.0;
  }
  return err;
}

}  // namespace spca
