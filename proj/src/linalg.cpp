#include "spca/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace spca {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), v_(std::move(values)) {
  require(v_.size() == rows_ * cols_, "DenseMatrix: value count " + std::to_string(v_.size()) +
                                          " does not match " + std::to_string(rows_) + "x" +
                                          std::to_string(cols_));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void DenseMatrix::set_zero() { std::fill(v_.begin(), v_.end(), 0.0); }

bool DenseMatrix::all_finite() const {
  for (double x : v_)
    if (!std::isfinite(x)) return false;
  return true;
}

double DenseMatrix::frobenius_norm() const {
  double s = 0.0;
  for (double x : v_) s += x * x;
  return std::sqrt(s);
}

double DenseMatrix::max_abs() const {
  double m = 0.0;
  for (double x : v_) m = std::max(m, std::abs(x));
  return m;
}

DenseVector DenseMatrix::column(std::size_t c) const {
  DenseVector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

void DenseMatrix::set_column(std::size_t c, std::span<const double> values) {
  require(values.size() == rows_, "set_column: length mismatch");
  for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

void SparseBlock::add_row(std::span<const std::pair<std::uint32_t, double>> entries) {
  std::uint32_t prev = 0;
  bool first = true;
  for (const auto& [c, v] : entries) {
    require(c < n_cols_, "SparseBlock: column index " + std::to_string(c) +
                             " out of range (n_cols=" + std::to_string(n_cols_) + ")");
    require(first || c > prev, "SparseBlock: column indices must strictly increase within a row");
    require(std::isfinite(v), "SparseBlock: non-finite value");
    first = false;
    prev = c;
    col_.push_back(c);
    val_.push_back(v);
  }
  row_start_.push_back(col_.size());
}

DenseMatrix SparseBlock::densify() const {
  DenseMatrix m(n_rows(), n_cols_);
  for (std::size_t r = 0; r < n_rows(); ++r) {
    auto cs = row_cols(r);
    auto vs = row_vals(r);
    for (std::size_t i = 0; i < cs.size(); ++i) m(r, cs[i]) = vs[i];
  }
  return m;
}

double SparseBlock::frobenius_sq() const {
  double s = 0.0;
  for (double v : val_) s += v * v;
  return s;
}

void SparseBlock::clear() {
  row_start_.assign(1, 0);
  col_.clear();
  val_.clear();
}

DiagonalWeights::DiagonalWeights(std::vector<double> values) : lambda(std::move(values)) {
  for (double x : lambda)
    require(std::isfinite(x) && x >= 0.0, "DiagonalWeights: entries must be finite and >= 0");
}

// ---------------------------------------------------------------------------
// Gram kernels. Parallel loops only ever split independent output elements;
// the summation order inside each element is fixed, so results are identical
// for any thread count and match the ref:: twins bit for bit.
// ---------------------------------------------------------------------------

namespace {

void check_gram_dims(std::size_t x_cols, std::size_t v_rows, double scale) {
  require(x_cols == v_rows, "gram_apply: block has " + std::to_string(x_cols) +
                                " columns but basis has " + std::to_string(v_rows) + " rows");
  require(std::isfinite(scale), "gram_apply: scale must be finite");
}

}  // namespace

void gram_apply_into(std::span<const double> x_rowmajor, std::size_t rows, std::size_t cols,
                     const DenseMatrix& v, double scale, DenseMatrix& out) {
  check_gram_dims(cols, v.rows(), scale);
  require(x_rowmajor.size() == rows * cols, "gram_apply: raw block size mismatch");
  const std::size_t b = rows, d = cols, k = v.cols();
  const double* x = x_rowmajor.data();
  DenseMatrix y(b, k);  // X V
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(b); ++r) {
    double* yr = y.data() + r * k;
    const double* xr = x + r * d;
    for (std::size_t c = 0; c < d; ++c) {
      const double xv = xr[c];
      if (xv == 0.0) continue;
      const double* vc = v.data() + c * k;
      for (std::size_t j = 0; j < k; ++j) yr[j] += xv * vc[j];
    }
  }
  if (out.rows() != d || out.cols() != k) out = DenseMatrix(d, k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(d); ++c) {
    double* zc = out.data() + c * k;
    for (std::size_t j = 0; j < k; ++j) zc[j] = 0.0;
    for (std::size_t r = 0; r < b; ++r) {
      const double xv = x[r * d + c];
      if (xv == 0.0) continue;
      const double* yr = y.data() + r * k;
      for (std::size_t j = 0; j < k; ++j) zc[j] += xv * yr[j];
    }
    for (std::size_t j = 0; j < k; ++j) zc[j] *= scale;
  }
}

void gram_apply_into(const DenseMatrix& x, const DenseMatrix& v, double scale, DenseMatrix& out) {
  gram_apply_into(std::span<const double>(x.data(), x.rows() * x.cols()), x.rows(), x.cols(), v,
                  scale, out);
}

void gram_apply_into(const SparseBlock& x, const DenseMatrix& v, double scale, DenseMatrix& out) {
  check_gram_dims(x.n_cols(), v.rows(), scale);
  const std::size_t b = x.n_rows(), d = x.n_cols(), k = v.cols();
  DenseMatrix y(b, k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(b); ++r) {
    double* yr = y.data() + r * k;
    auto cs = x.row_cols(r);
    auto vs = x.row_vals(r);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const double* vc = v.data() + static_cast<std::size_t>(cs[i]) * k;
      const double xv = vs[i];
      for (std::size_t j = 0; j < k; ++j) yr[j] += xv * vc[j];
    }
  }
  // Column-wise transpose index so each output row reduces its own entries
  // in ascending sample order.
  std::vector<std::size_t> count(d + 1, 0);
  for (std::size_t r = 0; r < b; ++r)
    for (auto c : x.row_cols(r)) ++count[c + 1];
  for (std::size_t c = 0; c < d; ++c) count[c + 1] += count[c];
  std::vector<std::uint32_t> trow(x.nnz());
  std::vector<double> tval(x.nnz());
  {
    std::vector<std::size_t> cursor(count.begin(), count.end() - 1);
    for (std::size_t r = 0; r < b; ++r) {
      auto cs = x.row_cols(r);
      auto vs = x.row_vals(r);
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const std::size_t pos = cursor[cs[i]]++;
        trow[pos] = static_cast<std::uint32_t>(r);
        tval[pos] = vs[i];
      }
    }
  }
  if (out.rows() != d || out.cols() != k) out = DenseMatrix(d, k);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(d); ++c) {
    double* zc = out.data() + c * k;
    for (std::size_t j = 0; j < k; ++j) zc[j] = 0.0;
    for (std::size_t i = count[c]; i < count[c + 1]; ++i) {
      const double* yr = y.data() + static_cast<std::size_t>(trow[i]) * k;
      const double xv = tval[i];
      for (std::size_t j = 0; j < k; ++j) zc[j] += xv * yr[j];
    }
    for (std::size_t j = 0; j < k; ++j) zc[j] *= scale;
  }
}

DenseMatrix gram_apply(const DenseMatrix& x, const DenseMatrix& v, double scale) {
  DenseMatrix out;
  gram_apply_into(x, v, scale, out);
  return out;
}

DenseMatrix gram_apply(const SparseBlock& x, const DenseMatrix& v, double scale) {
  DenseMatrix out;
  gram_apply_into(x, v, scale, out);
  return out;
}

void gram_accumulate_row(const RowView& row, const DenseMatrix& v, DenseMatrix& acc,
                         std::vector<double>& scratch_k) {
  const std::size_t d = v.rows(), k = v.cols();
  require(row.dim == d, "gram_accumulate_row: row has dimension " + std::to_string(row.dim) +
                            " but basis has " + std::to_string(d) + " rows");
  scratch_k.assign(k, 0.0);
  if (!row.dense.empty()) {
    const double* xr = row.dense.data();
    for (std::size_t c = 0; c < d; ++c) {
      const double xv = xr[c];
      if (xv == 0.0) continue;
      const double* vc = v.data() + c * k;
      for (std::size_t j = 0; j < k; ++j) scratch_k[j] += xv * vc[j];
    }
    for (std::size_t c = 0; c < d; ++c) {
      const double xv = xr[c];
      if (xv == 0.0) continue;
      double* ac = acc.data() + c * k;
      for (std::size_t j = 0; j < k; ++j) ac[j] += xv * scratch_k[j];
    }
  } else {
    for (std::size_t i = 0; i < row.idx.size(); ++i) {
      const double* vc = v.data() + static_cast<std::size_t>(row.idx[i]) * k;
      const double xv = row.val[i];
      for (std::size_t j = 0; j < k; ++j) scratch_k[j] += xv * vc[j];
    }
    for (std::size_t i = 0; i < row.idx.size(); ++i) {
      double* ac = acc.data() + static_cast<std::size_t>(row.idx[i]) * k;
      const double xv = row.val[i];
      for (std::size_t j = 0; j < k; ++j) ac[j] += xv * scratch_k[j];
    }
  }
}

namespace ref {

DenseMatrix gram_apply(const DenseMatrix& x, const DenseMatrix& v, double scale) {
  check_gram_dims(x.cols(), v.rows(), scale);
  const std::size_t b = x.rows(), d = x.cols(), k = v.cols();
  DenseMatrix y(b, k);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double xv = x(r, c);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) y(r, j) += xv * v(c, j);
    }
  DenseMatrix z(d, k);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < b; ++r) {
      const double xv = x(r, c);
      if (xv == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) z(c, j) += xv * y(r, j);
    }
    for (std::size_t j = 0; j < k; ++j) z(c, j) *= scale;
  }
  return z;
}

DenseMatrix gram_apply(const SparseBlock& x, const DenseMatrix& v, double scale) {
  check_gram_dims(x.n_cols(), v.rows(), scale);
  const std::size_t b = x.n_rows(), d = x.n_cols(), k = v.cols();
  DenseMatrix y(b, k);
  for (std::size_t r = 0; r < b; ++r) {
    auto cs = x.row_cols(r);
    auto vs = x.row_vals(r);
    for (std::size_t i = 0; i < cs.size(); ++i)
      for (std::size_t j = 0; j < k; ++j) y(r, j) += vs[i] * v(cs[i], j);
  }
  DenseMatrix z(d, k);
  for (std::size_t r = 0; r < b; ++r) {
    auto cs = x.row_cols(r);
    auto vs = x.row_vals(r);
    for (std::size_t i = 0; i < cs.size(); ++i)
      for (std::size_t j = 0; j < k; ++j) z(cs[i], j) += vs[i] * y(r, j);
  }
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t j = 0; j < k; ++j) z(c, j) *= scale;
  return z;
}

}  // namespace ref

// ---------------------------------------------------------------------------
// Thin QR
// ---------------------------------------------------------------------------

namespace {

double col_dot(const DenseMatrix& m, std::size_t ci, std::size_t cj) {
  double s = 0.0;
  const std::size_t n = m.rows(), k = m.cols();
  const double* p = m.data();
  for (std::size_t r = 0; r < n; ++r) s += p[r * k + ci] * p[r * k + cj];
  return s;
}

void col_axpy(DenseMatrix& m, std::size_t dst, std::size_t src, double a) {
  const std::size_t n = m.rows(), k = m.cols();
  double* p = m.data();
  for (std::size_t r = 0; r < n; ++r) p[r * k + dst] += a * p[r * k + src];
}

void col_scale(DenseMatrix& m, std::size_t c, double a) {
  const std::size_t n = m.rows(), k = m.cols();
  double* p = m.data();
  for (std::size_t r = 0; r < n; ++r) p[r * k + c] *= a;
}

}  // namespace

int thin_qr_inplace(DenseMatrix& a, DenseMatrix& r, RngState& rng) {
  const std::size_t d = a.rows(), k = a.cols();
  require(d >= k && k >= 1, "thin_qr: need rows >= cols >= 1, got " + std::to_string(d) + "x" +
                                std::to_string(k));
  if (r.rows() != k || r.cols() != k) r = DenseMatrix(k, k);
  r.set_zero();
  const double threshold = 1e-12 * a.frobenius_norm();
  int replaced = 0;
  for (std::size_t j = 0; j < k; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t i = 0; i < j; ++i) {
        const double s = col_dot(a, i, j);
        r(i, j) += s;
        col_axpy(a, j, i, -s);
      }
    }
    double nrm = std::sqrt(col_dot(a, j, j));
    if (!(nrm > threshold) || !std::isfinite(nrm)) {
      // Rank collapse: replace with a random direction orthogonal to the
      // previous columns so the iteration stays alive.
      ++replaced;
      auto gen = rng.fork();
      for (;;) {
        for (std::size_t row = 0; row < d; ++row) a(row, j) = gen.normal();
        for (int pass = 0; pass < 2; ++pass)
          for (std::size_t i = 0; i < j; ++i) col_axpy(a, j, i, -col_dot(a, i, j));
        nrm = std::sqrt(col_dot(a, j, j));
        if (nrm > 1e-8) break;
      }
      col_scale(a, j, 1.0 / nrm);
      r(j, j) = 0.0;
    } else {
      r(j, j) = nrm;
      col_scale(a, j, 1.0 / nrm);
    }
  }
  return replaced;
}

ThinQr thin_qr(const DenseMatrix& a, RngState& rng) {
  ThinQr out;
  out.q = a;
  out.replaced_columns = thin_qr_inplace(out.q, out.r, rng);
  return out;
}

ThinQr thin_qr(const DenseMatrix& a) {
  RngState rng(0x7154c0dead11ull);
  return thin_qr(a, rng);
}

DenseVector normalized(const DenseVector& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  if (!(n > 0.0) || !std::isfinite(n))
    throw std::invalid_argument("normalized: zero or non-finite vector");
  DenseVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

DiagonalWeights column_norms(const DenseMatrix& a) {
  std::vector<double> out(a.cols());
  for (std::size_t j = 0; j < a.cols(); ++j) out[j] = std::sqrt(col_dot(a, j, j));
  return DiagonalWeights(std::move(out));
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi for small symmetric matrices
// ---------------------------------------------------------------------------

SymEig jacobi_eigen(const DenseMatrix& sym) {
  const std::size_t n = sym.rows();
  require(n == sym.cols(), "jacobi_eigen: matrix must be square");
  require(n >= 1 && n <= 64, "jacobi_eigen: supported sizes are 1..64, got " + std::to_string(n));
  DenseMatrix a = sym;
  DenseMatrix v = DenseMatrix::identity(n);
  const double scale = std::max(a.frobenius_norm(), 1e-300);
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(2.0 * off) <= 1e-15 * scale) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-18 * scale) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
  SymEig out;
  out.values.resize(n);
  out.vectors = DenseMatrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense helpers
// ---------------------------------------------------------------------------

DenseMatrix mat_tmat(const DenseMatrix& a, const DenseMatrix& b) {
  require(a.rows() == b.rows(), "mat_tmat: row mismatch " + std::to_string(a.rows()) + " vs " +
                                    std::to_string(b.rows()));
  const std::size_t n = a.rows(), ka = a.cols(), kb = b.cols();
  DenseMatrix out(ka, kb);
#pragma omp parallel for schedule(static) collapse(2)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ka); ++i)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(kb); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += a(r, i) * b(r, j);
      out(i, j) = s;
    }
  return out;
}

void matmul_into(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch " + std::to_string(a.cols()) +
                                    " vs " + std::to_string(b.rows()));
  if (out.rows() != a.rows() || out.cols() != b.cols()) out = DenseMatrix(a.rows(), b.cols());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
    double* orow = out.data() + r * m;
    for (std::size_t j = 0; j < m; ++j) orow[j] = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double av = a(r, c);
      if (av == 0.0) continue;
      const double* brow = b.data() + c * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return std::sqrt(s);
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double m = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) m = std::max(m, std::abs(a(r, c) - b(r, c)));
  return m;
}

double orthonormality_defect(const DenseMatrix& q) {
  DenseMatrix g = mat_tmat(q, q);
  double m = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j)
      m = std::max(m, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
  return m;
}

}  // namespace spca
