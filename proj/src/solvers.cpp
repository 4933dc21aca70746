#include "spca/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "spca/metrics.hpp"

namespace spca {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<double> raw_column_norms(const DenseMatrix& a) {
  std::vector<double> out(a.cols(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* row = a.data() + r * a.cols();
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += row[j] * row[j];
  }
  for (double& x : out) x = std::sqrt(x);
  return out;
}

// Stable co-sort of basis columns and their weights, non-increasing weight.
// A permutation of (column, weight) pairs leaves the tracked surrogate
// Q diag(w) Q^T unchanged.
void sort_columns_by_weight(DenseMatrix& q, std::vector<double>& lambda) {
  std::vector<std::size_t> order(lambda.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lambda[a] > lambda[b]; });
  bool sorted = true;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] != i) sorted = false;
  if (sorted) return;
  std::vector<double> lam(lambda.size());
  for (std::size_t j = 0; j < order.size(); ++j) lam[j] = lambda[order[j]];
  double tmp[64];
  for (std::size_t r = 0; r < q.rows(); ++r) {
    double* row = q.data() + r * q.cols();
    for (std::size_t j = 0; j < order.size(); ++j) tmp[j] = row[order[j]];
    for (std::size_t j = 0; j < order.size(); ++j) row[j] = tmp[j];
  }
  lambda = std::move(lam);
}

// S(r,:) = qi(r,:) + inv_b * S(r,:)
void combine_first(DenseMatrix& s, const DenseMatrix& qi, double inv_b) {
  const std::size_t d = s.rows(), k = s.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(d); ++r) {
    double* sr = s.data() + r * k;
    const double* qr = qi.data() + r * k;
    for (std::size_t j = 0; j < k; ++j) sr[j] = qr[j] + inv_b * sr[j];
  }
}

// S(r,:) = c1 * q_prev(r,:) * cl + c2 * S(r,:)
void combine_update(DenseMatrix& s, const DenseMatrix& q_prev, const DenseMatrix& cl, double c1,
                    double c2) {
  const std::size_t d = s.rows(), k = s.cols();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(d); ++r) {
    double* sr = s.data() + r * k;
    const double* qr = q_prev.data() + r * k;
    double tmp[64];
    for (std::size_t j = 0; j < k; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += qr[i] * cl(i, j);
      tmp[j] = acc;
    }
    for (std::size_t j = 0; j < k; ++j) sr[j] = c1 * tmp[j] + c2 * sr[j];
  }
}

// Owned copy of a block's rows for solvers that must revisit them.
class RowBuffer {
 public:
  RowBuffer(std::size_t dim, MemoryMeter& meter) : dim_(dim), sparse_(dim), meter_(meter) {}

  void append(const RowView& row) {
    if (rows_ == 0) dense_mode_ = row.is_dense();
    if (dense_mode_) {
      dense_.insert(dense_.end(), row.dense.begin(), row.dense.end());
      meter_.add(row.dense.size() * sizeof(double));
    } else {
      entries_.clear();
      for (std::size_t i = 0; i < row.idx.size(); ++i)
        entries_.emplace_back(row.idx[i], row.val[i]);
      sparse_.add_row(entries_);
      meter_.add(row.idx.size() * (sizeof(std::uint32_t) + sizeof(double)) + sizeof(std::size_t));
    }
    ++rows_;
  }

  std::size_t rows() const { return rows_; }

  void gram_into(const DenseMatrix& q, DenseMatrix& out) const {
    if (dense_mode_)
      gram_apply_into(std::span<const double>(dense_.data(), dense_.size()), rows_, dim_, q, 1.0,
                      out);
    else
      gram_apply_into(sparse_, q, 1.0, out);
  }

  void clear() {
    meter_.sub(dense_.size() * sizeof(double));
    meter_.sub(sparse_.nnz() * (sizeof(std::uint32_t) + sizeof(double)) +
               rows_ * sizeof(std::size_t));
    dense_.clear();
    dense_.shrink_to_fit();
    sparse_.clear();
    rows_ = 0;
  }

 private:
  std::size_t dim_;
  bool dense_mode_ = true;
  std::size_t rows_ = 0;
  std::vector<double> dense_;
  SparseBlock sparse_;
  std::vector<std::pair<std::uint32_t, double>> entries_;
  MemoryMeter& meter_;
};

void gram_term_into(const DataBlock& block, const DenseMatrix& q, DenseMatrix& out) {
  gram_apply_into(block, q, 1.0, out);
}

}  // namespace

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::history: return "history";
    case Algorithm::oja: return "oja";
    case Algorithm::oja_pp: return "oja_pp";
    case Algorithm::block_power: return "block_power";
    case Algorithm::dbpca: return "dbpca";
    case Algorithm::power_batch: return "power_batch";
    case Algorithm::vr_pca: return "vr_pca";
  }
  return "unknown";
}

std::optional<Algorithm> algorithm_from_name(const std::string& name) {
  for (Algorithm a : {Algorithm::history, Algorithm::oja, Algorithm::oja_pp, Algorithm::block_power,
                      Algorithm::dbpca, Algorithm::power_batch, Algorithm::vr_pca})
    if (algorithm_name(a) == name) return a;
  return std::nullopt;
}

DenseMatrix init_random_subspace(std::size_t d, std::size_t k, RngState& rng) {
  require(k >= 1 && k < d, "init_random_subspace: need 1 <= k < d, got k=" + std::to_string(k) +
                               ", d=" + std::to_string(d));
  DenseMatrix g(d, k);
  auto gen = rng.fork();
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < k; ++j) g(r, j) = gen.normal();
  return thin_qr(g, rng).q;
}

// ---------------------------------------------------------------------------
// StreamingSolver base
// ---------------------------------------------------------------------------

StreamingSolver::StreamingSolver(const SolverConfig& cfg)
    : cfg_(cfg), d_(cfg.dim), k_(cfg.k), rng_(tag_seed(cfg.seed, "solver")) {
  require(d_ >= 2, "solver: dimension must be >= 2");
  require(k_ >= 1 && k_ < d_, "solver: need 1 <= k < d");
  require(k_ <= 64, "solver: ranks above 64 are not supported");
  require(cfg.m >= 1, "solver: inner iteration count m must be >= 1");
  require(cfg.block_size >= 1, "solver: block size must be >= 1");
  require(std::isfinite(cfg.tol) && cfg.tol >= 0.0, "solver: tol must be finite and >= 0");
  est_.q = init_random_subspace(d_, k_, rng_);
  meter_.add(d_ * k_ * sizeof(double));
  est_.lambda = DiagonalWeights(std::vector<double>(k_, 1.0));
}

void StreamingSolver::alloc(DenseMatrix& m, std::size_t r, std::size_t c) {
  meter_.sub(m.rows() * m.cols() * sizeof(double));
  m = DenseMatrix(r, c);
  meter_.add(r * c * sizeof(double));
}

void StreamingSolver::begin_block() {
  if (in_block_) throw std::logic_error("begin_block: previous block not finished");
  in_block_ = true;
  rows_in_block_ = 0;
}

void StreamingSolver::feed_row(const RowView& row) {
  if (diverged_) return;
  if (!in_block_) throw std::logic_error("feed_row: no open block");
  require(row.dim == d_, "solver: row has dimension " + std::to_string(row.dim) +
                             " but solver expects " + std::to_string(d_));
  on_row(row);
  ++rows_in_block_;
}

void StreamingSolver::end_block() {
  if (!in_block_) throw std::logic_error("end_block: no open block");
  if (!diverged_ && rows_in_block_ > 0) {
    finish_block();
    ++blocks_;
    est_.tau = blocks_;
    rows_seen_ += rows_in_block_;
  }
  borrowed_ = nullptr;
  in_block_ = false;
}

void StreamingSolver::absorb(const DataBlock& block) {
  if (diverged_) return;
  require(block.dim() == d_, "solver: block dimension " + std::to_string(block.dim()) +
                                 " does not match solver dimension " + std::to_string(d_));
  begin_block();
  borrowed_ = &block;
  meter_.add(block.is_dense() ? block.rows() * block.dim() * sizeof(double)
                              : block.sparse()->byte_size());
  rows_in_block_ = block.rows();
  end_block();
  meter_.sub(block.is_dense() ? block.rows() * block.dim() * sizeof(double)
                              : block.sparse()->byte_size());
}

void StreamingSolver::commit(DenseMatrix& panel, std::vector<double> lambda) {
  if (!panel.all_finite()) {
    diverged_ = true;
    return;
  }
  for (double x : lambda)
    if (!std::isfinite(x)) {
      diverged_ = true;
      return;
    }
  sort_columns_by_weight(panel, lambda);
  std::swap(est_.q, panel);
  est_.lambda = DiagonalWeights(std::move(lambda));
}

// ---------------------------------------------------------------------------
// History PCA
// ---------------------------------------------------------------------------

namespace {

class HistorySolver : public StreamingSolver {
 public:
  explicit HistorySolver(const SolverConfig& cfg) : StreamingSolver(cfg), buffer_(d_, meter_) {
    alloc(acc_, d_, k_);
  }

  HistorySolver(const SolverConfig& cfg, SubspaceEstimate resume) : HistorySolver(cfg) {
    require(resume.q.rows() == d_ && resume.q.cols() == k_, "history: resume state shape mismatch");
    est_ = std::move(resume);
    blocks_ = est_.tau;
  }

 protected:
  void on_row(const RowView& row) override {
    if (cfg_.m > 1) {
      buffer_.append(row);
    } else {
      if (rows_in_block_ == 0) acc_.set_zero();
      gram_accumulate_row(row, est_.q, acc_, tk_);
    }
  }

  void finish_block() override {
    const double inv_b = 1.0 / static_cast<double>(rows_in_block_);
    const bool first = (blocks_ == 0);
    const double tau_next = static_cast<double>(blocks_) + 1.0;
    const double c1 = static_cast<double>(blocks_) / tau_next;
    const double c2 = first ? inv_b : inv_b / tau_next;
    const bool weighted = (k_ > 1) || cfg_.rank1_track_lambda;

    const DenseMatrix* qi = &est_.q;
    DenseMatrix* work = &acc_;
    DenseMatrix* final_panel = nullptr;
    std::vector<double> lambda_pre;
    for (int it = 0; it < cfg_.m; ++it) {
      const bool have_accumulated = (it == 0 && !borrowed_ && cfg_.m == 1);
      if (!have_accumulated) {
        if (borrowed_)
          gram_term_into(*borrowed_, *qi, *work);
        else
          buffer_.gram_into(*qi, *work);
      }
      if (first) {
        combine_first(*work, *qi, inv_b);
      } else {
        DenseMatrix c = mat_tmat(est_.q, *qi);
        if (weighted)
          for (std::size_t i = 0; i < k_; ++i)
            for (std::size_t j = 0; j < k_; ++j) c(i, j) *= est_.lambda[i];
        combine_update(*work, est_.q, c, c1, c2);
      }
      if (!work->all_finite()) {
        diverged_ = true;
        buffer_.clear();
        return;
      }
      lambda_pre = raw_column_norms(*work);
      repairs_ += thin_qr_inplace(*work, r_, rng_);
      final_panel = work;
      if (it + 1 < cfg_.m) {
        const double delta = principal_angle_distance(*qi, *work);
        if (delta < cfg_.tol) break;
        if (alt_.rows() != d_) alloc(alt_, d_, k_);
        qi = work;
        work = (work == &acc_) ? &alt_ : &acc_;
      }
    }
    commit(*final_panel, std::move(lambda_pre));
    buffer_.clear();
  }

 private:
  DenseMatrix acc_;   // gram accumulator, then the S panel
  DenseMatrix alt_;   // second work panel, only when m > 1
  DenseMatrix r_;
  std::vector<double> tk_;
  RowBuffer buffer_;
};

// ---------------------------------------------------------------------------
// Oja family (plain and staged-activation variant)
// ---------------------------------------------------------------------------

class OjaSolver : public StreamingSolver {
 public:
  OjaSolver(const SolverConfig& cfg, bool staged) : StreamingSolver(cfg), staged_(staged) {
    require(std::isfinite(cfg.step_c) && cfg.step_c > 0.0, "oja: step constant c must be > 0");
    alloc(acc_, d_, k_);
    active_ = k_;
    if (staged_ && k_ > 1 && cfg.n_blocks_hint > 0) {
      active_ = 1;
      stage_gap_ = (cfg.n_blocks_hint + 2 * k_ - 1) / (2 * k_);  // ceil(n / 2k)
      if (stage_gap_ == 0) stage_gap_ = 1;
    }
  }

  OjaSolver(const SolverConfig& cfg, bool staged, SubspaceEstimate resume, std::uint64_t blocks)
      : OjaSolver(cfg, staged) {
    require(resume.q.rows() == d_ && resume.q.cols() == k_, "oja: resume state shape mismatch");
    est_ = std::move(resume);
    blocks_ = blocks;
  }

  const SubspaceEstimate& estimate() const override {
    if (active_ == k_) return est_;
    // Placeholder columns drift out of orthogonality while staging is under
    // way; re-orthonormalize them against the live prefix for reporting.
    cache_ = est_;
    cache_.q = thin_qr(cache_.q).q;
    return cache_;
  }

 protected:
  void on_row(const RowView& row) override {
    if (rows_in_block_ == 0) {
      activate_due();
      acc_.set_zero();
    }
    gram_accumulate_row(row, est_.q, acc_, tk_);
  }

  void finish_block() override {
    const std::uint64_t t = blocks_ + 1;
    if (borrowed_) {
      activate_due();
      gram_term_into(*borrowed_, est_.q, acc_);
    }
    const double step = cfg_.step_c / static_cast<double>(t) / static_cast<double>(rows_in_block_);
    const std::size_t d = d_, k = k_;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(d); ++r) {
      double* sr = acc_.data() + r * k;
      const double* qr = est_.q.data() + r * k;
      for (std::size_t j = 0; j < k; ++j) sr[j] = qr[j] + step * sr[j];
    }
    if (!acc_.all_finite()) {
      diverged_ = true;
      return;
    }
    if (active_ == k_) {
      std::vector<double> lambda = raw_column_norms(acc_);
      if (k_ == 1)
        normalize_column_or_repair(acc_, lambda[0]);
      else
        repairs_ += thin_qr_inplace(acc_, r_, rng_);
      commit(acc_, std::move(lambda));
    } else {
      // Only the activated prefix takes part in the update.
      if (stage_panel_.rows() != d_ || stage_panel_.cols() != active_)
        alloc(stage_panel_, d_, active_);
      for (std::size_t r = 0; r < d_; ++r)
        for (std::size_t j = 0; j < active_; ++j) stage_panel_(r, j) = acc_(r, j);
      std::vector<double> lambda = raw_column_norms(stage_panel_);
      lambda.resize(k_, 0.0);
      if (active_ == 1)
        normalize_column_or_repair(stage_panel_, lambda[0]);
      else
        repairs_ += thin_qr_inplace(stage_panel_, r_, rng_);
      DenseMatrix panel = est_.q;
      for (std::size_t r = 0; r < d_; ++r)
        for (std::size_t j = 0; j < active_; ++j) panel(r, j) = stage_panel_(r, j);
      commit(panel, std::move(lambda));
    }
  }

 private:
  void activate_due() {
    const std::uint64_t t = blocks_ + 1;
    while (active_ < k_ && t >= 1 + static_cast<std::uint64_t>(active_) * stage_gap_) {
      auto gen = rng_.fork();
      std::vector<double> col(d_);
      for (double& x : col) x = gen.normal();
      // Orthogonalize the fresh column against the live prefix.
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t i = 0; i < active_; ++i) {
          double s = 0.0;
          for (std::size_t r = 0; r < d_; ++r) s += est_.q(r, i) * col[r];
          for (std::size_t r = 0; r < d_; ++r) col[r] -= s * est_.q(r, i);
        }
      const double nrm = norm2(col);
      for (std::size_t r = 0; r < d_; ++r) est_.q(r, active_) = col[r] / nrm;
      ++active_;
    }
  }

  void normalize_column_or_repair(DenseMatrix& panel, double nrm) {
    if (nrm <= 1e-300 || !std::isfinite(nrm)) {
      ++repairs_;
      auto gen = rng_.fork();
      std::vector<double> col(panel.rows());
      for (double& x : col) x = gen.normal();
      const double n2 = norm2(col);
      for (std::size_t r = 0; r < panel.rows(); ++r) panel(r, 0) = col[r] / n2;
    } else {
      for (std::size_t r = 0; r < panel.rows(); ++r) panel(r, 0) /= nrm;
    }
  }

  bool staged_;
  std::size_t active_ = 1;
  std::uint64_t stage_gap_ = 0;
  DenseMatrix acc_;
  DenseMatrix stage_panel_;
  DenseMatrix r_;
  std::vector<double> tk_;
  mutable SubspaceEstimate cache_;
};

// ---------------------------------------------------------------------------
// Block power and its doubling-buffer variant
// ---------------------------------------------------------------------------

class BlockPowerSolver : public StreamingSolver {
 public:
  explicit BlockPowerSolver(const SolverConfig& cfg) : StreamingSolver(cfg) { alloc(acc_, d_, k_); }

  BlockPowerSolver(const SolverConfig& cfg, SubspaceEstimate resume) : BlockPowerSolver(cfg) {
    require(resume.q.rows() == d_ && resume.q.cols() == k_,
            "block_power: resume state shape mismatch");
    est_ = std::move(resume);
    blocks_ = est_.tau;
  }

 protected:
  void on_row(const RowView& row) override {
    if (rows_in_block_ == 0) acc_.set_zero();
    gram_accumulate_row(row, est_.q, acc_, tk_);
  }

  void finish_block() override {
    if (borrowed_) gram_term_into(*borrowed_, est_.q, acc_);
    power_step(acc_, 1.0 / static_cast<double>(rows_in_block_));
  }

  void power_step(DenseMatrix& s, double scale) {
    const std::size_t n = s.rows() * s.cols();
    double* p = s.data();
    for (std::size_t i = 0; i < n; ++i) p[i] *= scale;
    if (!s.all_finite()) {
      diverged_ = true;
      return;
    }
    std::vector<double> lambda = raw_column_norms(s);
    if (k_ == 1) {
      const double nrm = lambda[0];
      if (nrm <= 1e-300) {
        ++repairs_;
        auto gen = rng_.fork();
        for (std::size_t r = 0; r < d_; ++r) s(r, 0) = gen.normal();
        double acc = 0.0;
        for (std::size_t r = 0; r < d_; ++r) acc += s(r, 0) * s(r, 0);
        const double unit = std::sqrt(acc);
        for (std::size_t r = 0; r < d_; ++r) s(r, 0) /= unit;
      } else {
        for (std::size_t r = 0; r < d_; ++r) s(r, 0) /= nrm;
      }
    } else {
      repairs_ += thin_qr_inplace(s, r_, rng_);
    }
    commit(s, std::move(lambda));
  }

  DenseMatrix acc_;
  DenseMatrix r_;
  std::vector<double> tk_;
};

class DbpcaSolver : public BlockPowerSolver {
 public:
  explicit DbpcaSolver(const SolverConfig& cfg)
      : BlockPowerSolver(cfg), buffer_(d_, meter_), target_(cfg.block_size) {
    cap_ = std::max<std::size_t>(cfg.dbpca_buffer_cap, 1);
    target_ = std::min(target_, cap_);
  }

 protected:
  void on_row(const RowView& row) override { buffer_.append(row); }

  void finish_block() override {
    if (borrowed_)
      for (std::size_t r = 0; r < borrowed_->rows(); ++r) buffer_.append(borrowed_->row(r));
    if (buffer_.rows() < target_) return;
    const std::size_t n = buffer_.rows();
    buffer_.gram_into(est_.q, acc_);
    power_step(acc_, 1.0 / static_cast<double>(n));
    buffer_.clear();
    target_ = std::min(target_ * 2, cap_);
  }

 private:
  RowBuffer buffer_;
  std::size_t target_;
  std::size_t cap_;
};

}  // namespace

std::unique_ptr<StreamingSolver> make_streaming_solver(const SolverConfig& cfg) {
  switch (cfg.algorithm) {
    case Algorithm::history: return std::make_unique<HistorySolver>(cfg);
    case Algorithm::oja: return std::make_unique<OjaSolver>(cfg, false);
    case Algorithm::oja_pp: return std::make_unique<OjaSolver>(cfg, true);
    case Algorithm::block_power: return std::make_unique<BlockPowerSolver>(cfg);
    case Algorithm::dbpca: return std::make_unique<DbpcaSolver>(cfg);
    default:
      throw std::invalid_argument("make_streaming_solver: " + algorithm_name(cfg.algorithm) +
                                  " is not a streaming algorithm");
  }
}

// ---------------------------------------------------------------------------
// One-shot update forms
// ---------------------------------------------------------------------------

namespace {

SolverConfig base_config(Algorithm alg, std::size_t d, std::size_t k, RngState& rng) {
  SolverConfig cfg;
  cfg.algorithm = alg;
  cfg.dim = d;
  cfg.k = k;
  cfg.seed = mix_seed(rng.seed(), rng.cursor());
  rng.skip(1);
  return cfg;
}

}  // namespace

SubspaceEstimate history_first_block(const DenseMatrix& q0, const DataBlock& block, int m,
                                     double tol, RngState& rng) {
  SolverConfig cfg = base_config(Algorithm::history, q0.rows(), q0.cols(), rng);
  cfg.m = m;
  cfg.tol = tol;
  SubspaceEstimate init;
  init.q = q0;
  init.lambda = DiagonalWeights(std::vector<double>(q0.cols(), 1.0));
  init.tau = 0;
  HistorySolver solver(cfg, std::move(init));
  solver.absorb(block);
  return solver.estimate();
}

SubspaceEstimate history_update(const SubspaceEstimate& state, const DataBlock& block, int m,
                                double tol, RngState& rng, bool rank1_track_lambda) {
  require(state.tau >= 1, "history_update: state must have absorbed at least one block");
  SolverConfig cfg = base_config(Algorithm::history, state.q.rows(), state.q.cols(), rng);
  cfg.m = m;
  cfg.tol = tol;
  cfg.rank1_track_lambda = rank1_track_lambda;
  HistorySolver solver(cfg, state);
  solver.absorb(block);
  return solver.estimate();
}

SubspaceEstimate oja_update(const SubspaceEstimate& state, const DataBlock& block, double c,
                            std::uint64_t t, RngState& rng) {
  require(t >= 1, "oja_update: t must be >= 1");
  SolverConfig cfg = base_config(Algorithm::oja, state.q.rows(), state.q.cols(), rng);
  cfg.step_c = c;
  OjaSolver solver(cfg, false, state, t - 1);
  solver.absorb(block);
  return solver.estimate();
}

SubspaceEstimate block_power_update(const SubspaceEstimate& state, const DataBlock& block,
                                    RngState& rng) {
  SolverConfig cfg = base_config(Algorithm::block_power, state.q.rows(), state.q.cols(), rng);
  BlockPowerSolver solver(cfg, state);
  solver.absorb(block);
  return solver.estimate();
}

// ---------------------------------------------------------------------------
// Batch solvers
// ---------------------------------------------------------------------------

BatchResult power_method_batch(const Dataset& data, std::size_t k, int iters, RngState& rng,
                               const BatchObserver& observe) {
  require(data.n() > 0, "power_method_batch: empty dataset");
  require(iters >= 1, "power_method_batch: need iters >= 1");
  const std::size_t d = data.dim();
  BatchResult out;
  out.estimate.q = init_random_subspace(d, k, rng);
  out.estimate.lambda = DiagonalWeights(std::vector<double>(k, 1.0));
  DenseMatrix g(d, k), r;
  std::vector<double> tk;
  const double inv_n = 1.0 / static_cast<double>(data.n());
  for (int it = 1; it <= iters; ++it) {
    g.set_zero();
    for (std::size_t row = 0; row < data.n(); ++row)
      gram_accumulate_row(data.row(row), out.estimate.q, g, tk);
    double* p = g.data();
    for (std::size_t i = 0; i < d * k; ++i) p[i] *= inv_n;
    if (!g.all_finite()) {
      out.diverged = true;
      return out;
    }
    std::vector<double> lambda = raw_column_norms(g);
    RngState repair(mix_seed(rng.seed(), 0xb10c + static_cast<std::uint64_t>(it)));
    thin_qr_inplace(g, r, repair);
    sort_columns_by_weight(g, lambda);
    std::swap(out.estimate.q, g);
    out.estimate.lambda = DiagonalWeights(std::move(lambda));
    out.estimate.tau = static_cast<std::uint64_t>(it);
    if (observe) observe(it, out.estimate);
  }
  return out;
}

BatchResult vr_pca(const Dataset& data, int epochs, double eta, RngState& rng,
                   const BatchObserver& observe) {
  require(data.n() > 0, "vr_pca: empty dataset");
  require(epochs >= 1, "vr_pca: need epochs >= 1");
  require(std::isfinite(eta) && eta >= 0.0, "vr_pca: eta must be finite and >= 0");
  const std::size_t d = data.dim();
  const std::size_t n = data.n();

  DenseVector w(d);
  {
    auto gen = rng.fork();
    for (double& x : w) x = gen.normal();
    w = normalized(w);
  }
  DenseVector anchor = w;
  DenseVector g(d), step(d);

  auto row_dot = [&](const RowView& row, const DenseVector& v) {
    double s = 0.0;
    if (!row.dense.empty())
      for (std::size_t c = 0; c < row.dense.size(); ++c) s += row.dense[c] * v[c];
    else
      for (std::size_t i = 0; i < row.idx.size(); ++i) s += row.val[i] * v[row.idx[i]];
    return s;
  };
  auto row_axpy = [&](const RowView& row, double a, DenseVector& v) {
    if (!row.dense.empty())
      for (std::size_t c = 0; c < row.dense.size(); ++c) v[c] += a * row.dense[c];
    else
      for (std::size_t i = 0; i < row.idx.size(); ++i) v[row.idx[i]] += a * row.val[i];
  };

  BatchResult out;
  out.estimate.q = DenseMatrix(d, 1);
  out.estimate.lambda = DiagonalWeights(std::vector<double>{1.0});
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    // Full pass: anchored gradient g = (1/N) X^T X anchor.
    std::fill(g.begin(), g.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const RowView row = data.row(i);
      row_axpy(row, row_dot(row, anchor), g);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& x : g) x *= inv_n;
    auto pick = rng.fork();
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t i = static_cast<std::size_t>(pick.next() % n);
      const RowView row = data.row(i);
      const double a = row_dot(row, w);
      const double b = row_dot(row, anchor);
      for (std::size_t c = 0; c < d; ++c) step[c] = w[c] + eta * g[c];
      row_axpy(row, eta * (a - b), step);
      double nrm = 0.0;
      for (double x : step) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (!(nrm > 0.0) || !std::isfinite(nrm)) {
        out.diverged = true;
        return out;
      }
      for (std::size_t c = 0; c < d; ++c) w[c] = step[c] / nrm;
    }
    anchor = w;
    out.estimate.q.set_column(0, w);
    const double rayleigh = std::max(dot(anchor, g), 0.0);
    out.estimate.lambda = DiagonalWeights(std::vector<double>{rayleigh});
    out.estimate.tau = static_cast<std::uint64_t>(epoch);
    if (observe) observe(epoch, out.estimate);
  }
  return out;
}

OracleEigen exact_eig_oracle(const DenseMatrix& cov) {
  require(cov.rows() == cov.cols(), "exact_eig_oracle: matrix must be square");
  require(cov.rows() >= 1 && cov.rows() <= 64,
          "exact_eig_oracle: supported sizes are 1..64, got " + std::to_string(cov.rows()));
  const double scale = std::max(1.0, cov.max_abs());
  for (std::size_t i = 0; i < cov.rows(); ++i)
    for (std::size_t j = i + 1; j < cov.cols(); ++j)
      if (std::abs(cov(i, j) - cov(j, i)) > 1e-10 * scale)
        throw std::invalid_argument("exact_eig_oracle: matrix is not symmetric at (" +
                                    std::to_string(i) + "," + std::to_string(j) + ")");
  SymEig eig = jacobi_eigen(cov);
  OracleEigen out;
  out.eigenvalues = std::move(eig.values);
  out.eigenvectors = std::move(eig.vectors);
  return out;
}

}  // namespace spca
