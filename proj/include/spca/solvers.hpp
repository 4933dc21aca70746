#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "spca/ingest.hpp"
#include "spca/linalg.hpp"
#include "spca/rng.hpp"

namespace spca {

// The entire retained state of a streaming solver: an orthonormal d x k
// basis, k eigenvalue estimates co-sorted non-increasing, and the number of
// blocks absorbed so far.
struct SubspaceEstimate {
  DenseMatrix q;
  DiagonalWeights lambda;
  std::uint64_t tau = 0;
};

enum class Algorithm { history, oja, oja_pp, block_power, dbpca, power_batch, vr_pca };

std::string algorithm_name(Algorithm a);
std::optional<Algorithm> algorithm_from_name(const std::string& name);

struct SolverConfig {
  Algorithm algorithm = Algorithm::history;
  std::size_t dim = 0;
  std::size_t k = 1;
  std::size_t block_size = 10;
  int m = 3;                 // inner iterations per block (history)
  double tol = 1e-8;         // inner-loop early-exit angle
  double step_c = 1.0;       // Oja family step constant, step = c / t
  int epochs = 5;            // vr_pca
  double eta = 0.0;          // vr_pca step; 0 = N / ||X||_F^2 default
  int iters = 100;           // power_batch
  std::uint64_t seed = 1;
  bool rank1_track_lambda = false;   // k=1 history: carry lambda instead of weight 1
  std::uint64_t n_blocks_hint = 0;   // expected stream length (oja_pp staging)
  std::size_t dbpca_buffer_cap = std::size_t{1} << 15;  // samples
};

// Tracks bytes of working state a solver holds; peak is what the memory
// contract tests assert against the analytic count.
struct MemoryMeter {
  std::size_t live = 0;
  std::size_t peak = 0;
  void add(std::size_t b) {
    live += b;
    peak = std::max(peak, live);
  }
  void sub(std::size_t b) { live -= std::min(b, live); }
};

// Streaming solvers consume one block at a time, either whole (absorb) or
// row by row, and expose a snapshot of their estimate. Row feeding lets a
// caller drive the solver without ever materializing a block; solvers that
// must revisit a block's rows buffer them and account for the bytes.
class StreamingSolver {
 public:
  explicit StreamingSolver(const SolverConfig& cfg);
  virtual ~StreamingSolver() = default;

  void absorb(const DataBlock& block);
  void begin_block();
  void feed_row(const RowView& row);
  void end_block();

  virtual const SubspaceEstimate& estimate() const { return est_; }
  bool diverged() const { return diverged_; }
  int rank_repairs() const { return repairs_; }
  std::uint64_t blocks_seen() const { return blocks_; }
  std::uint64_t rows_seen() const { return rows_seen_; }
  const MemoryMeter& memory() const { return meter_; }
  const SolverConfig& config() const { return cfg_; }

 protected:
  virtual void on_row(const RowView& row) = 0;
  virtual void finish_block() = 0;

  // Commits a work panel as the new basis: validates finiteness, co-sorts
  // columns by weight, swaps the panel into the estimate.
  void commit(DenseMatrix& panel, std::vector<double> lambda);
  void alloc(DenseMatrix& m, std::size_t r, std::size_t c);

  SolverConfig cfg_;
  std::size_t d_ = 0, k_ = 0;
  SubspaceEstimate est_;
  RngState rng_;
  MemoryMeter meter_;
  std::uint64_t blocks_ = 0;
  std::uint64_t rows_seen_ = 0;
  std::size_t rows_in_block_ = 0;
  const DataBlock* borrowed_ = nullptr;  // set during absorb()
  bool in_block_ = false;
  bool diverged_ = false;
  int repairs_ = 0;
};

std::unique_ptr<StreamingSolver> make_streaming_solver(const SolverConfig& cfg);

// Orthonormal d x k basis from a seeded Gaussian draw.
DenseMatrix init_random_subspace(std::size_t d, std::size_t k, RngState& rng);

// One-shot forms of the streaming updates (the solver classes are thin
// drivers around the same arithmetic).
SubspaceEstimate history_first_block(const DenseMatrix& q0, const DataBlock& block, int m,
                                     double tol, RngState& rng);
SubspaceEstimate history_update(const SubspaceEstimate& state, const DataBlock& block, int m,
                                double tol, RngState& rng, bool rank1_track_lambda = false);
SubspaceEstimate oja_update(const SubspaceEstimate& state, const DataBlock& block, double c,
                            std::uint64_t t, RngState& rng);
SubspaceEstimate block_power_update(const SubspaceEstimate& state, const DataBlock& block,
                                    RngState& rng);

struct BatchResult {
  SubspaceEstimate estimate;
  bool diverged = false;
};

using BatchObserver = std::function<void(int pass, const SubspaceEstimate&)>;

// Orthogonal iteration on (1/N) X^T X, one full data pass per iteration.
BatchResult power_method_batch(const Dataset& data, std::size_t k, int iters, RngState& rng,
                               const BatchObserver& observe = {});

// Variance-reduced stochastic rank-1 solver: each epoch does one full pass
// for the anchored gradient then N stochastic steps.
BatchResult vr_pca(const Dataset& data, int epochs, double eta, RngState& rng,
                   const BatchObserver& observe = {});

struct OracleEigen {
  std::vector<double> eigenvalues;  // descending
  DenseMatrix eigenvectors;         // column j pairs with eigenvalues[j]
};

// Exact full spectrum of a small symmetric matrix (d <= 64); the test oracle
// for the iterative solvers.
OracleEigen exact_eig_oracle(const DenseMatrix& cov);

}  // namespace spca
