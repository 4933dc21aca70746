#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <variant>

#include "spca/datagen.hpp"
#include "spca/linalg.hpp"

namespace spca {

// One block of B samples in d dimensions; the unit of streaming.
class DataBlock {
 public:
  DataBlock(DenseMatrix m) : payload_(std::move(m)) {}
  DataBlock(SparseBlock s) : payload_(std::move(s)) {}

  std::size_t rows() const;
  std::size_t dim() const;
  RowView row(std::size_t r) const;
  bool is_dense() const { return std::holds_alternative<DenseMatrix>(payload_); }
  const DenseMatrix* dense() const { return std::get_if<DenseMatrix>(&payload_); }
  const SparseBlock* sparse() const { return std::get_if<SparseBlock>(&payload_); }
  double frobenius_sq() const;

 private:
  std::variant<DenseMatrix, SparseBlock> payload_;
};

inline void gram_apply_into(const DataBlock& x, const DenseMatrix& v, double scale,
                            DenseMatrix& out) {
  if (auto* d = x.dense())
    gram_apply_into(*d, v, scale, out);
  else
    gram_apply_into(*x.sparse(), v, scale, out);
}

struct StreamStats {
  std::size_t n_samples = 0;
  double frobenius_sq = 0.0;  // running sum of ||x||^2 over emitted samples
  std::size_t dim = 0;
};

// Single-consumer forward stream of disjoint consecutive blocks.
class BlockStream {
 public:
  virtual ~BlockStream() = default;

  // Next B samples; fewer on the final block; nullopt at end of stream.
  virtual std::optional<DataBlock> next_block() = 0;

  std::size_t dim() const { return stats_.dim; }
  std::size_t block_rows() const { return block_rows_; }
  const StreamStats& stats() const { return stats_; }

 protected:
  void note_block(const DataBlock& b) {
    stats_.n_samples += b.rows();
    stats_.frobenius_sq += b.frobenius_sq();
  }
  StreamStats stats_;
  std::size_t block_rows_ = 0;
};

// Infinite stream of spiked-model samples.
std::unique_ptr<BlockStream> make_synthetic_stream(SpikedModel model, std::size_t block_rows,
                                                   std::uint64_t stream_seed);

// LIBSVM text ("label index:value ..."), 1-based strictly increasing indices.
// Labels are discarded; indices become 0-based. Without d_override the file
// is pre-scanned once to find the dimension. ".gz" paths are decompressed on
// the fly. Malformed input raises std::runtime_error naming the line.
std::unique_ptr<BlockStream> parse_libsvm(const std::string& path, std::size_t block_rows,
                                          std::optional<std::size_t> d_override = std::nullopt);

// UCI bag-of-words text: three header lines D, W, NNZ then "docID wordID
// count" triples grouped by non-decreasing docID. One sample per document,
// d = W, raw counts. An NNZ mismatch is a warning, not an error.
std::unique_ptr<BlockStream> parse_docword(const std::string& path, std::size_t block_rows);

// In-memory dataset for evaluation passes and the multi-pass solvers.
class Dataset {
 public:
  static Dataset load(BlockStream& stream);

  std::size_t n() const { return n_; }
  std::size_t dim() const { return dim_; }
  double frobenius_sq() const { return frob_sq_; }
  bool is_dense() const { return std::holds_alternative<DenseMatrix>(storage_); }
  RowView row(std::size_t i) const;
  const DenseMatrix* dense() const { return std::get_if<DenseMatrix>(&storage_); }
  const SparseBlock* sparse() const { return std::get_if<SparseBlock>(&storage_); }

  // Replays the dataset as a fresh stream of blocks.
  std::unique_ptr<BlockStream> stream(std::size_t block_rows) const;

 private:
  std::variant<DenseMatrix, SparseBlock> storage_ = SparseBlock{};
  std::size_t n_ = 0, dim_ = 0;
  double frob_sq_ = 0.0;
};

// Writes rows in LIBSVM text form (label 0, 1-based indices); the inverse of
// parse_libsvm up to the discarded labels.
void write_libsvm(const Dataset& data, std::ostream& out);
void write_libsvm(const SparseBlock& rows, std::ostream& out);

}  // namespace spca
