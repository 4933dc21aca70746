#include "spca/ingest.hpp"

#include <zlib.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace spca {

std::size_t DataBlock::rows() const {
  if (auto* d = dense()) return d->rows();
  return sparse()->n_rows();
}

std::size_t DataBlock::dim() const {
  if (auto* d = dense()) return d->cols();
  return sparse()->n_cols();
}

RowView DataBlock::row(std::size_t r) const {
  RowView v;
  v.dim = dim();
  if (auto* d = dense()) {
    v.dense = d->row(r);
  } else {
    v.idx = sparse()->row_cols(r);
    v.val = sparse()->row_vals(r);
  }
  return v;
}

double DataBlock::frobenius_sq() const {
  if (auto* d = dense()) {
    double s = 0.0;
    for (double x : d->values()) s += x * x;
    return s;
  }
  return sparse()->frobenius_sq();
}

// ---------------------------------------------------------------------------
// Line sources (plain or gzip by extension)
// ---------------------------------------------------------------------------

namespace {

class LineSource {
 public:
  explicit LineSource(const std::string& path) : path_(path) {
    if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
      gz_ = gzopen(path.c_str(), "rb");
      if (!gz_) throw std::runtime_error("cannot open " + path);
    } else {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot open " + path);
    }
  }
  ~LineSource() {
    if (gz_) gzclose(gz_);
  }
  LineSource(const LineSource&) = delete;
  LineSource& operator=(const LineSource&) = delete;

  bool next(std::string& line) {
    line.clear();
    if (gz_) {
      char buf[4096];
      bool got = false;
      for (;;) {
        if (gzgets(gz_, buf, sizeof(buf)) == nullptr) break;
        got = true;
        line += buf;
        if (!line.empty() && line.back() == '\n') {
          line.pop_back();
          break;
        }
      }
      if (!got) return false;
    } else {
      if (!std::getline(file_, line)) return false;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no_;
    return true;
  }

  std::size_t line_no() const { return line_no_; }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream file_;
  gzFile gz_ = nullptr;
  std::size_t line_no_ = 0;
};

[[noreturn]] void parse_fail(const LineSource& src, const std::string& why) {
  throw std::runtime_error("parse error at " + src.path() + ":" + std::to_string(src.line_no()) +
                           ": " + why);
}

bool parse_double(std::string_view tok, double& out) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && std::isfinite(out);
}

bool parse_u64(std::string_view tok, std::uint64_t& out) {
  const char* b = tok.data();
  const char* e = b + tok.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

using SparseRow = std::vector<std::pair<std::uint32_t, double>>;

// Parses one LIBSVM body line into 0-based (index, value) pairs.
// max_index tracks the largest 1-based index seen.
SparseRow parse_libsvm_line(const LineSource& src, std::string_view line,
                            std::uint64_t& max_index) {
  SparseRow row;
  auto toks = split_ws(line);
  for (std::size_t t = 1; t < toks.size(); ++t) {  // toks[0] is the label
    auto tok = toks[t];
    auto colon = tok.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == tok.size())
      parse_fail(src, "expected index:value, got '" + std::string(tok) + "'");
    std::uint64_t index = 0;
    if (!parse_u64(tok.substr(0, colon), index))
      parse_fail(src, "non-numeric feature index '" + std::string(tok.substr(0, colon)) + "'");
    if (index == 0) parse_fail(src, "feature indices are 1-based; got 0");
    double value = 0.0;
    if (!parse_double(tok.substr(colon + 1), value))
      parse_fail(src, "non-numeric feature value '" + std::string(tok.substr(colon + 1)) + "'");
    if (!row.empty() && index <= row.back().first + 1ull)
      parse_fail(src, "feature indices must strictly increase within a line");
    max_index = std::max(max_index, index);
    row.emplace_back(static_cast<std::uint32_t>(index - 1), value);
  }
  return row;
}

class LibsvmStream : public BlockStream {
 public:
  LibsvmStream(const std::string& path, std::size_t block_rows, std::size_t d)
      : src_(path) {
    block_rows_ = block_rows;
    stats_.dim = d;
  }

  std::optional<DataBlock> next_block() override {
    SparseBlock block(stats_.dim);
    std::string line;
    std::size_t rows = 0;
    while (rows < block_rows_ && src_.next(line)) {
      std::uint64_t max_index = 0;
      SparseRow row = parse_libsvm_line(src_, line, max_index);
      if (max_index > stats_.dim)
        parse_fail(src_, "feature index " + std::to_string(max_index) +
                             " exceeds dimension " + std::to_string(stats_.dim));
      block.add_row(row);
      ++rows;
    }
    if (rows == 0) return std::nullopt;
    DataBlock out(std::move(block));
    note_block(out);
    return out;
  }

 private:
  LineSource src_;
};

class DocwordStream : public BlockStream {
 public:
  DocwordStream(const std::string& path, std::size_t block_rows) : src_(path) {
    block_rows_ = block_rows;
    std::string line;
    std::uint64_t vals[3];
    for (int i = 0; i < 3; ++i) {
      if (!src_.next(line)) parse_fail(src_, "missing docword header line");
      auto toks = split_ws(line);
      if (toks.size() != 1 || !parse_u64(toks.empty() ? "" : toks[0], vals[i]))
        parse_fail(src_, "malformed docword header line '" + line + "'");
    }
    n_docs_ = vals[0];
    stats_.dim = vals[1];
    declared_nnz_ = vals[2];
  }

  std::optional<DataBlock> next_block() override {
    SparseBlock block(stats_.dim);
    std::size_t rows = 0;
    while (rows < block_rows_ && emit_next_doc(block)) ++rows;
    if (rows == 0) return std::nullopt;
    DataBlock out(std::move(block));
    note_block(out);
    return out;
  }

 private:
  // Emits one document (or one zero row for a gap in docIDs) into `block`.
  bool emit_next_doc(SparseBlock& block) {
    if (docs_emitted_ >= n_docs_) return false;
    const std::uint64_t doc_id = docs_emitted_ + 1;
    SparseRow row;
    for (;;) {
      if (!pending_valid_ && !read_triple()) break;
      if (pending_doc_ != doc_id) break;  // belongs to a later document
      row.emplace_back(static_cast<std::uint32_t>(pending_word_ - 1), pending_count_);
      pending_valid_ = false;
    }
    std::sort(row.begin(), row.end());
    for (std::size_t i = 1; i < row.size(); ++i)
      if (row[i].first == row[i - 1].first)
        parse_fail(src_, "duplicate wordID " + std::to_string(row[i].first + 1) +
                             " in document " + std::to_string(doc_id));
    block.add_row(row);
    ++docs_emitted_;
    if (docs_emitted_ >= n_docs_ && !pending_valid_ && at_eof_ && seen_nnz_ != declared_nnz_)
      warn_nnz();
    return true;
  }

  bool read_triple() {
    std::string line;
    for (;;) {
      if (!src_.next(line)) {
        at_eof_ = true;
        return false;
      }
      auto toks = split_ws(line);
      if (toks.empty()) continue;  // tolerate blank lines
      if (toks.size() != 3) parse_fail(src_, "expected 'docID wordID count'");
      std::uint64_t doc = 0, word = 0;
      double count = 0.0;
      if (!parse_u64(toks[0], doc) || !parse_u64(toks[1], word) || !parse_double(toks[2], count))
        parse_fail(src_, "non-numeric entry in '" + line + "'");
      if (doc == 0 || doc > n_docs_)
        parse_fail(src_, "docID " + std::to_string(doc) + " outside 1.." + std::to_string(n_docs_));
      if (doc < last_doc_) parse_fail(src_, "docIDs must be non-decreasing");
      if (word == 0 || word > stats_.dim)
        parse_fail(src_, "wordID " + std::to_string(word) + " outside 1.." +
                             std::to_string(stats_.dim));
      last_doc_ = doc;
      pending_doc_ = doc;
      pending_word_ = word;
      pending_count_ = count;
      pending_valid_ = true;
      ++seen_nnz_;
      return true;
    }
  }

  void warn_nnz() {
    if (warned_) return;
    warned_ = true;
    std::cerr << "warning: " << src_.path() << ": header declares " << declared_nnz_
              << " nonzeros but body has " << seen_nnz_ << "\n";
  }

  LineSource src_;
  std::uint64_t n_docs_ = 0;
  std::uint64_t declared_nnz_ = 0;
  std::uint64_t seen_nnz_ = 0;
  std::uint64_t docs_emitted_ = 0;
  std::uint64_t last_doc_ = 0;
  std::uint64_t pending_doc_ = 0, pending_word_ = 0;
  double pending_count_ = 0.0;
  bool pending_valid_ = false;
  bool at_eof_ = false;
  bool warned_ = false;
};

class SyntheticStream : public BlockStream {
 public:
  SyntheticStream(SpikedModel model, std::size_t block_rows, std::uint64_t stream_seed)
      : model_(std::move(model)), rng_(stream_seed) {
    block_rows_ = block_rows;
    stats_.dim = model_.dim;
  }

  std::optional<DataBlock> next_block() override {
    DataBlock out(sample_block(model_, block_rows_, rng_));
    note_block(out);
    return out;
  }

 private:
  SpikedModel model_;
  RngState rng_;
};

class DatasetStream : public BlockStream {
 public:
  DatasetStream(const Dataset& data, std::size_t block_rows) : data_(data) {
    block_rows_ = block_rows;
    stats_.dim = data.dim();
  }

  std::optional<DataBlock> next_block() override {
    if (cursor_ >= data_.n()) return std::nullopt;
    const std::size_t rows = std::min(block_rows_, data_.n() - cursor_);
    std::optional<DataBlock> out;
    if (data_.is_dense()) {
      DenseMatrix m(rows, data_.dim());
      for (std::size_t r = 0; r < rows; ++r) {
        auto src = data_.row(cursor_ + r).dense;
        std::copy(src.begin(), src.end(), m.row(r).begin());
      }
      out.emplace(std::move(m));
    } else {
      SparseBlock b(data_.dim());
      std::vector<std::pair<std::uint32_t, double>> entries;
      for (std::size_t r = 0; r < rows; ++r) {
        auto view = data_.row(cursor_ + r);
        entries.clear();
        for (std::size_t i = 0; i < view.idx.size(); ++i)
          entries.emplace_back(view.idx[i], view.val[i]);
        b.add_row(entries);
      }
      out.emplace(std::move(b));
    }
    cursor_ += rows;
    note_block(*out);
    return out;
  }

 private:
  const Dataset& data_;
  std::size_t cursor_ = 0;
};

}  // namespace

std::unique_ptr<BlockStream> make_synthetic_stream(SpikedModel model, std::size_t block_rows,
                                                   std::uint64_t stream_seed) {
  if (block_rows < 1) throw std::invalid_argument("make_synthetic_stream: block size must be >= 1");
  return std::make_unique<SyntheticStream>(std::move(model), block_rows, stream_seed);
}

std::unique_ptr<BlockStream> parse_libsvm(const std::string& path, std::size_t block_rows,
                                          std::optional<std::size_t> d_override) {
  if (block_rows < 1) throw std::invalid_argument("parse_libsvm: block size must be >= 1");
  std::size_t d = 0;
  if (d_override) {
    d = *d_override;
  } else {
    // Probe pass: find the dimension (and validate) before streaming.
    LineSource probe(path);
    std::string line;
    std::uint64_t max_index = 0;
    while (probe.next(line)) (void)parse_libsvm_line(probe, line, max_index);
    d = max_index;
  }
  return std::make_unique<LibsvmStream>(path, block_rows, d);
}

std::unique_ptr<BlockStream> parse_docword(const std::string& path, std::size_t block_rows) {
  if (block_rows < 1) throw std::invalid_argument("parse_docword: block size must be >= 1");
  return std::make_unique<DocwordStream>(path, block_rows);
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

Dataset Dataset::load(BlockStream& stream) {
  Dataset out;
  out.dim_ = stream.dim();
  bool first = true;
  bool dense = false;
  DenseMatrix dm;
  std::vector<double> dense_rows;
  SparseBlock sb;
  while (auto block = stream.next_block()) {
    if (first) {
      dense = block->is_dense();
      if (!dense) sb = SparseBlock(block->dim());
      out.dim_ = block->dim();
      first = false;
    }
    if (dense) {
      const auto* m = block->dense();
      dense_rows.insert(dense_rows.end(), m->values().begin(), m->values().end());
    } else {
      const auto* s = block->sparse();
      std::vector<std::pair<std::uint32_t, double>> entries;
      for (std::size_t r = 0; r < s->n_rows(); ++r) {
        entries.clear();
        auto cs = s->row_cols(r);
        auto vs = s->row_vals(r);
        for (std::size_t i = 0; i < cs.size(); ++i) entries.emplace_back(cs[i], vs[i]);
        sb.add_row(entries);
      }
    }
    out.n_ += block->rows();
    out.frob_sq_ += block->frobenius_sq();
  }
  if (dense)
    out.storage_ = DenseMatrix(out.n_, out.dim_, std::move(dense_rows));
  else
    out.storage_ = std::move(sb);
  return out;
}

RowView Dataset::row(std::size_t i) const {
  RowView v;
  v.dim = dim_;
  if (auto* d = std::get_if<DenseMatrix>(&storage_)) {
    v.dense = d->row(i);
  } else {
    const auto& s = std::get<SparseBlock>(storage_);
    v.idx = s.row_cols(i);
    v.val = s.row_vals(i);
  }
  return v;
}

std::unique_ptr<BlockStream> Dataset::stream(std::size_t block_rows) const {
  if (block_rows < 1) throw std::invalid_argument("Dataset::stream: block size must be >= 1");
  return std::make_unique<DatasetStream>(*this, block_rows);
}

namespace {

void append_double(std::string& s, double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  s.append(buf, p);
}

void write_sparse_rows(std::size_t n, const std::function<RowView(std::size_t)>& row,
                       std::ostream& out) {
  std::string line;
  for (std::size_t r = 0; r < n; ++r) {
    line = "0";
    auto v = row(r);
    for (std::size_t i = 0; i < v.idx.size(); ++i) {
      line += ' ';
      line += std::to_string(v.idx[i] + 1ull);
      line += ':';
      append_double(line, v.val[i]);
    }
    line += '\n';
    out << line;
  }
}

}  // namespace

void write_libsvm(const Dataset& data, std::ostream& out) {
  if (data.is_dense()) throw std::invalid_argument("write_libsvm: dataset is dense");
  write_sparse_rows(data.n(), [&](std::size_t r) { return data.row(r); }, out);
}

void write_libsvm(const SparseBlock& rows, std::ostream& out) {
  write_sparse_rows(rows.n_rows(),
                    [&](std::size_t r) {
                      RowView v;
                      v.dim = rows.n_cols();
                      v.idx = rows.row_cols(r);
                      v.val = rows.row_vals(r);
                      return v;
                    },
                    out);
}

}  // namespace spca
