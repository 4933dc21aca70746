#include "spca/datagen.hpp"

#include <stdexcept>
#include <string>

namespace spca {

SpikedModel make_spiked_model(std::size_t d, std::size_t k, double sigma, std::uint64_t seed) {
  if (k < 1 || k >= d)
    throw std::invalid_argument("make_spiked_model: need 1 <= k < d, got k=" + std::to_string(k) +
                                ", d=" + std::to_string(d));
  if (!(sigma >= 0.0)) throw std::invalid_argument("make_spiked_model: sigma must be >= 0");
  RngState rng(tag_seed(seed, "spiked-basis"));
  DenseMatrix g(d, k);
  auto gen = rng.fork();
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t j = 0; j < k; ++j) g(r, j) = gen.normal();
  SpikedModel model;
  model.dim = d;
  model.k = k;
  model.sigma = sigma;
  model.seed = seed;
  model.u = thin_qr(g, rng).q;
  return model;
}

void sample_row(const SpikedModel& model, const RngState& rng, std::uint64_t index,
                std::span<double> out) {
  const std::size_t d = model.dim, k = model.k;
  auto gen = rng.at(index);
  double z[64];
  double* zp = z;
  std::vector<double> zbig;
  if (k > 64) {
    zbig.resize(k);
    zp = zbig.data();
  }
  for (std::size_t j = 0; j < k; ++j) zp[j] = gen.normal();
  for (std::size_t c = 0; c < d; ++c) {
    double x = 0.0;
    const double* uc = model.u.data() + c * k;
    for (std::size_t j = 0; j < k; ++j) x += uc[j] * zp[j];
    out[c] = x;
  }
  if (model.sigma > 0.0)
    for (std::size_t c = 0; c < d; ++c) out[c] += model.sigma * gen.normal();
}

DenseMatrix sample_block(const SpikedModel& model, std::size_t b, RngState& rng) {
  if (b < 1) throw std::invalid_argument("sample_block: block size must be >= 1");
  DenseMatrix block(b, model.dim);
  const std::uint64_t base = rng.cursor();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(b); ++r)
    sample_row(model, rng, base + static_cast<std::uint64_t>(r), block.row(r));
  rng.skip(b);
  return block;
}

DenseMatrix true_subspace(const SpikedModel& model) { return model.u; }

}  // namespace spca
