#pragma once

#include <cstdint>
#include <span>

#include "spca/linalg.hpp"
#include "spca/rng.hpp"

namespace spca {

// Ground truth for the synthetic streaming experiments: samples have
// covariance U U^T + sigma^2 I with U a d x k orthonormal basis.
struct SpikedModel {
  std::size_t dim = 0;
  std::size_t k = 0;
  DenseMatrix u;  // d x k, orthonormal
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

SpikedModel make_spiked_model(std::size_t d, std::size_t k, double sigma, std::uint64_t seed);

// Writes sample number `index` of the stream addressed by rng.seed() into
// `out` (length d). Every sample is x = U z + sigma * eps with z and eps
// standard Gaussian, so samples are identical no matter how they are grouped
// into blocks or which thread generates them.
void sample_row(const SpikedModel& model, const RngState& rng, std::uint64_t index,
                std::span<double> out);

// Next B samples as a dense B x d block; advances rng by B substreams.
DenseMatrix sample_block(const SpikedModel& model, std::size_t b, RngState& rng);

DenseMatrix true_subspace(const SpikedModel& model);

}  // namespace spca
