#pragma once

#include "spca/ingest.hpp"
#include "spca/linalg.hpp"

namespace spca {

// Largest-principal-angle distance between the spans of two orthonormal
// d x k bases: the top singular value of (I - U U^T) V, equal to
// sqrt(1 - sigma_min(U^T V)^2). 0 for equal subspaces, 1 for orthogonal ones.
// Inputs that fail the orthonormality check at 1e-6 are re-orthonormalized.
double principal_angle_distance(const DenseMatrix& u, const DenseMatrix& v);

// trace(W^T X^T X W) / ||X||_F^2 for orthonormal W, accumulated in one pass.
double explained_variance(const DenseMatrix& w, const Dataset& data);
double explained_variance(const DenseMatrix& w, BlockStream& stream);

// lambda_max(X^T X) - w^T X^T X w for a unit vector w; 0 exactly at the top
// eigenvector. lambda_max comes from the caller (oracle or a long power run).
double unnormalized_error(const DenseVector& w, const Dataset& data, double lambda_max);

}  // namespace spca
