#pragma once

#include <cstddef>
#include <vector>

#include "slrc/matrix.hpp"

namespace slrc {

/// Rank-r factor pair; the approximation is u * v^T.
struct LowRankFactors {
    DenseMatrix u;  // m x r
    DenseMatrix v;  // n x r
    std::size_t rank = 0;

    static LowRankFactors zeros(std::size_t m, std::size_t n, std::size_t rank);

    DenseMatrix product() const;

    /// u * (v^T * x) without densifying the product.
    DenseMatrix apply(const DenseMatrix& x) const;
};

/// How the second projection of the bilateral sketch is chosen.
/// The printed formula leaves the shape of the second random matrix
/// ill-typed; SharedProjection (A2 = Y1) is the GoDec convention this
/// library follows by default. IndependentGaussian draws a fresh m x r
/// matrix instead and is exposed for comparison only.
enum class BrpVariant { SharedProjection, IndependentGaussian };

/// Thin Householder QR of a (m x r, m >= r); returns Q with orthonormal
/// columns. Zero columns yield the corresponding identity columns.
DenseMatrix thin_qr_q(const DenseMatrix& a);

/// Singular values of `a`, descending, via one-sided Jacobi rotations.
/// Intended for test-scale matrices.
std::vector<double> singular_values(const DenseMatrix& a);

/// Rank-r approximation via bilateral random projections:
/// Y1 = A*A1 (with optional re-orthonormalized power iterations),
/// Y2 = A^T*Y1, factors u = Y1*(Y1^T Y1)^-1, v = Y2. The r x r core is
/// solved by a partially pivoted factorization; if its condition estimate
/// exceeds 1e12 a ridge of 1e-10 * trace/r is added and the solve retried
/// once before reporting a numerical failure.
LowRankFactors brp_lowrank(const DenseMatrix& target, std::size_t rank, SeededRng& rng,
                           std::size_t power_iters,
                           BrpVariant variant = BrpVariant::SharedProjection);

/// Eckart-Young optimal rank-r factors via one-sided Jacobi SVD.
/// Verification oracle; intended for matrices up to about 1024x1024.
LowRankFactors exact_truncated_svd(const DenseMatrix& target, std::size_t rank);

/// BRP on the column-scaled residual, with the inverse scaling folded into
/// v so that product() approximates the residual in the original space.
LowRankFactors scaled_lowrank_step(const DenseMatrix& residual, const ColumnScaling& scaling,
                                   std::size_t rank, SeededRng& rng, std::size_t power_iters,
                                   BrpVariant variant = BrpVariant::SharedProjection);

}  // namespace slrc
