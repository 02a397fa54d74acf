#pragma once

#include <cstddef>
#include <string>

#include "slrc/optimizer.hpp"

namespace slrc {

/// Abstract compute accounting in multiply-accumulates per output column.
/// Sparse backends rarely hit the nnz lower bound, so their cost carries a
/// calibratable overhead factor.
struct CostModel {
    double overhead_factor = 1.0;

    double dense_cost(std::size_t m, std::size_t n) const;
    double sparse_cost(std::size_t nnz) const;
    double lowrank_cost(std::size_t m, std::size_t n, std::size_t rank) const;
};

struct CostReport {
    double dense = 0.0;
    double sparse = 0.0;
    double lowrank = 0.0;
    double sum = 0.0;
    double speedup = 0.0;
};

/// Cost accounting of one compressed layer under the model.
CostReport cost_report(const CompressedLayer& layer, const CostModel& model);

/// Same accounting over externally measured per-part costs (e.g. cycle
/// counts from a hardware simulator).
CostReport cost_report_from_costs(double dense, double sparse, double lowrank);

/// Two-decimal rendering like "1.74x": round half away from zero at the
/// third decimal, then half to even at the second.
std::string format_speedup(double speedup);

/// h = s*x + u*(v^T*x) + bias, without densifying u*v^T.
DenseMatrix apply(const CompressedLayer& layer, const DenseMatrix& x);

struct FactorGradients {
    DenseMatrix grad_u;  // m x r
    DenseMatrix grad_v;  // n x r
};

/// f(u, v) = ||(u v^T + s - w_ref) x||_F^2, the factor-only recovery
/// objective with the sparse part frozen.
double recovery_objective(const LowRankFactors& factors, const SparseMatrix& s,
                          const DenseMatrix& w_ref, const DenseMatrix& x);

/// Analytic gradients of recovery_objective:
/// grad_u = 2 (u v^T + s - w_ref) x x^T v, grad_v = its transpose times u.
FactorGradients factor_gradients(const LowRankFactors& factors, const SparseMatrix& s,
                                 const DenseMatrix& w_ref, const DenseMatrix& x);

FactorGradients factor_gradients(const CompressedLayer& layer, const DenseMatrix& w_ref,
                                 const DenseMatrix& x);

struct ReconstructionReport {
    double frobenius_error = 0.0;  // ||(w - u v^T - s) * x_eval||_F
    double relative_error = 0.0;   // above / ||w * x_eval||_F
    double surrogate_loss = 0.0;   // diagonal surrogate with x_eval's row norms
};

/// True-activation reconstruction error of the layer against the original
/// matrix, next to the diagonal surrogate for the same activations.
ReconstructionReport reconstruction_report(const CompressedLayer& layer, const DenseMatrix& w,
                                           const DenseMatrix& x_eval);

}  // namespace slrc
