#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "slrc/lowrank.hpp"
#include "slrc/matrix.hpp"
#include "slrc/salience.hpp"

namespace slrc {

/// Hyperparameters of one compression run. remaining_fraction is the total
/// parameter budget p; the low-rank share r(m+n)/(m*n) and preserve_fraction
/// are carved out of it and the sparse part receives the remainder.
struct CompressionPlan {
    double remaining_fraction = 0.5;
    std::size_t rank = 0;
    double preserve_fraction = 0.01;
    std::size_t iterations = 40;
    std::uint64_t seed = 0;
    std::size_t power_iters = 2;
    double epsilon = kDefaultNormEpsilon;

    // Diagnostics and experiments; defaults are the shipping behavior.
    bool safeguard = true;          // enforce the monotone descent chain
    bool reuse_projection = false;  // one random sketch reused across iterations
    BrpVariant variant = BrpVariant::SharedProjection;
};

/// Concrete budget split for one shape. All shares are fractions of m*n and
/// sum to the plan's remaining_fraction.
struct BudgetSplit {
    double sparse_density = 0.0;
    double lowrank_share = 0.0;
    double preserve_fraction = 0.0;
    std::size_t rank = 0;

    double total() const { return sparse_density + lowrank_share + preserve_fraction; }
};

/// Validates the plan against a shape and splits the budget:
/// sparse_density = p - r(m+n)/(m*n) - preserve_fraction.
/// Throws ValidationError when the plan is infeasible for the shape.
BudgetSplit allocate_budget(std::size_t m, std::size_t n, const CompressionPlan& plan);

/// Outcome of the low-rank step of one iteration.
enum class LowRankStepOutcome : std::uint8_t {
    Accepted,       // first sketch kept
    RetryAccepted,  // first sketch regressed, reseeded retry kept
    KeptPrevious,   // both sketches regressed, previous factors carried over
    RankZero,       // no low-rank component in the plan
};

/// Per-iteration losses of the alternating run. All losses are the scaled
/// surrogate ||(remainder - L - S) * diag(norms)||_F; preserved entries
/// live outside the remainder so these equal the losses of the assembled
/// layer against the full matrix.
struct ConvergenceTrace {
    double initial_norm = 0.0;  // ||w * diag(norms)||_F of the full matrix
    double start_loss = 0.0;    // loss of the all-zero iterate (S=0, L=0)
    double oneshot_loss = 0.0;  // loss of the no-iteration construction

    std::vector<double> post_svd;       // loss after the low-rank step of t
    std::vector<double> post_sparsify;  // loss after the sparsify step of t
    std::vector<LowRankStepOutcome> outcomes;
    std::vector<double> wall_ms;  // in-memory diagnostics; never serialized

    std::size_t planned_iterations = 0;
    bool early_stopped = false;

    std::size_t completed_iterations() const { return post_sparsify.size(); }

    /// Slack allowed in the descent chain.
    double tolerance() const { return 1e-9 * start_loss; }

    /// post_svd[0] >= post_sparsify[0] >= post_svd[1] >= ... within tolerance().
    bool chain_holds() const;

    /// Iterations where the first sketch was not kept as-is.
    std::size_t safeguard_events() const;
};

/// Splitting of a matrix into its top-salience entries and the rest.
struct PreserveSplit {
    SparseMatrix preserved;            // the protected entries, original values
    DenseMatrix remainder;             // w with those entries zeroed
    std::vector<std::uint8_t> exclude; // 1 at protected coordinates
    std::size_t preserved_count = 0;   // mask cardinality (zeros included)
};

/// Protects the top preserve_fraction of entries by salience, computed once
/// on the original matrix. preserved + remainder == w exactly.
PreserveSplit preserve_top(const DenseMatrix& w, const ColumnScaling& scaling,
                           double preserve_fraction);

/// Final compressed form of one weight matrix: sparse part (preserved
/// entries merged in), low-rank factor pair, optional bias, and the full
/// record of how it was produced.
struct CompressedLayer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    SparseMatrix s;
    LowRankFactors factors;
    std::vector<double> bias;  // empty when the layer has none
    CompressionPlan plan;
    BudgetSplit split;
    ConvergenceTrace trace;
    double final_loss = 0.0;  // scaled surrogate of the assembled layer

    /// (nnz + r(m+n)) / (m*n), the realized parameter fraction.
    double realized_fraction() const;
};

/// Scaled surrogate loss ||(w - u v^T - s) * diag(norms)||_F.
double loss_of(const DenseMatrix& w, const SparseMatrix& s, const LowRankFactors& factors,
               const ColumnScaling& scaling);

/// Alternating sparse / low-rank decomposition of w under the plan's
/// budget: protect top entries, then for t = 1..T fit factors to the
/// unsparsified residual and re-sparsify the unfactored residual, tracing
/// the loss after every half-step.
CompressedLayer compress(const DenseMatrix& w, const ColumnScaling& scaling,
                         const CompressionPlan& plan, std::vector<double> bias = {});

}  // namespace slrc
