#include "slrc/optimizer.hpp"

#include <chrono>
#include <cmath>
#include <string>
#include <utility>

namespace slrc {

namespace {

// ||(base - lowrank_dense - s) * diag(norms)||_F with a fixed evaluation
// order, so every loss in this file is bit-comparable with every other.
double scaled_residual_norm(const DenseMatrix& base, const DenseMatrix& lowrank_dense,
                            const SparseMatrix& s, const ColumnScaling& scaling) {
    DenseMatrix diff = subtract(base, lowrank_dense);
    subtract_sparse_inplace(diff, s);
    return frobenius_norm(scale_columns(diff, scaling));
}

}  // namespace

bool ConvergenceTrace::chain_holds() const {
    const double tol = tolerance();
    if (post_svd.size() != post_sparsify.size()) return false;
    for (std::size_t t = 0; t < post_svd.size(); ++t) {
        if (post_sparsify[t] > post_svd[t] + tol) return false;
        if (t > 0 && post_svd[t] > post_sparsify[t - 1] + tol) return false;
    }
    return true;
}

std::size_t ConvergenceTrace::safeguard_events() const {
    std::size_t count = 0;
    for (LowRankStepOutcome o : outcomes) {
        if (o == LowRankStepOutcome::RetryAccepted || o == LowRankStepOutcome::KeptPrevious) {
            ++count;
        }
    }
    return count;
}

BudgetSplit allocate_budget(std::size_t m, std::size_t n, const CompressionPlan& plan) {
    if (m == 0 || n == 0) throw ValidationError("budget needs a non-empty shape");
    const double p = plan.remaining_fraction;
    if (!(p > 0.0) || p > 1.0) {
        throw ValidationError("remaining fraction must lie in (0, 1]");
    }
    if (plan.preserve_fraction < 0.0 || plan.preserve_fraction >= p) {
        throw ValidationError("preserve fraction must lie in [0, remaining fraction)");
    }
    if (plan.rank > std::min(m, n)) {
        throw ValidationError("rank " + std::to_string(plan.rank) + " exceeds min(" +
                              std::to_string(m) + ", " + std::to_string(n) + ")");
    }
    if (!(plan.epsilon > 0.0)) throw ValidationError("norm clamp must be positive");

    const double cells = static_cast<double>(m) * static_cast<double>(n);
    const double lowrank_share =
        static_cast<double>(plan.rank) * static_cast<double>(m + n) / cells;
    double sparse_density = p - lowrank_share - plan.preserve_fraction;
    if (sparse_density < 0.0) {
        if (sparse_density < -1e-12) {
            throw ValidationError("rank and preserved shares exceed the parameter budget");
        }
        sparse_density = 0.0;
    }
    return BudgetSplit{sparse_density, lowrank_share, plan.preserve_fraction, plan.rank};
}

PreserveSplit preserve_top(const DenseMatrix& w, const ColumnScaling& scaling,
                           double preserve_fraction) {
    if (preserve_fraction < 0.0 || preserve_fraction >= 1.0) {
        throw ValidationError("preserve fraction must lie in [0, 1)");
    }
    const SalienceMap sal = salience_of(w, scaling);
    PruneMask mask = mask_top_fraction(sal, preserve_fraction);
    PreserveSplit out;
    out.preserved = sparse_from_mask(w, mask.keep);
    out.remainder = w;
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) {
            if (mask.keep[i * w.cols() + j]) out.remainder(i, j) = 0.0;
        }
    }
    out.exclude = std::move(mask.keep);
    out.preserved_count = 0;
    for (std::uint8_t k : out.exclude) out.preserved_count += k;
    return out;
}

double loss_of(const DenseMatrix& w, const SparseMatrix& s, const LowRankFactors& factors,
               const ColumnScaling& scaling) {
    return scaled_residual_norm(w, factors.product(), s, scaling);
}

double CompressedLayer::realized_fraction() const {
    const double cells = static_cast<double>(rows) * static_cast<double>(cols);
    const double factor_params =
        static_cast<double>(factors.rank) * static_cast<double>(rows + cols);
    return (static_cast<double>(s.nnz()) + factor_params) / cells;
}

CompressedLayer compress(const DenseMatrix& w, const ColumnScaling& scaling,
                         const CompressionPlan& plan, std::vector<double> bias) {
    const std::size_t m = w.rows(), n = w.cols();
    if (n != scaling.cols()) {
        throw ValidationError("weight has " + std::to_string(n) +
                              " columns but calibration has " +
                              std::to_string(scaling.cols()) + " channels");
    }
    if (!bias.empty() && bias.size() != m) {
        throw ValidationError("bias length does not match the output dimension");
    }
    for (double b : bias) {
        if (!std::isfinite(b)) throw ValidationError("bias has non-finite entries");
    }

    const BudgetSplit split = allocate_budget(m, n, plan);
    PreserveSplit pre = preserve_top(w, scaling, split.preserve_fraction);

    const double cells = static_cast<double>(m) * static_cast<double>(n);
    const long long factor_params = static_cast<long long>(plan.rank * (m + n));
    long long sparse_count =
        std::llround(plan.remaining_fraction * cells) - factor_params -
        static_cast<long long>(pre.preserved_count);
    if (sparse_count < 0) sparse_count = 0;
    const std::size_t n_sparse = static_cast<std::size_t>(sparse_count);

    CompressedLayer layer;
    layer.rows = m;
    layer.cols = n;
    layer.bias = std::move(bias);
    layer.plan = plan;
    layer.split = split;

    ConvergenceTrace& trace = layer.trace;
    trace.planned_iterations = plan.iterations;
    trace.initial_norm = frobenius_norm(scale_columns(w, scaling));
    const DenseMatrix zero_lowrank(m, n);
    const SparseMatrix no_sparse = SparseMatrix::empty(m, n);
    trace.start_loss = scaled_residual_norm(pre.remainder, zero_lowrank, no_sparse, scaling);

    // The no-iteration construction: one sparsify of the remainder, factors
    // zero. Doubles as the output when iterations == 0.
    const SalienceMap start_sal = salience_of(pre.remainder, scaling);
    const PruneMask oneshot_mask = mask_top_count(start_sal, n_sparse, &pre.exclude);
    const SparseMatrix oneshot_s = sparse_from_mask(pre.remainder, oneshot_mask.keep);
    trace.oneshot_loss = scaled_residual_norm(pre.remainder, zero_lowrank, oneshot_s, scaling);

    LowRankFactors factors = LowRankFactors::zeros(m, n, plan.rank);
    DenseMatrix lowrank_dense(m, n);
    SparseMatrix s = oneshot_s;
    double last_loss = trace.oneshot_loss;

    if (plan.iterations > 0) {
        s = SparseMatrix::empty(m, n);
        double prev_e2 = trace.start_loss;
        int stalled = 0;
        for (std::size_t t = 1; t <= plan.iterations; ++t) {
            const auto tick = std::chrono::steady_clock::now();
            LowRankStepOutcome outcome = LowRankStepOutcome::RankZero;
            double e1 = 0.0;
            if (plan.rank > 0) {
                DenseMatrix target = pre.remainder;
                subtract_sparse_inplace(target, s);
                const std::uint64_t iter_key = plan.reuse_projection ? 1 : t;
                LowRankFactors cand;
                DenseMatrix cand_dense;
                double cand_loss = 0.0;
                try {
                    SeededRng rng(derive_seed(plan.seed, iter_key, 0));
                    cand = scaled_lowrank_step(target, scaling, plan.rank, rng,
                                               plan.power_iters, plan.variant);
                    cand_dense = cand.product();
                    cand_loss = scaled_residual_norm(pre.remainder, cand_dense, s, scaling);
                    outcome = LowRankStepOutcome::Accepted;
                    if (plan.safeguard && cand_loss > prev_e2 + trace.tolerance()) {
                        SeededRng retry_rng(derive_seed(plan.seed, iter_key, 1));
                        LowRankFactors retry =
                            scaled_lowrank_step(target, scaling, plan.rank, retry_rng,
                                                plan.power_iters, plan.variant);
                        DenseMatrix retry_dense = retry.product();
                        const double retry_loss =
                            scaled_residual_norm(pre.remainder, retry_dense, s, scaling);
                        if (retry_loss <= prev_e2 + trace.tolerance()) {
                            cand = std::move(retry);
                            cand_dense = std::move(retry_dense);
                            cand_loss = retry_loss;
                            outcome = LowRankStepOutcome::RetryAccepted;
                        } else {
                            cand = factors;
                            cand_dense = lowrank_dense;
                            cand_loss = prev_e2;
                            outcome = LowRankStepOutcome::KeptPrevious;
                        }
                    }
                } catch (const NumericalError& e) {
                    throw NumericalError("iteration " + std::to_string(t) + ": " + e.what());
                }
                factors = std::move(cand);
                lowrank_dense = std::move(cand_dense);
                e1 = cand_loss;
            } else {
                e1 = scaled_residual_norm(pre.remainder, lowrank_dense, s, scaling);
            }
            if (!std::isfinite(e1)) {
                throw NumericalError("iteration " + std::to_string(t) + ": non-finite loss");
            }
            trace.post_svd.push_back(e1);
            trace.outcomes.push_back(outcome);

            const DenseMatrix resid = subtract(pre.remainder, lowrank_dense);
            const SalienceMap sal = salience_of(resid, scaling);
            const PruneMask mask = mask_top_count(sal, n_sparse, &pre.exclude);
            s = sparse_from_mask(resid, mask.keep);
            const double e2 = scaled_residual_norm(pre.remainder, lowrank_dense, s, scaling);
            if (!std::isfinite(e2)) {
                throw NumericalError("iteration " + std::to_string(t) + ": non-finite loss");
            }
            trace.post_sparsify.push_back(e2);
            const auto tock = std::chrono::steady_clock::now();
            trace.wall_ms.push_back(
                std::chrono::duration<double, std::milli>(tock - tick).count());

            if (t >= 2) {
                stalled = (prev_e2 - e2 < 1e-6 * trace.post_sparsify.front()) ? stalled + 1 : 0;
            }
            prev_e2 = e2;
            last_loss = e2;
            if (stalled >= 3 && t < plan.iterations) {
                trace.early_stopped = true;
                break;
            }
        }
    }

    layer.s = SparseMatrix::merge_disjoint(pre.preserved, s);
    layer.factors = std::move(factors);
    layer.final_loss = last_loss;
    return layer;
}

}  // namespace slrc
