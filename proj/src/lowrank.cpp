#include "slrc/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace slrc {

LowRankFactors LowRankFactors::zeros(std::size_t m, std::size_t n, std::size_t rank) {
    return LowRankFactors{DenseMatrix(m, rank), DenseMatrix(n, rank), rank};
}

DenseMatrix LowRankFactors::product() const {
    return matmul(u, v.transposed());
}

DenseMatrix LowRankFactors::apply(const DenseMatrix& x) const {
    return matmul(u, matmul(v.transposed(), x));
}

DenseMatrix thin_qr_q(const DenseMatrix& a) {
    const std::size_t m = a.rows(), r = a.cols();
    if (m < r) throw ValidationError("thin_qr_q requires rows >= cols");
    DenseMatrix work = a;
    // Householder vectors, one per column, stored densely below the diagonal.
    std::vector<std::vector<double>> vs(r);
    for (std::size_t k = 0; k < r; ++k) {
        double norm_sq = 0.0;
        for (std::size_t i = k; i < m; ++i) norm_sq += work(i, k) * work(i, k);
        const double norm = std::sqrt(norm_sq);
        std::vector<double> v(m - k, 0.0);
        if (norm > 0.0) {
            const double alpha = work(k, k) >= 0.0 ? -norm : norm;
            v[0] = work(k, k) - alpha;
            for (std::size_t i = k + 1; i < m; ++i) v[i - k] = work(i, k);
            double vnorm_sq = 0.0;
            for (double x : v) vnorm_sq += x * x;
            if (vnorm_sq > 0.0) {
                const double inv = 1.0 / std::sqrt(vnorm_sq);
                for (double& x : v) x *= inv;
                for (std::size_t j = k; j < r; ++j) {
                    double dot = 0.0;
                    for (std::size_t i = k; i < m; ++i) dot += v[i - k] * work(i, j);
                    dot *= 2.0;
                    for (std::size_t i = k; i < m; ++i) work(i, j) -= dot * v[i - k];
                }
            } else {
                v.assign(m - k, 0.0);
            }
        }
        vs[k] = std::move(v);
    }
    // Q = H_0 ... H_{r-1} applied to the first r columns of the identity.
    DenseMatrix q(m, r);
    for (std::size_t j = 0; j < r; ++j) q(j, j) = 1.0;
    for (std::size_t k = r; k-- > 0;) {
        const std::vector<double>& v = vs[k];
        if (v.empty()) continue;
        for (std::size_t j = 0; j < r; ++j) {
            double dot = 0.0;
            for (std::size_t i = k; i < m; ++i) dot += v[i - k] * q(i, j);
            if (dot == 0.0) continue;
            dot *= 2.0;
            for (std::size_t i = k; i < m; ++i) q(i, j) -= dot * v[i - k];
        }
    }
    return q;
}

namespace {

struct JacobiSvd {
    DenseMatrix u;               // m x n, columns scaled by singular values
    DenseMatrix v;               // n x n
    std::vector<double> sigma;   // n, descending
};

// One-sided Jacobi on the columns of a copy of `a` (requires m >= n).
// At convergence the working columns are U * diag(sigma) and the
// accumulated rotations form V.
JacobiSvd one_sided_jacobi(const DenseMatrix& a) {
    const std::size_t m = a.rows(), n = a.cols();
    DenseMatrix b = a;
    DenseMatrix v = DenseMatrix::identity(n);
    const double tol = 1e-14;
    const int max_sweeps = 60;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    app += bp * bp;
                    aqq += bq * bq;
                    apq += bp * bq;
                }
                if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double bp = b(i, p), bq = b(i, q);
                    b(i, p) = c * bp - s * bq;
                    b(i, q) = s * bp + c * bq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
    std::vector<double> sigma(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += b(i, j) * b(i, j);
        sigma[j] = std::sqrt(acc);
    }
    // Order columns by descending singular value, ties by original index.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&sigma](std::size_t x, std::size_t y) {
        if (sigma[x] != sigma[y]) return sigma[x] > sigma[y];
        return x < y;
    });
    JacobiSvd out{DenseMatrix(m, n), DenseMatrix(n, n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.sigma[j] = sigma[src];
        for (std::size_t i = 0; i < m; ++i) out.u(i, j) = b(i, src);
        for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
    }
    return out;
}

// Solve core * x = rhs for square core via partially pivoted Gaussian
// elimination; returns false when a pivot vanishes. cond_estimate gets
// max|pivot| / min|pivot|.
bool solve_pivoted(DenseMatrix core, DenseMatrix rhs, DenseMatrix& x,
                   double& cond_estimate) {
    const std::size_t r = core.rows();
    const std::size_t w = rhs.cols();
    double max_pivot = 0.0;
    double min_pivot = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < r; ++k) {
        std::size_t pivot_row = k;
        double best = std::abs(core(k, k));
        for (std::size_t i = k + 1; i < r; ++i) {
            const double cand = std::abs(core(i, k));
            if (cand > best) {
                best = cand;
                pivot_row = i;
            }
        }
        if (best == 0.0) {
            cond_estimate = std::numeric_limits<double>::infinity();
            return false;
        }
        if (pivot_row != k) {
            for (std::size_t j = 0; j < r; ++j) std::swap(core(k, j), core(pivot_row, j));
            for (std::size_t j = 0; j < w; ++j) std::swap(rhs(k, j), rhs(pivot_row, j));
        }
        max_pivot = std::max(max_pivot, best);
        min_pivot = std::min(min_pivot, best);
        const double inv = 1.0 / core(k, k);
        for (std::size_t i = k + 1; i < r; ++i) {
            const double f = core(i, k) * inv;
            if (f == 0.0) continue;
            for (std::size_t j = k; j < r; ++j) core(i, j) -= f * core(k, j);
            for (std::size_t j = 0; j < w; ++j) rhs(i, j) -= f * rhs(k, j);
        }
    }
    x = DenseMatrix(r, w);
    for (std::size_t k = r; k-- > 0;) {
        for (std::size_t j = 0; j < w; ++j) {
            double acc = rhs(k, j);
            for (std::size_t l = k + 1; l < r; ++l) acc -= core(k, l) * x(l, j);
            x(k, j) = acc / core(k, k);
        }
    }
    cond_estimate = min_pivot > 0.0 ? max_pivot / min_pivot
                                    : std::numeric_limits<double>::infinity();
    return true;
}

}  // namespace

std::vector<double> singular_values(const DenseMatrix& a) {
    if (a.rows() >= a.cols()) return one_sided_jacobi(a).sigma;
    return one_sided_jacobi(a.transposed()).sigma;
}

LowRankFactors brp_lowrank(const DenseMatrix& target, std::size_t rank, SeededRng& rng,
                           std::size_t power_iters, BrpVariant variant) {
    const std::size_t m = target.rows(), n = target.cols();
    if (rank < 1 || rank > std::min(m, n)) {
        throw ValidationError("brp rank " + std::to_string(rank) +
                              " out of range for " + std::to_string(m) + "x" +
                              std::to_string(n));
    }
    if (!target.all_finite()) throw NumericalError("brp target has non-finite entries");
    if (frobenius_norm(target) == 0.0) return LowRankFactors::zeros(m, n, rank);

    const DenseMatrix a1 = DenseMatrix::gaussian(n, rank, rng);
    DenseMatrix y1 = matmul(target, a1);
    const DenseMatrix target_t = target.transposed();
    // Re-orthonormalize after each pass: the sketch then enters the core
    // solve with orthonormal columns instead of condition ~ kappa^(2p+1).
    for (std::size_t p = 0; p < power_iters; ++p) {
        y1 = thin_qr_q(matmul(target, matmul(target_t, y1)));
    }
    DenseMatrix a2;
    switch (variant) {
        case BrpVariant::SharedProjection:
            a2 = y1;
            break;
        case BrpVariant::IndependentGaussian:
            a2 = DenseMatrix::gaussian(m, rank, rng);
            break;
    }
    const DenseMatrix y2 = matmul(target_t, a2);
    DenseMatrix core = matmul(a2.transposed(), y1);

    // u = Y1 * core^-1, i.e. core^T * u^T = Y1^T.
    DenseMatrix ut;
    double cond = 0.0;
    bool ok = solve_pivoted(core.transposed(), y1.transposed(), ut, cond);
    if (!ok || cond > 1e12) {
        double trace = 0.0;
        for (std::size_t k = 0; k < rank; ++k) trace += core(k, k);
        const double ridge = 1e-10 * trace / static_cast<double>(rank);
        DenseMatrix ridged = core;
        for (std::size_t k = 0; k < rank; ++k) ridged(k, k) += ridge;
        ok = solve_pivoted(ridged.transposed(), y1.transposed(), ut, cond);
        if (!ok || !ut.all_finite()) {
            throw NumericalError("brp projection core irrecoverably singular");
        }
    }
    if (!ut.all_finite()) throw NumericalError("brp factors non-finite");
    return LowRankFactors{ut.transposed(), y2, rank};
}

LowRankFactors exact_truncated_svd(const DenseMatrix& target, std::size_t rank) {
    const std::size_t m = target.rows(), n = target.cols();
    if (rank < 1 || rank > std::min(m, n)) {
        throw ValidationError("svd rank " + std::to_string(rank) + " out of range for " +
                              std::to_string(m) + "x" + std::to_string(n));
    }
    const bool transpose = m < n;
    const JacobiSvd svd = one_sided_jacobi(transpose ? target.transposed() : target);
    // Left factor keeps the singular-value scaling (columns of the working
    // matrix); right factor is orthonormal.
    DenseMatrix left(svd.u.rows(), rank);
    DenseMatrix right(svd.v.rows(), rank);
    for (std::size_t j = 0; j < rank; ++j) {
        for (std::size_t i = 0; i < left.rows(); ++i) left(i, j) = svd.u(i, j);
        for (std::size_t i = 0; i < right.rows(); ++i) right(i, j) = svd.v(i, j);
    }
    if (transpose) return LowRankFactors{right, left, rank};
    return LowRankFactors{left, right, rank};
}

LowRankFactors scaled_lowrank_step(const DenseMatrix& residual, const ColumnScaling& scaling,
                                   std::size_t rank, SeededRng& rng, std::size_t power_iters,
                                   BrpVariant variant) {
    const DenseMatrix scaled = scale_columns(residual, scaling, false);
    LowRankFactors factors = brp_lowrank(scaled, rank, rng, power_iters, variant);
    for (std::size_t j = 0; j < factors.v.rows(); ++j) {
        const double inv = 1.0 / scaling.norm(j);
        for (std::size_t c = 0; c < factors.rank; ++c) factors.v(j, c) *= inv;
    }
    return factors;
}

}  // namespace slrc
