#include "slrc/layer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace slrc {

double CostModel::dense_cost(std::size_t m, std::size_t n) const {
    return static_cast<double>(m) * static_cast<double>(n);
}

double CostModel::sparse_cost(std::size_t nnz) const {
    return static_cast<double>(nnz) * overhead_factor;
}

double CostModel::lowrank_cost(std::size_t m, std::size_t n, std::size_t rank) const {
    return static_cast<double>(rank) * static_cast<double>(m + n);
}

CostReport cost_report(const CompressedLayer& layer, const CostModel& model) {
    return cost_report_from_costs(model.dense_cost(layer.rows, layer.cols),
                                  model.sparse_cost(layer.s.nnz()),
                                  model.lowrank_cost(layer.rows, layer.cols,
                                                     layer.factors.rank));
}

CostReport cost_report_from_costs(double dense, double sparse, double lowrank) {
    if (dense <= 0.0 || sparse < 0.0 || lowrank < 0.0) {
        throw ValidationError("cost components must be non-negative with positive dense cost");
    }
    CostReport r;
    r.dense = dense;
    r.sparse = sparse;
    r.lowrank = lowrank;
    r.sum = sparse + lowrank;
    if (r.sum <= 0.0) throw ValidationError("compressed cost is zero; empty layer");
    r.speedup = dense / r.sum;
    return r;
}

std::string format_speedup(double speedup) {
    if (!(speedup > 0.0) || !std::isfinite(speedup)) {
        throw ValidationError("speedup must be positive and finite");
    }
    const long long milli = std::llround(speedup * 1000.0);
    long long centi = milli / 10;
    const long long rem = milli % 10;
    if (rem > 5 || (rem == 5 && centi % 2 == 1)) ++centi;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld", centi / 100, centi % 100);
    return std::string(buf) + "x";
}

DenseMatrix apply(const CompressedLayer& layer, const DenseMatrix& x) {
    if (x.rows() != layer.cols) {
        throw ValidationError("apply: activations have " + std::to_string(x.rows()) +
                              " rows, layer expects " + std::to_string(layer.cols));
    }
    DenseMatrix out = sparse_dense_matmul(layer.s, x);
    if (layer.factors.rank > 0) {
        out = add(out, layer.factors.apply(x));
    }
    if (!layer.bias.empty()) {
        for (std::size_t i = 0; i < out.rows(); ++i) {
            const double b = layer.bias[i];
            for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b;
        }
    }
    return out;
}

namespace {

DenseMatrix residual_dense(const LowRankFactors& factors, const SparseMatrix& s,
                           const DenseMatrix& w_ref) {
    DenseMatrix e = subtract(factors.product(), w_ref);
    // e = u v^T - w_ref + s
    for (std::size_t i = 0; i < s.rows(); ++i) {
        for (std::uint64_t k = s.row_offsets()[i]; k < s.row_offsets()[i + 1]; ++k) {
            e(i, s.col_indices()[k]) += s.values()[k];
        }
    }
    return e;
}

}  // namespace

double recovery_objective(const LowRankFactors& factors, const SparseMatrix& s,
                          const DenseMatrix& w_ref, const DenseMatrix& x) {
    if (s.rows() != w_ref.rows() || s.cols() != w_ref.cols() || x.rows() != w_ref.cols()) {
        throw ValidationError("recovery_objective shape mismatch");
    }
    const double norm = frobenius_norm(matmul(residual_dense(factors, s, w_ref), x));
    return norm * norm;
}

FactorGradients factor_gradients(const LowRankFactors& factors, const SparseMatrix& s,
                                 const DenseMatrix& w_ref, const DenseMatrix& x) {
    if (s.rows() != w_ref.rows() || s.cols() != w_ref.cols() || x.rows() != w_ref.cols()) {
        throw ValidationError("factor_gradients shape mismatch");
    }
    const DenseMatrix e = residual_dense(factors, s, w_ref);
    DenseMatrix exxt = matmul(matmul(e, x), x.transposed());  // m x n
    FactorGradients g{matmul(exxt, factors.v), matmul(exxt.transposed(), factors.u)};
    for (double& v : g.grad_u.data()) v *= 2.0;
    for (double& v : g.grad_v.data()) v *= 2.0;
    return g;
}

FactorGradients factor_gradients(const CompressedLayer& layer, const DenseMatrix& w_ref,
                                 const DenseMatrix& x) {
    return factor_gradients(layer.factors, layer.s, w_ref, x);
}

ReconstructionReport reconstruction_report(const CompressedLayer& layer, const DenseMatrix& w,
                                           const DenseMatrix& x_eval) {
    if (w.rows() != layer.rows || w.cols() != layer.cols || x_eval.rows() != layer.cols) {
        throw ValidationError("reconstruction_report shape mismatch");
    }
    DenseMatrix diff = subtract(w, layer.factors.product());
    subtract_sparse_inplace(diff, layer.s);

    ReconstructionReport rep;
    rep.frobenius_error = frobenius_norm(matmul(diff, x_eval));
    const double denom = frobenius_norm(matmul(w, x_eval));
    if (denom > 0.0) {
        rep.relative_error = rep.frobenius_error / denom;
    } else {
        rep.relative_error =
            rep.frobenius_error > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    const ColumnScaling scaling = column_l2_norms(x_eval, layer.plan.epsilon);
    rep.surrogate_loss = frobenius_norm(scale_columns(diff, scaling));
    return rep;
}

}  // namespace slrc
