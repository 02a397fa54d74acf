#include "slrc/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace slrc {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ValidationError("dense matrix data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str(rows_, cols_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw ValidationError("dense matrix entry " + std::to_string(i) +
                                  " is not finite");
        }
    }
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseMatrix DenseMatrix::gaussian(std::size_t rows, std::size_t cols, SeededRng& rng) {
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = rng.next_gaussian();
    return m;
}

DenseMatrix DenseMatrix::transposed() const {
    DenseMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j)
            t(j, i) = (*this)(i, j);
    return t;
}

bool DenseMatrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols,
                           std::vector<std::uint64_t> row_offsets,
                           std::vector<std::uint32_t> col_indices,
                           std::vector<double> values)
    : rows_(rows), cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
    if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0 ||
        row_offsets_.back() != values_.size() || col_indices_.size() != values_.size()) {
        throw ValidationError("inconsistent CSR structure for " + shape_str(rows_, cols_));
    }
    for (std::size_t i = 0; i < rows_; ++i) {
        if (row_offsets_[i] > row_offsets_[i + 1]) {
            throw ValidationError("CSR row offsets not non-decreasing at row " +
                                  std::to_string(i));
        }
        for (std::uint64_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k) {
            if (col_indices_[k] >= cols_ ||
                (k > row_offsets_[i] && col_indices_[k] <= col_indices_[k - 1])) {
                throw ValidationError("CSR column indices invalid in row " +
                                      std::to_string(i));
            }
        }
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw ValidationError("CSR value not finite");
    }
}

SparseMatrix SparseMatrix::empty(std::size_t rows, std::size_t cols) {
    return SparseMatrix(rows, cols, std::vector<std::uint64_t>(rows + 1, 0), {}, {});
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
    std::vector<std::uint64_t> offsets(n + 1);
    std::vector<std::uint32_t> cols(n);
    std::vector<double> vals(n, 1.0);
    for (std::size_t i = 0; i <= n; ++i) offsets[i] = i;
    for (std::size_t i = 0; i < n; ++i) cols[i] = static_cast<std::uint32_t>(i);
    return SparseMatrix(n, n, std::move(offsets), std::move(cols), std::move(vals));
}

DenseMatrix SparseMatrix::to_dense() const {
    DenseMatrix d(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::uint64_t k = row_offsets_[i]; k < row_offsets_[i + 1]; ++k)
            d(i, col_indices_[k]) = values_[k];
    return d;
}

SparseMatrix SparseMatrix::merge_disjoint(const SparseMatrix& a, const SparseMatrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError("merge_disjoint shape mismatch: " +
                              shape_str(a.rows(), a.cols()) + " vs " +
                              shape_str(b.rows(), b.cols()));
    }
    std::vector<std::uint64_t> offsets(a.rows() + 1, 0);
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    cols.reserve(a.nnz() + b.nnz());
    vals.reserve(a.nnz() + b.nnz());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::uint64_t ka = a.row_offsets()[i], kb = b.row_offsets()[i];
        const std::uint64_t ea = a.row_offsets()[i + 1], eb = b.row_offsets()[i + 1];
        while (ka < ea || kb < eb) {
            if (kb >= eb || (ka < ea && a.col_indices()[ka] < b.col_indices()[kb])) {
                cols.push_back(a.col_indices()[ka]);
                vals.push_back(a.values()[ka]);
                ++ka;
            } else if (ka >= ea || b.col_indices()[kb] < a.col_indices()[ka]) {
                cols.push_back(b.col_indices()[kb]);
                vals.push_back(b.values()[kb]);
                ++kb;
            } else {
                throw ValidationError("merge_disjoint: overlapping entry at (" +
                                      std::to_string(i) + "," +
                                      std::to_string(a.col_indices()[ka]) + ")");
            }
        }
        offsets[i + 1] = cols.size();
    }
    return SparseMatrix(a.rows(), a.cols(), std::move(offsets), std::move(cols),
                        std::move(vals));
}

ColumnScaling::ColumnScaling(std::vector<double> norms, double epsilon)
    : norms_(std::move(norms)), epsilon_(epsilon) {
    if (!(epsilon_ > 0.0)) {
        throw ValidationError("column scaling epsilon must be > 0");
    }
    for (double& n : norms_) {
        if (!std::isfinite(n) || n < 0.0) {
            throw ValidationError("column scaling norm not finite and non-negative");
        }
        n = std::max(n, epsilon_);
    }
}

ColumnScaling ColumnScaling::unit(std::size_t cols) {
    return ColumnScaling(std::vector<double>(cols, 1.0), kDefaultNormEpsilon);
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols() != b.rows()) {
        throw ValidationError("matmul dimension mismatch: " +
                              shape_str(a.rows(), a.cols()) + " x " +
                              shape_str(b.rows(), b.cols()));
    }
    DenseMatrix c(a.rows(), b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    double* pc = c.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double aik = pa[i * k + l];
            if (aik == 0.0) continue;
            const double* brow = pb + l * n;
            double* crow = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw ValidationError("add shape mismatch");
    DenseMatrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
    return c;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) throw ValidationError("subtract shape mismatch");
    DenseMatrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
    return c;
}

double frobenius_norm(const DenseMatrix& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v * v;
    return std::sqrt(acc);
}

ColumnScaling column_l2_norms(const DenseMatrix& x, double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");
    std::vector<double> norms(x.rows(), 0.0);
    for (std::size_t j = 0; j < x.rows(); ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < x.cols(); ++t) {
            const double v = x(j, t);
            acc += v * v;
        }
        norms[j] = std::sqrt(acc);
    }
    return ColumnScaling(std::move(norms), epsilon);
}

DenseMatrix scale_columns(const DenseMatrix& a, const ColumnScaling& s, bool invert) {
    if (a.cols() != s.cols()) {
        throw ValidationError("scale_columns dimension mismatch: matrix has " +
                              std::to_string(a.cols()) + " columns, scaling has " +
                              std::to_string(s.cols()));
    }
    DenseMatrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out(i, j) = invert ? a(i, j) / s.norm(j) : a(i, j) * s.norm(j);
        }
    }
    return out;
}

SparseMatrix sparse_from_mask(const DenseMatrix& a, const std::vector<std::uint8_t>& mask) {
    if (mask.size() != a.size()) {
        throw ValidationError("mask length does not match matrix size");
    }
    std::vector<std::uint64_t> offsets(a.rows() + 1, 0);
    std::vector<std::uint32_t> cols;
    std::vector<double> vals;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            const double v = a(i, j);
            if (mask[i * a.cols() + j] && v != 0.0) {
                cols.push_back(static_cast<std::uint32_t>(j));
                vals.push_back(v);
            }
        }
        offsets[i + 1] = vals.size();
    }
    return SparseMatrix(a.rows(), a.cols(), std::move(offsets), std::move(cols),
                        std::move(vals));
}

DenseMatrix sparse_dense_matmul(const SparseMatrix& s, const DenseMatrix& x) {
    if (s.cols() != x.rows()) {
        throw ValidationError("sparse_dense_matmul dimension mismatch: " +
                              shape_str(s.rows(), s.cols()) + " x " +
                              shape_str(x.rows(), x.cols()));
    }
    DenseMatrix out(s.rows(), x.cols());
    const std::size_t n = x.cols();
    for (std::size_t i = 0; i < s.rows(); ++i) {
        double* orow = out.data().data() + i * n;
        for (std::uint64_t k = s.row_offsets()[i]; k < s.row_offsets()[i + 1]; ++k) {
            const double v = s.values()[k];
            const double* xrow = x.data().data() + s.col_indices()[k] * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += v * xrow[j];
        }
    }
    return out;
}

void subtract_sparse_inplace(DenseMatrix& y, const SparseMatrix& s) {
    if (y.rows() != s.rows() || y.cols() != s.cols()) {
        throw ValidationError("subtract_sparse_inplace shape mismatch");
    }
    for (std::size_t i = 0; i < s.rows(); ++i) {
        for (std::uint64_t k = s.row_offsets()[i]; k < s.row_offsets()[i + 1]; ++k) {
            y(i, s.col_indices()[k]) -= s.values()[k];
        }
    }
}

}  // namespace slrc
