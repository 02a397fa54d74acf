#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "slrc/common.hpp"

namespace slrc {

/// Row-major dense matrix, 64-bit entries. Immutable by convention once it
/// leaves a builder: every operation below returns a fresh matrix. All
/// reductions run in a fixed index order so results are reproducible.
class DenseMatrix {
public:
    DenseMatrix() = default;

    /// Zero matrix of the given shape.
    DenseMatrix(std::size_t rows, std::size_t cols);

    /// Adopts `data` (row-major, rows*cols entries); rejects NaN/Inf.
    DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static DenseMatrix identity(std::size_t n);

    /// Entries drawn i.i.d. standard normal from `rng`, row-major order.
    static DenseMatrix gaussian(std::size_t rows, std::size_t cols, SeededRng& rng);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    DenseMatrix transposed() const;
    bool all_finite() const;
    bool same_shape(const DenseMatrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Compressed-rows sparse matrix. Within each row the column indices are
/// strictly increasing. The mask builders never emit zero-valued entries,
/// but the container tolerates them (f32 round trips can underflow).
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(std::size_t rows, std::size_t cols,
                 std::vector<std::uint64_t> row_offsets,
                 std::vector<std::uint32_t> col_indices,
                 std::vector<double> values);

    static SparseMatrix empty(std::size_t rows, std::size_t cols);
    static SparseMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }

    const std::vector<std::uint64_t>& row_offsets() const { return row_offsets_; }
    const std::vector<std::uint32_t>& col_indices() const { return col_indices_; }
    const std::vector<double>& values() const { return values_; }

    DenseMatrix to_dense() const;

    /// Merges two sparse matrices with disjoint supports into one.
    /// Overlapping coordinates are a logic error and throw.
    static SparseMatrix merge_disjoint(const SparseMatrix& a, const SparseMatrix& b);

    bool operator==(const SparseMatrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint64_t> row_offsets_;
    std::vector<std::uint32_t> col_indices_;
    std::vector<double> values_;
};

/// Per-input-channel calibration norms acting as a diagonal scaling on the
/// columns of a weight matrix. Norms are clamped from below by epsilon so
/// the inverse scaling stays finite on dead channels.
class ColumnScaling {
public:
    ColumnScaling() = default;
    ColumnScaling(std::vector<double> norms, double epsilon);

    static ColumnScaling unit(std::size_t cols);

    std::size_t cols() const { return norms_.size(); }
    double epsilon() const { return epsilon_; }
    const std::vector<double>& norms() const { return norms_; }
    double norm(std::size_t j) const { return norms_[j]; }

private:
    std::vector<double> norms_;
    double epsilon_ = 0.0;
};

constexpr double kDefaultNormEpsilon = 1e-8;

/// a * b with fixed i-k-j loop nesting (ascending-k accumulation per entry).
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);

/// sqrt of the sum of squared entries, accumulated in index order.
double frobenius_norm(const DenseMatrix& a);

/// Calibration norms from an activation matrix whose rows are the input
/// channels: norms[j] = max(l2 norm of row j, epsilon). The result indexes
/// the input channels, i.e. the columns of the weight it will scale.
ColumnScaling column_l2_norms(const DenseMatrix& x, double epsilon);

/// result[i][j] = a[i][j] * s.norms[j], or / when invert is set.
DenseMatrix scale_columns(const DenseMatrix& a, const ColumnScaling& s, bool invert = false);

/// CSR matrix holding exactly the masked entries of `a` (exact zeros under
/// the mask are dropped; the dense reconstruction is unchanged).
SparseMatrix sparse_from_mask(const DenseMatrix& a, const std::vector<std::uint8_t>& mask);

/// s * x for CSR s and dense x.
DenseMatrix sparse_dense_matmul(const SparseMatrix& s, const DenseMatrix& x);

/// y -= s, entry-wise over the stored pattern of s.
void subtract_sparse_inplace(DenseMatrix& y, const SparseMatrix& s);

}  // namespace slrc
