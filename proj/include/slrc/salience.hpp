#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "slrc/matrix.hpp"

namespace slrc {

/// Per-entry importance of a weight residual under calibration scaling:
/// values[i][j] = (|residual[i][j]| * norms[j])^2.
class SalienceMap {
public:
    SalienceMap() = default;
    SalienceMap(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }
    const std::vector<double>& values() const { return values_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// Keep/drop decision for every entry of a matrix, with the realized
/// threshold. Ties at the threshold are broken by (row, col) lexicographic
/// order, earlier coordinates kept first.
struct PruneMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> keep;
    double threshold = 0.0;
    double kept_fraction = 0.0;

    std::size_t kept_count() const;
};

SalienceMap salience_of(const DenseMatrix& residual, const ColumnScaling& scaling);

/// Keeps exactly `count` eligible entries of highest salience. Entries
/// flagged in `exclude` are never selected and are not part of the
/// eligible pool.
PruneMask mask_top_count(const SalienceMap& sal, std::size_t count,
                         const std::vector<std::uint8_t>* exclude = nullptr);

/// Keeps round(fraction * eligible_count) entries; see mask_top_count.
PruneMask mask_top_fraction(const SalienceMap& sal, double fraction,
                            const std::vector<std::uint8_t>* exclude = nullptr);

/// Sampled curve of (kept_fraction, retained salience fraction), computed
/// from the descending cumulative sum of the sorted salience.
std::vector<std::pair<double, double>> retention_curve(const SalienceMap& sal,
                                                       std::size_t points);

/// Smallest kept fraction whose retained salience reaches the target.
double fraction_for_salience(const SalienceMap& sal, double target_salience_fraction);

}  // namespace slrc
