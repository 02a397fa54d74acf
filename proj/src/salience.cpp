#include "slrc/salience.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace slrc {

SalienceMap::SalienceMap(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        throw ValidationError("salience map data length does not match shape");
    }
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ValidationError("salience values must be finite and non-negative");
        }
    }
}

std::size_t PruneMask::kept_count() const {
    std::size_t n = 0;
    for (std::uint8_t k : keep) n += k != 0;
    return n;
}

SalienceMap salience_of(const DenseMatrix& residual, const ColumnScaling& scaling) {
    if (residual.cols() != scaling.cols()) {
        throw ValidationError("salience_of dimension mismatch: residual has " +
                              std::to_string(residual.cols()) +
                              " columns, scaling has " + std::to_string(scaling.cols()));
    }
    std::vector<double> values(residual.size());
    for (std::size_t i = 0; i < residual.rows(); ++i) {
        for (std::size_t j = 0; j < residual.cols(); ++j) {
            const double scaled = std::abs(residual(i, j)) * scaling.norm(j);
            values[i * residual.cols() + j] = scaled * scaled;
        }
    }
    return SalienceMap(residual.rows(), residual.cols(), std::move(values));
}

namespace {

// Descending salience, ties by ascending linear index (== (row, col) lex).
std::vector<std::uint32_t> eligible_order(const SalienceMap& sal,
                                          const std::vector<std::uint8_t>* exclude) {
    std::vector<std::uint32_t> idx;
    idx.reserve(sal.size());
    for (std::size_t k = 0; k < sal.size(); ++k) {
        if (!exclude || !(*exclude)[k]) idx.push_back(static_cast<std::uint32_t>(k));
    }
    const std::vector<double>& v = sal.values();
    std::sort(idx.begin(), idx.end(), [&v](std::uint32_t a, std::uint32_t b) {
        if (v[a] != v[b]) return v[a] > v[b];
        return a < b;
    });
    return idx;
}

}  // namespace

PruneMask mask_top_count(const SalienceMap& sal, std::size_t count,
                         const std::vector<std::uint8_t>* exclude) {
    if (exclude && exclude->size() != sal.size()) {
        throw ValidationError("exclude mask shape mismatch");
    }
    std::vector<std::uint32_t> order = eligible_order(sal, exclude);
    if (count > order.size()) {
        throw ValidationError("keep count " + std::to_string(count) +
                              " exceeds eligible entries " + std::to_string(order.size()));
    }
    PruneMask mask;
    mask.rows = sal.rows();
    mask.cols = sal.cols();
    mask.keep.assign(sal.size(), 0);
    for (std::size_t k = 0; k < count; ++k) mask.keep[order[k]] = 1;
    mask.threshold = count == 0 ? std::numeric_limits<double>::infinity()
                                : sal.values()[order[count - 1]];
    mask.kept_fraction =
        sal.size() == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(sal.size());
    return mask;
}

PruneMask mask_top_fraction(const SalienceMap& sal, double fraction,
                            const std::vector<std::uint8_t>* exclude) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw ValidationError("fraction must lie in [0, 1]");
    }
    if (exclude && exclude->size() != sal.size()) {
        throw ValidationError("exclude mask shape mismatch");
    }
    std::size_t eligible = sal.size();
    if (exclude) {
        for (std::uint8_t e : *exclude) eligible -= e != 0;
    }
    const auto count = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(eligible)));
    return mask_top_count(sal, std::min(count, eligible), exclude);
}

namespace {

std::vector<double> descending_cumsum(const SalienceMap& sal) {
    std::vector<double> sorted(sal.values());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    std::vector<double> cum(sorted.size() + 1, 0.0);
    for (std::size_t k = 0; k < sorted.size(); ++k) cum[k + 1] = cum[k] + sorted[k];
    return cum;
}

}  // namespace

std::vector<std::pair<double, double>> retention_curve(const SalienceMap& sal,
                                                       std::size_t points) {
    if (points < 2) throw ValidationError("retention_curve needs at least 2 points");
    const std::vector<double> cum = descending_cumsum(sal);
    const double total = cum.back();
    const auto n = static_cast<double>(sal.size());
    std::vector<std::pair<double, double>> curve;
    curve.reserve(points);
    for (std::size_t p = 0; p < points; ++p) {
        const double q = static_cast<double>(p) / static_cast<double>(points - 1);
        const auto kept = static_cast<std::size_t>(std::llround(q * n));
        const double retained = total > 0.0 ? cum[kept] / total : 1.0;
        curve.emplace_back(q, retained);
    }
    return curve;
}

double fraction_for_salience(const SalienceMap& sal, double target_salience_fraction) {
    if (!(target_salience_fraction > 0.0 && target_salience_fraction <= 1.0)) {
        throw ValidationError("target salience fraction must lie in (0, 1]");
    }
    const std::vector<double> cum = descending_cumsum(sal);
    const double total = cum.back();
    if (total <= 0.0) return 0.0;
    const double target = target_salience_fraction * total;
    for (std::size_t k = 0; k < cum.size(); ++k) {
        if (cum[k] >= target) {
            return static_cast<double>(k) / static_cast<double>(sal.size());
        }
    }
    return 1.0;
}

}  // namespace slrc
