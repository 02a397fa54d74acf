#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "oracles.hpp"
#include "slrc/salience.hpp"

using namespace slrc;

TEST_CASE("salience is the squared scaled magnitude") {
    const DenseMatrix r(2, 3, {1.0, -2.0, 0.5, 0.0, 3.0, -1.0});
    const ColumnScaling scaling({2.0, 1.0, 4.0}, 1e-8);
    const SalienceMap sal = salience_of(r, scaling);
    CHECK(sal(0, 0) == 4.0);    // (|1| * 2)^2
    CHECK(sal(0, 1) == 4.0);    // (|-2| * 1)^2
    CHECK(sal(0, 2) == 4.0);    // (0.5 * 4)^2
    CHECK(sal(1, 0) == 0.0);
    CHECK(sal(1, 1) == 9.0);
    CHECK(sal(1, 2) == 16.0);

    CHECK_THROWS_AS(salience_of(r, ColumnScaling({1.0, 2.0}, 1e-8)), ValidationError);
}

TEST_CASE("unit scaling reduces salience order to magnitude order") {
    SeededRng rng(11);
    const DenseMatrix w = DenseMatrix::gaussian(12, 9, rng);
    const SalienceMap sal = salience_of(w, ColumnScaling::unit(9));

    std::vector<double> magnitudes(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) magnitudes[k] = std::abs(w.data()[k]);
    const std::size_t keep = 40;
    const std::vector<std::size_t> want = oracle::top_k_indices(magnitudes, keep);

    const PruneMask mask = mask_top_count(sal, keep);
    CHECK(mask.kept_count() == keep);
    for (std::size_t idx : want) CHECK(mask.keep[idx] == 1);
}

TEST_CASE("mask_top_count keeps the exact count with deterministic ties") {
    // All-equal salience: ties resolve toward smaller linear index.
    const SalienceMap flat(2, 3, std::vector<double>(6, 5.0));
    const PruneMask mask = mask_top_count(flat, 4);
    CHECK(mask.kept_count() == 4);
    for (std::size_t k = 0; k < 6; ++k) CHECK(mask.keep[k] == (k < 4 ? 1 : 0));
    CHECK(mask.threshold == 5.0);
    CHECK(mask.kept_fraction == doctest::Approx(4.0 / 6.0));

    const PruneMask none = mask_top_count(flat, 0);
    CHECK(none.kept_count() == 0);
    CHECK(none.threshold == std::numeric_limits<double>::infinity());

    CHECK_THROWS_AS(mask_top_count(flat, 7), ValidationError);
}

TEST_CASE("exclude removes entries from pool and count base") {
    const SalienceMap sal(1, 6, {10.0, 9.0, 8.0, 7.0, 6.0, 5.0});
    std::vector<std::uint8_t> exclude = {1, 0, 1, 0, 0, 0};

    const PruneMask m2 = mask_top_count(sal, 2, &exclude);
    CHECK(m2.keep == std::vector<std::uint8_t>{0, 1, 0, 1, 0, 0});

    // 4 eligible entries; fraction counts against those, not all 6.
    const PruneMask half = mask_top_fraction(sal, 0.5, &exclude);
    CHECK(half.kept_count() == 2);

    // Excluded entries can never exceed the eligible pool.
    CHECK_THROWS_AS(mask_top_count(sal, 5, &exclude), ValidationError);
    std::vector<std::uint8_t> wrong(5, 0);
    CHECK_THROWS_AS(mask_top_count(sal, 1, &wrong), ValidationError);
}

TEST_CASE("mask_top_fraction rounds to nearest") {
    const SalienceMap sal(1, 5, {5.0, 4.0, 3.0, 2.0, 1.0});
    CHECK(mask_top_fraction(sal, 0.0).kept_count() == 0);
    CHECK(mask_top_fraction(sal, 1.0).kept_count() == 5);
    CHECK(mask_top_fraction(sal, 0.2).kept_count() == 1);
    CHECK(mask_top_fraction(sal, 0.29).kept_count() == 1);  // 1.45 rounds down
    CHECK(mask_top_fraction(sal, 0.31).kept_count() == 2);  // 1.55 rounds up
    CHECK_THROWS_AS(mask_top_fraction(sal, -0.1), ValidationError);
    CHECK_THROWS_AS(mask_top_fraction(sal, 1.1), ValidationError);
}

TEST_CASE("retention curve matches a direct cumulative sum") {
    SeededRng rng(21);
    const DenseMatrix w = DenseMatrix::gaussian(10, 10, rng);
    const SalienceMap sal = salience_of(w, ColumnScaling::unit(10));

    const auto curve = retention_curve(sal, 21);
    REQUIRE(curve.size() == 21);
    CHECK(curve.front().first == 0.0);
    CHECK(curve.front().second == 0.0);
    CHECK(curve.back().first == 1.0);
    CHECK(curve.back().second == doctest::Approx(1.0).epsilon(1e-12));

    // Independent reconstruction of a middle point.
    std::vector<double> sorted(sal.values());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double total = 0.0;
    for (double v : sorted) total += v;
    for (std::size_t p = 1; p + 1 < curve.size(); ++p) {
        const auto kept = static_cast<std::size_t>(
            std::llround(curve[p].first * static_cast<double>(sal.size())));
        double acc = 0.0;
        for (std::size_t k = 0; k < kept; ++k) acc += sorted[k];
        CHECK(curve[p].second == doctest::Approx(acc / total).epsilon(1e-12));
        CHECK(curve[p].second >= curve[p - 1].second);  // monotone
    }

    CHECK_THROWS_AS(retention_curve(sal, 1), ValidationError);
}

TEST_CASE("fraction_for_salience finds the smallest sufficient fraction") {
    // One dominant entry holds 91% of the salience.
    const SalienceMap spiky(1, 10, {91.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0});
    CHECK(fraction_for_salience(spiky, 0.8) == doctest::Approx(0.1));
    CHECK(fraction_for_salience(spiky, 0.92) == doctest::Approx(0.2));
    CHECK(fraction_for_salience(spiky, 1.0) == doctest::Approx(1.0));

    // Uniform salience needs exactly the target fraction (up to ceiling).
    const SalienceMap flat(1, 100, std::vector<double>(100, 2.0));
    CHECK(fraction_for_salience(flat, 0.8) == doctest::Approx(0.8).epsilon(0.02));

    CHECK_THROWS_AS(fraction_for_salience(flat, 0.0), ValidationError);
    CHECK_THROWS_AS(fraction_for_salience(flat, 1.5), ValidationError);

    // Brute-force cross-check on a random instance.
    SeededRng rng(31);
    const DenseMatrix w = DenseMatrix::gaussian(8, 8, rng);
    const SalienceMap sal = salience_of(w, ColumnScaling::unit(8));
    std::vector<double> sorted(sal.values());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double total = 0.0;
    for (double v : sorted) total += v;
    std::size_t k = 0;
    double acc = 0.0;
    while (acc < 0.8 * total) acc += sorted[k++];
    CHECK(fraction_for_salience(sal, 0.8) ==
          doctest::Approx(static_cast<double>(k) / 64.0).epsilon(1e-12));
}
