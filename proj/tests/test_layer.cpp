#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "slrc/layer.hpp"

using namespace slrc;

namespace {

// A small compressed layer with every component populated.
CompressedLayer sample_layer(std::uint64_t seed, std::vector<double> bias = {}) {
    SeededRng rng(seed);
    const DenseMatrix w = DenseMatrix::gaussian(12, 10, rng);
    std::vector<double> norms;
    for (std::size_t j = 0; j < 10; ++j) norms.push_back(0.4 + rng.next_uniform() * 2.0);
    CompressionPlan plan;
    plan.remaining_fraction = 0.5;
    plan.rank = 2;
    plan.preserve_fraction = 0.01;
    plan.iterations = 5;
    plan.seed = seed;
    return compress(w, ColumnScaling(norms, 1e-8), plan, std::move(bias));
}

DenseMatrix dense_form(const CompressedLayer& layer) {
    DenseMatrix d = layer.s.to_dense();
    if (layer.factors.rank > 0) d = add(d, layer.factors.product());
    return d;
}

}  // namespace

TEST_CASE("cost model counts multiply-accumulates per part") {
    CostModel model;
    CHECK(model.dense_cost(64, 48) == 3072.0);
    CHECK(model.sparse_cost(100) == 100.0);
    CHECK(model.lowrank_cost(64, 48, 8) == 8.0 * 112.0);

    model.overhead_factor = 1.7;
    CHECK(model.sparse_cost(100) == doctest::Approx(170.0));

    const CompressedLayer layer = sample_layer(11);
    const CostReport rep = cost_report(layer, model);
    CHECK(rep.dense == 120.0);
    CHECK(rep.sparse == doctest::Approx(1.7 * static_cast<double>(layer.s.nnz())));
    CHECK(rep.lowrank == 2.0 * 22.0);
    CHECK(rep.sum == doctest::Approx(rep.sparse + rep.lowrank));
    CHECK(rep.speedup == doctest::Approx(rep.dense / rep.sum));
}

TEST_CASE("cost_report_from_costs reproduces the reference speedups") {
    struct Row {
        double dense, sparse, lowrank;
        const char* text;
    };
    // Measured multiply-accumulate counts for four layer shapes.
    const Row rows[] = {
        {16384.0, 8364.2, 1024.0, "1.74x"},
        {33024.0, 16535.3, 1416.0, "1.84x"},
        {7168.0, 3705.7, 704.0, "1.63x"},
        {49728.0, 24764.5, 2112.0, "1.85x"},
    };
    for (const Row& r : rows) {
        const CostReport rep = cost_report_from_costs(r.dense, r.sparse, r.lowrank);
        CHECK(rep.sum == doctest::Approx(r.sparse + r.lowrank));
        CHECK(format_speedup(rep.speedup) == r.text);
    }

    CHECK_THROWS_AS(cost_report_from_costs(0.0, 10.0, 1.0), ValidationError);
    CHECK_THROWS_AS(cost_report_from_costs(-5.0, 10.0, 1.0), ValidationError);
    CHECK_THROWS_AS(cost_report_from_costs(10.0, -1.0, 1.0), ValidationError);
    CHECK_THROWS_AS(cost_report_from_costs(10.0, 0.0, 0.0), ValidationError);
}

TEST_CASE("format_speedup rounds at the third decimal, half to even at the second") {
    CHECK(format_speedup(2.0) == "2.00x");
    CHECK(format_speedup(1.7452) == "1.74x");
    CHECK(format_speedup(1.005) == "1.00x");   // rem 5, even centi stays
    CHECK(format_speedup(1.015) == "1.02x");   // rem 5, odd centi bumps
    CHECK(format_speedup(1.0056) == "1.01x");  // rem 6 after milli rounding
    CHECK(format_speedup(0.125) == "0.12x");
    CHECK(format_speedup(0.135) == "0.14x");
    CHECK(format_speedup(12.344999) == "12.34x");
    CHECK(format_speedup(0.0004) == "0.00x");  // milli rounds to 0, still renders

    CHECK_THROWS_AS(format_speedup(0.0), ValidationError);
    CHECK_THROWS_AS(format_speedup(-1.0), ValidationError);
    CHECK_THROWS_AS(format_speedup(std::numeric_limits<double>::infinity()),
                    ValidationError);
    CHECK_THROWS_AS(format_speedup(std::numeric_limits<double>::quiet_NaN()),
                    ValidationError);
}

TEST_CASE("apply matches the densified layer") {
    std::vector<double> bias(12);
    for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = 0.1 * static_cast<double>(i) - 0.5;
    const CompressedLayer layer = sample_layer(21, bias);

    SeededRng rng(22);
    const DenseMatrix x = DenseMatrix::gaussian(10, 7, rng);
    const DenseMatrix got = apply(layer, x);
    DenseMatrix want = oracle::matmul(dense_form(layer), x);
    for (std::size_t i = 0; i < want.rows(); ++i) {
        for (std::size_t j = 0; j < want.cols(); ++j) want(i, j) += bias[i];
    }
    REQUIRE(got.rows() == 12);
    REQUIRE(got.cols() == 7);
    for (std::size_t k = 0; k < got.size(); ++k) {
        CHECK(got.data()[k] == doctest::Approx(want.data()[k]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(apply(layer, DenseMatrix(9, 7)), ValidationError);
}

TEST_CASE("apply skips the factor path at rank zero") {
    SeededRng rng(31);
    const DenseMatrix w = DenseMatrix::gaussian(8, 6, rng);
    CompressionPlan plan;
    plan.remaining_fraction = 0.5;
    plan.rank = 0;
    plan.preserve_fraction = 0.0;
    plan.iterations = 1;
    const CompressedLayer layer = compress(w, ColumnScaling::unit(6), plan);

    const DenseMatrix x = DenseMatrix::identity(6);
    const DenseMatrix got = apply(layer, x);
    const DenseMatrix want = layer.s.to_dense();
    CHECK(got.data() == want.data());
}

TEST_CASE("recovery objective and analytic factor gradients agree with finite differences") {
    SeededRng rng(41);
    const DenseMatrix w = DenseMatrix::gaussian(6, 5, rng);
    const DenseMatrix x = DenseMatrix::gaussian(5, 8, rng);
    const SalienceMap sal = salience_of(w, ColumnScaling::unit(5));
    const SparseMatrix s = sparse_from_mask(w, mask_top_fraction(sal, 0.3).keep);

    LowRankFactors f;
    f.rank = 2;
    f.u = DenseMatrix::gaussian(6, 2, rng);
    f.v = DenseMatrix::gaussian(5, 2, rng);

    // Direct evaluation of the objective.
    DenseMatrix e = add(oracle::matmul(f.u, f.v.transposed()), s.to_dense());
    e = subtract(e, w);
    const double want = std::pow(oracle::frob(oracle::matmul(e, x)), 2.0);
    CHECK(recovery_objective(f, s, w, x) == doctest::Approx(want).epsilon(1e-12));

    // The objective is quadratic in each factor, so central differences are
    // exact up to roundoff.
    const FactorGradients g = factor_gradients(f, s, w, x);
    const double h = 1e-4;
    for (std::size_t k = 0; k < f.u.size(); ++k) {
        LowRankFactors fp = f, fm = f;
        fp.u.data()[k] += h;
        fm.u.data()[k] -= h;
        const double fd =
            (recovery_objective(fp, s, w, x) - recovery_objective(fm, s, w, x)) / (2.0 * h);
        CHECK(g.grad_u.data()[k] == doctest::Approx(fd).epsilon(1e-6));
    }
    for (std::size_t k = 0; k < f.v.size(); ++k) {
        LowRankFactors fp = f, fm = f;
        fp.v.data()[k] += h;
        fm.v.data()[k] -= h;
        const double fd =
            (recovery_objective(fp, s, w, x) - recovery_objective(fm, s, w, x)) / (2.0 * h);
        CHECK(g.grad_v.data()[k] == doctest::Approx(fd).epsilon(1e-6));
    }

    CHECK_THROWS_AS(recovery_objective(f, s, w, DenseMatrix(4, 8)), ValidationError);
    CHECK_THROWS_AS(factor_gradients(f, s, w, DenseMatrix(4, 8)), ValidationError);
}

TEST_CASE("the layer overload of factor_gradients matches the explicit one") {
    const CompressedLayer layer = sample_layer(51);
    SeededRng rng(52);
    const DenseMatrix w = DenseMatrix::gaussian(12, 10, rng);
    const DenseMatrix x = DenseMatrix::gaussian(10, 6, rng);
    const FactorGradients a = factor_gradients(layer, w, x);
    const FactorGradients b = factor_gradients(layer.factors, layer.s, w, x);
    CHECK(a.grad_u.data() == b.grad_u.data());
    CHECK(a.grad_v.data() == b.grad_v.data());
}

TEST_CASE("gradient descent on the factors decreases the objective") {
    SeededRng rng(61);
    const DenseMatrix w = DenseMatrix::gaussian(8, 6, rng);
    const DenseMatrix x = DenseMatrix::gaussian(6, 10, rng);
    const SalienceMap sal = salience_of(w, ColumnScaling::unit(6));
    const SparseMatrix s = sparse_from_mask(w, mask_top_fraction(sal, 0.2).keep);

    LowRankFactors f;
    f.rank = 2;
    f.u = DenseMatrix::gaussian(8, 2, rng);
    f.v = DenseMatrix::gaussian(6, 2, rng);

    double prev = recovery_objective(f, s, w, x);
    const double step = 1e-4;
    for (int it = 0; it < 30; ++it) {
        const FactorGradients g = factor_gradients(f, s, w, x);
        for (std::size_t k = 0; k < f.u.size(); ++k) f.u.data()[k] -= step * g.grad_u.data()[k];
        for (std::size_t k = 0; k < f.v.size(); ++k) f.v.data()[k] -= step * g.grad_v.data()[k];
        const double cur = recovery_objective(f, s, w, x);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("reconstruction_report measures the true activation error") {
    const CompressedLayer layer = sample_layer(71);
    SeededRng rng(72);
    const DenseMatrix w = DenseMatrix::gaussian(12, 10, rng);
    const DenseMatrix x_eval = DenseMatrix::gaussian(10, 20, rng);

    const ReconstructionReport rep = reconstruction_report(layer, w, x_eval);
    const DenseMatrix diff = subtract(w, dense_form(layer));
    const double frob = oracle::frob(oracle::matmul(diff, x_eval));
    CHECK(rep.frobenius_error == doctest::Approx(frob).epsilon(1e-12));
    CHECK(rep.relative_error ==
          doctest::Approx(frob / oracle::frob(oracle::matmul(w, x_eval))).epsilon(1e-12));

    // The surrogate collapses the activations to per-channel norms.
    const ColumnScaling scaling = column_l2_norms(x_eval, layer.plan.epsilon);
    CHECK(rep.surrogate_loss ==
          doctest::Approx(loss_of(w, layer.s, layer.factors, scaling)).epsilon(1e-12));

    // A perfect layer reports zero errors against its own densified form.
    const ReconstructionReport exact = reconstruction_report(layer, dense_form(layer), x_eval);
    CHECK(exact.frobenius_error <= 1e-10);
    CHECK(exact.relative_error <= 1e-10);

    CHECK_THROWS_AS(reconstruction_report(layer, w, DenseMatrix(9, 20)), ValidationError);
    CHECK_THROWS_AS(reconstruction_report(layer, DenseMatrix(5, 5), x_eval), ValidationError);
}
