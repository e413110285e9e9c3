#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace spdegp;
using namespace spdegp::testing;

TEST(Cholesky, SolveAndLogdetMatchDense) {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 40));
        const auto a = random_spd(rng, n, 0.2);
        const auto ad = dense(a);
        for (auto ord : {Ordering::natural, Ordering::rcm}) {
            const auto f = CholeskyFactor::factorize(a, ord);
            const auto b = random_vector(rng, n);
            const auto x = f.solve(b);
            const auto r = spmv(a, x);
            for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(r[k], b[k], 1e-10);
            EXPECT_NEAR(f.logdet(), std::log(ad.determinant()), 1e-9 * std::max(1.0, std::abs(f.logdet())));
        }
    }
}

TEST(Cholesky, FactorReproducesPermutedMatrix) {
    Rng rng(12);
    const auto a = random_spd(rng, 25, 0.15);
    const auto f = CholeskyFactor::factorize(a, Ordering::rcm);
    const auto l = dense(f.lower());
    const auto pa = dense(permute_symmetric(a, f.perm()));
    EXPECT_LT(max_abs(l * l.transpose() - pa), 1e-12);
}

TEST(Cholesky, NotPositiveDefiniteReportsPivot) {
    const auto a = SparseMatrix<double>::from_triplets(3, 3, {{0, 0, 1.0}, {1, 1, -2.0}, {2, 2, 1.0}});
    try {
        CholeskyFactor::factorize(a, Ordering::natural);
        FAIL();
    } catch (const NotPositiveDefinite& e) {
        EXPECT_EQ(e.original_index(), 1u);
        EXPECT_EQ(e.pivot(), 1u);
    }
}

TEST(Cholesky, SymmetryTolerances) {
    Rng rng(13);
    const auto a = random_spd(rng, 10, 0.4);
    std::size_t off = 0;
    while (a.col_idx()[off] == 0) ++off; // first off-diagonal entry of row 0
    ASSERT_NE(a.col_idx()[off], 0u);

    auto small = a;
    small.values()[off] *= 1.0 + 1e-14;
    EXPECT_NO_THROW(CholeskyFactor::factorize(small));

    auto mid = a;
    mid.values()[off] += 1e-10 * frobenius_norm(a);
    std::vector<std::string> warnings;
    {
        ScopedWarningSink sink([&](const std::string& m) { warnings.push_back(m); });
        EXPECT_NO_THROW(CholeskyFactor::factorize(mid));
    }
    EXPECT_EQ(warnings.size(), 1u);

    auto big = a;
    big.values()[off] += 1e-3 * frobenius_norm(a);
    EXPECT_THROW(CholeskyFactor::factorize(big), NumericalError);
}

TEST(Cholesky, NonSquareIsADimensionError) {
    const auto a = SparseMatrix<double>::from_triplets(2, 3, {{0, 0, 1.0}});
    EXPECT_THROW(CholeskyFactor::factorize(a), DimensionError);
}

TEST(Cholesky, RcmReducesFill) {
    const Grid2D g{12, 12, 1, 1, 1, 1};
    const auto lap = isotropic_operator(g, 1.0);
    Rng rng(14);
    std::vector<std::size_t> shuffle(g.nodes());
    std::iota(shuffle.begin(), shuffle.end(), 0);
    std::shuffle(shuffle.begin(), shuffle.end(), rng);
    const auto scrambled = permute_symmetric(lap, shuffle);
    const auto natural = CholeskyFactor::factorize(scrambled, Ordering::natural);
    const auto rcm = CholeskyFactor::factorize(scrambled, Ordering::rcm);
    EXPECT_LT(rcm.nnz(), natural.nnz());
    EXPECT_NEAR(rcm.logdet(), natural.logdet(), 1e-9);
}

TEST(TriangularSolve, LowerAndTransposed) {
    Rng rng(15);
    const auto a = random_spd(rng, 12, 0.3);
    const auto f = CholeskyFactor::factorize(a, Ordering::natural);
    const auto l = f.lower();
    const auto ld = dense(l);
    const auto b = random_vector(rng, 12);
    const Eigen::VectorXd bv = Eigen::Map<const Eigen::VectorXd>(b.data(), 12);
    const auto x = solve_triangular(l, b, TriangularSide::lower);
    const auto y = solve_triangular(l, b, TriangularSide::upper);
    const Eigen::VectorXd xd = ld.triangularView<Eigen::Lower>().solve(bv);
    const Eigen::VectorXd yd = ld.transpose().triangularView<Eigen::Upper>().solve(bv);
    for (int k = 0; k < 12; ++k) {
        EXPECT_NEAR(x[static_cast<std::size_t>(k)], xd(k), 1e-12);
        EXPECT_NEAR(y[static_cast<std::size_t>(k)], yd(k), 1e-12);
    }
}

TEST(TriangularSolve, ZeroDiagonalIsNumericalError) {
    const auto l = SparseMatrix<double>::from_triplets(2, 2, {{0, 0, 1.0}, {1, 0, 1.0}});
    EXPECT_THROW(solve_triangular(l, std::vector<double>{1.0, 1.0}, TriangularSide::lower), NumericalError);
}

TEST(Cholesky, SharedFactorIsReusable) {
    Rng rng(16);
    const auto a = random_spd(rng, 9);
    const auto f = factorize_shared(a);
    const auto x1 = f->solve(random_vector(rng, 9));
    const auto x2 = f->solve(random_vector(rng, 9));
    EXPECT_EQ(x1.size(), 9u);
    EXPECT_NE(x1, x2);
}
