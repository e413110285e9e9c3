#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace spdegp;
using namespace spdegp::testing;

namespace {

SparseMatrix<double> random_sparse(Rng& rng, std::size_t r, std::size_t c, double density) {
    std::vector<Triplet<double>> t;
    std::bernoulli_distribution pick(density);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
            if (pick(rng)) t.push_back({i, j, uniform(rng, -2, 2)});
    return SparseMatrix<double>::from_triplets(r, c, std::move(t));
}

Eigen::MatrixXd dense_rect(const SparseMatrix<double>& a) { return to_dense(a); }

} // namespace

TEST(Sparse, TripletsSumDuplicates) {
    const auto a = SparseMatrix<double>::from_triplets(2, 2, {{0, 1, 1.0}, {0, 1, 2.5}, {1, 0, -1.0}});
    EXPECT_EQ(a.nnz(), 2u);
    EXPECT_DOUBLE_EQ(a.coeff(0, 1), 3.5);
    EXPECT_DOUBLE_EQ(a.coeff(0, 0), 0.0);
}

TEST(Sparse, ColumnsSortedWithinRows) {
    const auto a = SparseMatrix<double>::from_triplets(1, 5, {{0, 4, 1.0}, {0, 0, 1.0}, {0, 2, 1.0}});
    EXPECT_TRUE(std::is_sorted(a.col_idx().begin(), a.col_idx().end()));
}

TEST(Sparse, ArithmeticMatchesDense) {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 12));
        const auto k = static_cast<std::size_t>(uniform_int(rng, 1, 12));
        const auto a = random_sparse(rng, n, k, 0.3);
        const auto b = random_sparse(rng, k, n, 0.3);
        const auto c = random_sparse(rng, n, k, 0.3);
        const auto x = random_vector(rng, k);
        const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(k));

        const auto y = spmv(a, x);
        const Eigen::VectorXd yd = dense_rect(a) * xv;
        for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y[i], yd(static_cast<Eigen::Index>(i)), 1e-12);
        EXPECT_LT(max_abs(dense_rect(spmul(a, b)) - dense_rect(a) * dense_rect(b)), 1e-12);
        EXPECT_LT(max_abs(dense_rect(transpose(a)) - dense_rect(a).transpose()), 1e-15);
        EXPECT_LT(max_abs(dense_rect(spadd(a, c, 2.0, -0.5)) - (2.0 * dense_rect(a) - 0.5 * dense_rect(c))), 1e-12);
    }
}

TEST(Sparse, ScaleRowsColsIsDiagonalSandwich) {
    Rng rng(2);
    const auto a = random_sparse(rng, 6, 6, 0.5);
    const auto l = random_vector(rng, 6);
    const auto r = random_vector(rng, 6);
    const auto s = scale_rows_cols(a, std::span<const double>(l), std::span<const double>(r));
    const Eigen::VectorXd lv = Eigen::Map<const Eigen::VectorXd>(l.data(), 6);
    const Eigen::VectorXd rv = Eigen::Map<const Eigen::VectorXd>(r.data(), 6);
    EXPECT_LT(max_abs(dense(s) - lv.asDiagonal() * dense(a) * rv.asDiagonal()), 1e-12);
}

TEST(Sparse, DimensionMismatchThrows) {
    const auto a = SparseMatrix<double>::identity(3);
    const auto b = SparseMatrix<double>::identity(4);
    EXPECT_THROW(spmul(a, b), DimensionError);
    EXPECT_THROW(spadd(a, b), DimensionError);
    EXPECT_THROW(spmv(a, std::vector<double>(4)), DimensionError);
}

TEST(Sparse, TriangleAndAsymmetry) {
    Rng rng(3);
    const auto a = random_spd(rng, 8);
    EXPECT_EQ(relative_asymmetry(a), 0.0);
    const auto lo = triangle(a, true);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t p = lo.row_ptr()[r]; p < lo.row_ptr()[r + 1]; ++p) EXPECT_LE(lo.col_idx()[p], r);
    auto b = a;
    b.values()[1] += 1.0;
    EXPECT_GT(relative_asymmetry(b), 0.0);
}

TEST(Sparse, MatrixMarketRoundTrip) {
    Rng rng(4);
    const auto a = random_sparse(rng, 7, 5, 0.4);
    const auto dir = temp_dir("mm");
    write_matrix_market(a, dir / "a.mtx");
    const auto b = read_matrix_market(dir / "a.mtx");
    EXPECT_TRUE(a.same_pattern(b));
    EXPECT_EQ(a.values(), b.values());
}

TEST(Ordering, RcmIsAPermutationThatShrinksBandwidth) {
    // 2D Laplacian with a scrambled numbering.
    const Grid2D g{10, 10, 1, 1, 1, 1};
    const auto lap = isotropic_operator(g, 1.0);
    Rng rng(5);
    std::vector<std::size_t> shuffle(g.nodes());
    std::iota(shuffle.begin(), shuffle.end(), 0);
    std::shuffle(shuffle.begin(), shuffle.end(), rng);
    const auto scrambled = permute_symmetric(lap, shuffle);
    auto bandwidth = [](const SparseMatrix<double>& a) {
        std::size_t bw = 0;
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p)
                bw = std::max(bw, r > a.col_idx()[p] ? r - a.col_idx()[p] : a.col_idx()[p] - r);
        return bw;
    };
    const auto perm = reverse_cuthill_mckee(scrambled);
    auto sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size(); ++k) EXPECT_EQ(sorted[k], k);
    EXPECT_LE(bandwidth(permute_symmetric(scrambled, perm)), 12u);
    EXPECT_GT(bandwidth(scrambled), 50u);
}

TEST(Ordering, InversePermutation) {
    const std::vector<std::size_t> p{2, 0, 3, 1};
    const auto inv = inverse_permutation(p);
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_EQ(inv[p[k]], k);
}
