#include <gtest/gtest.h>

#include "spdegp/dense_oracle.hpp"
#include "test_support.hpp"

using namespace spdegp;
using namespace spdegp::testing;

TEST(JointPrecision, MatchesDenseOracleOnRandomInstances) {
    Rng rng(51);
    for (int trial = 0; trial < 25; ++trial) {
        const auto in = random_instance(rng);
        for (auto mode : {P0Mode::innovation, P0Mode::recursion}) {
            const auto p0 = build_p0_precision(window_params(in.params, 0, 1), in.scheme, 20, mode);
            const auto jp = build_joint_precision<double>(in.params, in.scheme, p0);
            const auto ref = oracle::joint_precision(in.params, in.scheme, to_dense(p0));
            EXPECT_LT((to_dense(jp.q) - ref).norm() / ref.norm(), 1e-8) << "trial " << trial;
        }
    }
}

TEST(JointPrecision, BlockTridiagonalSymmetricPositiveDefinite) {
    Rng rng(52);
    for (int trial = 0; trial < 15; ++trial) {
        const auto in = random_instance(rng, 4);
        const auto jp = build_prior(in.params, in.scheme);
        const auto m = in.params.grid.nodes();
        EXPECT_EQ(relative_asymmetry(jp.q), 0.0);
        for (std::size_t r = 0; r < jp.q.rows(); ++r)
            for (std::size_t p = jp.q.row_ptr()[r]; p < jp.q.row_ptr()[r + 1]; ++p) {
                const auto br = r / m, bc = jp.q.col_idx()[p] / m;
                EXPECT_LE(br > bc ? br - bc : bc - br, 1u);
            }
        ASSERT_TRUE(jp.factor);
        EXPECT_TRUE(std::isfinite(jp.factor->logdet()));
    }
}

TEST(JointPrecision, SingleStepIsTheInitialPrecision) {
    Rng rng(53);
    auto in = random_instance(rng, 1);
    const auto p0 = p0_innovation(in.params, in.scheme);
    const auto jp = build_joint_precision<double>(in.params, in.scheme, p0);
    EXPECT_LT(max_abs(to_dense(jp.q) - to_dense(p0)), 1e-12);
}

TEST(JointPrecision, LogdetFactorsOverBlocks) {
    Rng rng(54);
    for (int trial = 0; trial < 15; ++trial) {
        const auto in = random_instance(rng);
        const auto p0 = build_p0_precision(window_params(in.params, 0, 1), in.scheme, 10, P0Mode::recursion);
        const auto jp = build_joint_precision<double>(in.params, in.scheme, p0);
        const double ref = oracle::logdet_spd(to_dense(jp.q));
        EXPECT_NEAR(jp.factor->logdet(), ref, 1e-8 * std::max(1.0, std::abs(ref)));
        EXPECT_NEAR(logdet_by_blocks(in.params, in.scheme, p0), ref, 1e-8 * std::max(1.0, std::abs(ref)));
    }
}

TEST(JointPrecision, IndefiniteInitialBlockNamesTheBlock) {
    const auto p = ParamFields<double>::uniform(Grid2D{3, 3, 1, 1, 1, 2}, 1, 1);
    const auto bad = SparseMatrix<double>::identity(9, -50.0);
    try {
        build_joint_precision<double>(p, Scheme::centered, bad);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("time block 0"), std::string::npos) << e.what();
    }
}

TEST(JointPrecision, WrongInitialSizeIsADimensionError) {
    const auto p = ParamFields<double>::uniform(Grid2D{3, 3, 1, 1, 1, 2}, 1, 1);
    EXPECT_THROW(build_joint_precision<double>(p, Scheme::centered, SparseMatrix<double>::identity(4)), DimensionError);
}

TEST(InitialPrecision, InnovationFormula) {
    Rng rng(55);
    const auto in = random_instance(rng, 1);
    const auto& g = in.params.grid;
    const auto minv = to_dense(step_matrix(in.params, 0, in.scheme));
    Eigen::VectorXd tau_inv(static_cast<Eigen::Index>(g.nodes()));
    for (std::size_t k = 0; k < g.nodes(); ++k) tau_inv(static_cast<Eigen::Index>(k)) = 1.0 / in.params.at(0).tau[k];
    const Eigen::MatrixXd qt = g.dx * g.dy * Eigen::MatrixXd(tau_inv.asDiagonal()) * tau_inv.asDiagonal();
    const Eigen::MatrixXd ref = minv.transpose() * qt * minv / g.dt;
    EXPECT_LT(max_abs(to_dense(p0_innovation(in.params, in.scheme)) - ref), 1e-10 * max_abs(ref));
}

TEST(InitialPrecision, RecursionReachesTheStationaryCovariance) {
    const Grid2D g{3, 3, 1, 1, 1, 1};
    auto p = ParamFields<double>::uniform(g, 0.7, 1.0);
    const auto minv = to_dense(step_matrix(p, 0, Scheme::centered));
    const Eigen::MatrixXd mm = minv.inverse();
    const Eigen::MatrixXd s = mm * mm.transpose(); // dt = dx = dy = tau = 1
    const Eigen::MatrixXd cov = oracle::inverse_spd(p0_recursion_dense(p, Scheme::centered, 400));
    EXPECT_LT(max_abs(cov - (mm * cov * mm.transpose() + s)), 1e-10);
}

TEST(InitialPrecision, RecursionRefusesLargeGrids) {
    const auto p = ParamFields<double>::uniform(Grid2D{70, 70, 1, 1, 1, 1}, 1, 1);
    EXPECT_THROW(p0_recursion_dense(p, Scheme::centered, 1), ConfigError);
    EXPECT_THROW(parse_p0_mode("stationary"), ConfigError);
}

TEST(PosteriorPrecision, AddsInverseVariances) {
    const auto q = SparseMatrix<double>::identity(5, 2.0);
    const ObsSet obs(5, {{1, 0.0, 0.5}, {3, 0.0, 0.25}});
    const auto post = build_posterior_precision(q, obs);
    EXPECT_DOUBLE_EQ(post.coeff(1, 1), 4.0);
    EXPECT_DOUBLE_EQ(post.coeff(3, 3), 6.0);
    EXPECT_DOUBLE_EQ(post.coeff(0, 0), 2.0);
    EXPECT_THROW(build_posterior_precision(q, ObsSet(5, {{1, 0.0, 0.0}})), ConfigError);
    EXPECT_THROW(build_posterior_precision(q, ObsSet(6, {{5, 0.0, 1.0}})), DimensionError);
}

TEST(JointPrecision, MatrixMarketExport) {
    const auto p = ParamFields<double>::uniform(Grid2D{3, 3, 1, 1, 1, 2}, 1, 1);
    const auto jp = build_prior(p, Scheme::ufdm1);
    const auto dir = temp_dir("export");
    write_joint_precision(jp, dir / "q.mtx");
    const auto back = read_matrix_market(dir / "q.mtx");
    EXPECT_TRUE(back.same_pattern(jp.q));
    EXPECT_TRUE(std::filesystem::exists(dir / "q.json"));
}

TEST(JointPrecision, DualAssemblyCarriesValues) {
    Rng rng(56);
    const auto in = random_instance(rng);
    ParamFields<Dual> pd;
    pd.grid = in.params.grid;
    pd.alpha = in.params.alpha;
    for (const auto& s : in.params.slots) {
        ParamSlot<Dual> d;
        for (auto c : kAllComponents) d[c] = std::vector<Dual>(s[c].begin(), s[c].end());
        pd.slots.push_back(d);
    }
    const auto qd = build_joint_precision(pd, in.scheme, p0_innovation(pd, in.scheme), false);
    const auto q = build_joint_precision<double>(in.params, in.scheme, p0_innovation(in.params, in.scheme), false);
    ASSERT_EQ(qd.q.nnz(), q.q.nnz());
    for (std::size_t k = 0; k < q.q.nnz(); ++k) {
        EXPECT_DOUBLE_EQ(qd.q.values()[k].v, q.q.values()[k]);
        EXPECT_EQ(qd.q.values()[k].d, 0.0);
    }
}
