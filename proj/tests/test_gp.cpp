#include <gtest/gtest.h>

#include "spdegp/dense_oracle.hpp"
#include "test_support.hpp"

using namespace spdegp;
using namespace spdegp::testing;

TEST(OptimalInterpolation, PrecisionFormEqualsCovarianceForm) {
    Rng rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const auto in = random_instance(rng);
        const auto jp = build_prior(in.params, in.scheme);
        const auto n = jp.size();
        const auto obs = random_observations(rng, n, uniform(rng, 0.1, 0.6), uniform(rng, 1e-3, 0.5));
        const auto xb = random_vector(rng, n, 0.3);
        const auto x = optimal_interpolate(jp.q, obs, xb).x;
        const auto ref = oracle::covariance_oi(to_dense(jp.q), obs, oracle::to_vec(xb));
        for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(x[k], ref(static_cast<Eigen::Index>(k)), 1e-8);
    }
}

TEST(OptimalInterpolation, ExactObservationsAreInterpolated) {
    Rng rng(62);
    const auto in = random_instance(rng);
    const auto jp = build_prior(in.params, in.scheme);
    const auto obs = random_observations(rng, jp.size(), 0.3, 0.0);
    const std::vector<double> xb(jp.size(), 0.0);
    const auto x = optimal_interpolate(jp.q, obs, xb).x;
    for (const auto& o : obs) EXPECT_NEAR(x[o.index], o.value, 1e-6);
}

TEST(OptimalInterpolation, NoObservationsReturnsBackground) {
    const auto p = ParamFields<double>::uniform(Grid2D{3, 3, 1, 1, 1, 2}, 1, 1);
    const auto jp = build_prior(p, Scheme::centered);
    const std::vector<double> xb(18, 0.7);
    EXPECT_EQ(optimal_interpolate(jp.q, ObsSet(18, {}), xb).x, xb);
    EXPECT_THROW(optimal_interpolate(jp.q, ObsSet(18, {}), std::vector<double>(5)), DimensionError);
}

TEST(OptimalInterpolation, IncrementReusesThePosteriorFactor) {
    Rng rng(63);
    const auto in = random_instance(rng);
    const auto jp = build_prior(in.params, in.scheme);
    const auto obs = random_observations(rng, jp.size(), 0.4, 0.1);
    const std::vector<double> xb(jp.size(), 0.0);
    const auto oi = optimal_interpolate(jp.q, obs, xb);
    const auto fresh = obs.with_values(random_vector(rng, obs.size()));
    const auto inc = oi_increment(*oi.factor, fresh, xb);
    const auto direct = optimal_interpolate(jp.q, fresh, xb).x;
    for (std::size_t k = 0; k < inc.size(); ++k) EXPECT_NEAR(inc[k], direct[k], 1e-10);
}

TEST(Windows, CoverTheTimeAxis) {
    const auto w = time_windows(11, 4);
    ASSERT_EQ(w.size(), 3u);
    EXPECT_EQ(w[2], (std::pair<int, int>{8, 3}));
    EXPECT_EQ(time_windows(5, 0).size(), 1u);
    EXPECT_EQ(time_windows(5, 9).front().second, 5);
}

TEST(Windows, WholeWindowEqualsDirectOI) {
    Rng rng(64);
    const auto in = random_instance(rng);
    const auto n = in.params.grid.size();
    const auto obs = random_observations(rng, n, 0.3, 0.01);
    const std::vector<double> xb(n, 0.0);
    const auto a = windowed_oi(in.params, in.scheme, obs, xb);
    const auto b = optimal_interpolate(build_prior(in.params, in.scheme).q, obs, xb).x;
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
}

TEST(Variational, GradientMatchesFiniteDifferences) {
    Rng rng(65);
    const auto in = random_instance(rng);
    const auto jp = build_prior(in.params, in.scheme);
    const auto n = jp.size();
    const auto obs = random_observations(rng, n, 0.4, 0.2);
    const auto xb = random_vector(rng, n, 0.1);
    auto x = random_vector(rng, n);
    const auto g = variational_gradient(x, obs, jp.q, xb, 0.7);
    const double h = 1e-6;
    for (std::size_t k = 0; k < n; k += 3) {
        auto xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        const double fd = (variational_cost(xp, obs, jp.q, xb, 0.7) - variational_cost(xm, obs, jp.q, xb, 0.7)) / (2 * h);
        EXPECT_NEAR(g[k], fd, 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Variational, GradientDescentReachesTheOIEstimate) {
    Rng rng(66);
    const auto p = ParamFields<double>::uniform(Grid2D{4, 4, 1, 1, 1, 2}, 1.0, 0.5);
    const auto jp = build_prior(p, Scheme::ufdm1);
    const auto obs = random_observations(rng, jp.size(), 0.5, 0.5);
    const std::vector<double> xb(jp.size(), 0.0);
    const auto ref = optimal_interpolate(jp.q, obs, xb).x;
    for (auto rule : {StepRule::backtracking, StepRule::exact}) {
        GradientOptions opt;
        opt.rule = rule;
        opt.n_iters = 50000;
        opt.grad_tol = 1e-8;
        const auto st = gradient_descent_solve(obs, jp.q, xb, opt);
        EXPECT_TRUE(st.converged);
        for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(st.x[k], ref[k], 1e-6);
        for (std::size_t i = 1; i < st.cost_history.size(); ++i)
            EXPECT_LE(st.cost_history[i], st.cost_history[i - 1] + 1e-12);
    }
}

TEST(Variational, ExactStepOnIsotropicHessianConvergesInOneIteration) {
    // H^T R^{-1} H + Q proportional to I: the first exact step lands on the minimizer.
    const std::size_t n = 6;
    const auto q = SparseMatrix<double>::identity(n, 1.0);
    std::vector<Observation> items;
    for (std::size_t k = 0; k < n; ++k) items.push_back({k, static_cast<double>(k), 1.0});
    const ObsSet obs(n, items);
    GradientOptions opt;
    opt.rule = StepRule::exact;
    opt.n_iters = 3;
    const auto st = gradient_descent_solve(obs, q, std::vector<double>(n, 0.0), opt);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(st.x[k], 0.5 * static_cast<double>(k), 1e-14);
    EXPECT_TRUE(st.converged);
    EXPECT_EQ(st.iterations, 1);
}

TEST(Variational, FixedStepWarnsWhenTheCostRises) {
    const auto q = SparseMatrix<double>::identity(3, 1.0);
    const ObsSet obs(3, {{0, 1.0, 1.0}});
    GradientOptions opt;
    opt.rule = StepRule::fixed;
    opt.eta = 10.0;
    opt.n_iters = 5;
    std::vector<std::string> warnings;
    ScopedWarningSink sink([&](const std::string& m) { warnings.push_back(m); });
    gradient_descent_solve(obs, q, std::vector<double>(3, 0.0), opt);
    EXPECT_FALSE(warnings.empty());
}

TEST(Variational, CustomUpdateRuleIsUsed) {
    const auto q = SparseMatrix<double>::identity(2, 1.0);
    const ObsSet obs(2, {{0, 2.0, 1.0}});
    GradientOptions opt;
    opt.n_iters = 200;
    int calls = 0;
    opt.update = [&](std::span<const double>, std::span<const double> g, int) {
        ++calls;
        return std::vector<double>{0.25 * g[0], 0.25 * g[1]};
    };
    const auto st = gradient_descent_solve(obs, q, std::vector<double>(2, 0.0), opt);
    EXPECT_GT(calls, 0);
    EXPECT_NEAR(st.x[0], 1.0, 1e-8);
}

TEST(Simulation, DeterministicGivenTheSeed) {
    const auto p = ParamFields<double>::uniform(Grid2D{5, 5, 1, 1, 1, 6}, 0.5, 1.0);
    const Field x0(p.grid.with_steps(1));
    const auto a = simulate_prior(p, Scheme::ufdm1, x0, 9);
    const auto b = simulate_prior(p, Scheme::ufdm1, x0, 9);
    const auto c = simulate_prior(p, Scheme::ufdm1, x0, 10);
    EXPECT_EQ(a.x.values, b.x.values);
    EXPECT_NE(a.x.values, c.x.values);
}

TEST(Simulation, NoiselessRunFollowsTheStepMatrix) {
    Rng rng(67);
    auto in = random_instance(rng);
    in.params.slots.resize(1);
    in.params.grid.n_steps = 4;
    const Field x0(in.params.grid.with_steps(1), random_vector(rng, in.params.grid.nodes()));
    const auto tr = simulate_prior(in.params, in.scheme, x0, 1, SimulateOptions{false});
    for (int t = 1; t < 4; ++t) {
        const auto back = spmv(step_matrix(in.params, t, in.scheme), tr.x.frame(t));
        const auto prev = tr.x.frame(t - 1);
        for (std::size_t k = 0; k < back.size(); ++k) EXPECT_NEAR(back[k], prev[k], 1e-10);
    }
}

TEST(Simulation, WarnsWhenCourantExceedsOne) {
    auto p = ParamFields<double>::uniform(Grid2D{5, 5, 1, 1, 1, 3}, 0.5, 1.0);
    p.slots[0].m1.assign(25, 1.5);
    std::vector<std::string> warnings;
    ScopedWarningSink sink([&](const std::string& m) { warnings.push_back(m); });
    simulate_prior(p, Scheme::ufdm1, Field(p.grid.with_steps(1)), 1);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(warnings[0].find("CFL"), std::string::npos);
}

TEST(Sampling, EmpiricalCovarianceMatchesTheInverse) {
    const auto a = SparseMatrix<double>::from_triplets(
        3, 3, {{0, 0, 2.0}, {0, 1, -0.8}, {1, 0, -0.8}, {1, 1, 1.5}, {1, 2, 0.3}, {2, 1, 0.3}, {2, 2, 1.0}});
    const auto f = CholeskyFactor::factorize(a);
    const Eigen::MatrixXd cov = dense(a).inverse();
    const std::vector<double> mean{1.0, -2.0, 0.5};
    Rng rng(68);
    const int n = 40000;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(3, 3);
    Eigen::Vector3d mu = Eigen::Vector3d::Zero();
    for (int s = 0; s < n; ++s) {
        const auto z = standard_normal(rng, 3);
        const auto x = sample_from_precision(f, mean, std::span<const double>(z));
        const Eigen::Vector3d d(x[0] - mean[0], x[1] - mean[1], x[2] - mean[2]);
        acc += d * d.transpose();
        mu += d;
    }
    acc /= n;
    mu /= n;
    for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR(acc(k, k), cov(k, k), 0.03 * cov(k, k));
        EXPECT_NEAR(mu(k), 0.0, 0.03);
    }
    EXPECT_NEAR(acc(0, 1), cov(0, 1), 0.03 * std::sqrt(cov(0, 0) * cov(1, 1)));
}

TEST(Observations, NoiselessObservationsEqualTheTruth) {
    Rng rng(69);
    const Grid2D g{6, 6, 1, 1, 1, 2};
    SpaceTimeField truth(g, random_vector(rng, g.size()));
    const auto masks = make_track_mask(g, 2, 1, 3, 0, 1, 1);
    const auto obs = observe(truth, masks, 0.0, rng);
    for (const auto& o : obs) EXPECT_EQ(o.value, truth.values[o.index]);
    const auto noisy = observe(truth, masks, 0.01, rng);
    double ss = 0.0;
    for (const auto& o : noisy) ss += (o.value - truth.values[o.index]) * (o.value - truth.values[o.index]);
    EXPECT_NEAR(ss / static_cast<double>(noisy.size()), 0.01, 0.01);
}
