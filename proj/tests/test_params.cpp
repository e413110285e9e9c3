#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace spdegp;
using namespace spdegp::testing;

TEST(Transforms, PositiveTransformRoundTrips) {
    for (double v : {2e-6, 1e-3, 0.33, 1.0, 7.5, 29.0, 31.0, 250.0}) {
        const double raw = inverse_transform(v);
        EXPECT_NEAR(positive_transform(raw), v, 1e-12 * std::max(1.0, v)) << v;
    }
}

TEST(Transforms, PositiveTransformStaysAboveTheFloor) {
    for (double raw : {-800.0, -40.0, -1.0, 0.0, 3.0})
        EXPECT_GE(positive_transform(raw), kPositiveFloor);
    EXPECT_THROW(inverse_transform(kPositiveFloor), ConfigError);
    EXPECT_THROW(inverse_transform(-1.0), ConfigError);
}

TEST(Transforms, VelocityClipIsBoundedAndOdd) {
    const double b = 0.4;
    for (double raw : {-100.0, -1.0, -0.01, 0.0, 0.01, 1.0, 100.0}) {
        EXPECT_LT(std::abs(clip_velocity(raw, b)), b + 1e-15);
        EXPECT_DOUBLE_EQ(clip_velocity(-raw, b), -clip_velocity(raw, b));
    }
    EXPECT_NEAR(clip_velocity(1e-4, b), 1e-4, 1e-11);
    EXPECT_NEAR(unclip_velocity(clip_velocity(0.3, b), b), 0.3, 1e-12);
    EXPECT_THROW(unclip_velocity(0.5, b), ConfigError);
}

TEST(Transforms, VelocityBoundKeepsCourantBelowOne) {
    const Grid2D g{5, 5, 0.5, 2.0, 0.7, 3};
    auto p = ParamFields<double>::uniform(g, 1, 1);
    const double b = velocity_bound(g);
    p.slots[0].m1.assign(g.nodes(), clip_velocity(1e6, b));
    p.slots[0].m2.assign(g.nodes(), clip_velocity(-1e6, b));
    EXPECT_LE(check_stability(p).max_cfl, 0.8 + 1e-12);
}

TEST(Transforms, DualDerivativesMatchCalculus) {
    const Dual x{0.7, 1.0};
    EXPECT_NEAR(softplus(x).d, 1.0 / (1.0 + std::exp(-0.7)), 1e-14);
    EXPECT_NEAR(clip_velocity(x, 2.0).d, 1.0 / std::pow(std::cosh(0.35), 2), 1e-14);
}

TEST(DiffusionTensor, EigenvaluesAreGammaAndGammaPlusBetaV2) {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        const double gamma = uniform(rng, 0.1, 2), beta = uniform(rng, 0, 5);
        const double v1 = uniform(rng, -2, 2), v2 = uniform(rng, -2, 2);
        const auto h = build_diffusion_tensor<double>({gamma}, {beta}, {v1}, {v2});
        const double tr = h.h11[0] + h.h22[0];
        const double det = h.h11[0] * h.h22[0] - h.h12[0] * h.h12[0];
        EXPECT_NEAR(tr, 2 * gamma + beta * (v1 * v1 + v2 * v2), 1e-12);
        EXPECT_NEAR(det, gamma * (gamma + beta * (v1 * v1 + v2 * v2)), 1e-10);
    }
}

TEST(Stability, CourantAndPeclet) {
    const Grid2D g{4, 4, 1.0, 2.0, 2.0, 2};
    auto p = ParamFields<double>::uniform(g, 1, 0.1);
    p.slots[0].m1.assign(g.nodes(), 0.3);
    p.slots[0].m2.assign(g.nodes(), -0.4);
    const auto r = check_stability(p);
    EXPECT_NEAR(r.max_cfl, 2.0 * (0.3 / 1.0 + 0.4 / 2.0), 1e-14);
    EXPECT_TRUE(r.ok);
    EXPECT_NEAR(r.max_peclet, 0.4 * 2.0 / 0.1, 1e-12);
    EXPECT_TRUE(r.peclet_warning);
    p.slots[0].m1.assign(g.nodes(), 0.31);
    EXPECT_FALSE(check_stability(p).ok);
}

TEST(ParamFields, ValidateReportsEveryViolation) {
    auto p = ParamFields<double>::uniform(Grid2D{3, 3, 1, 1, 1, 2}, 1, 1);
    p.alpha = 3;
    p.slots[0].kappa[0] = -1;
    p.slots[0].m1[2] = std::nan("");
    try {
        p.validate();
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("alpha"), std::string::npos);
        EXPECT_NE(msg.find("kappa, tau and gamma"), std::string::npos);
        EXPECT_NE(msg.find("non-finite m1"), std::string::npos);
    }
}

TEST(ParamFields, SlotsAreStationaryOrPerStep) {
    auto p = ParamFields<double>::uniform(Grid2D{3, 3, 1, 1, 1, 4}, 1, 1);
    EXPECT_TRUE(p.stationary());
    EXPECT_EQ(p.slot_index(3), 0u);
    const auto e = p.expanded(4);
    EXPECT_EQ(e.slots.size(), 4u);
    EXPECT_NO_THROW(e.validate());
    auto bad = e;
    bad.slots.pop_back();
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ParamFields, WindowSelectsSlots) {
    auto p = ParamFields<double>::uniform(Grid2D{3, 3, 1, 1, 1, 4}, 1, 1).expanded(4);
    for (int t = 0; t < 4; ++t) p.slots[static_cast<std::size_t>(t)].kappa.assign(9, 1.0 + t);
    const auto w = window_params(p, 1, 2);
    EXPECT_EQ(w.grid.n_steps, 2);
    EXPECT_DOUBLE_EQ(w.at(0).kappa[0], 2.0);
    EXPECT_DOUBLE_EQ(w.at(1).kappa[0], 3.0);
    EXPECT_THROW(window_params(p, 3, 2), DimensionError);
}

TEST(ParamFields, FilesRoundTrip) {
    Rng rng(32);
    const Grid2D g{4, 3, 1, 1, 1, 2};
    ParamFields<double> p;
    p.grid = g;
    p.slots = {random_slot(rng, g.nodes()), random_slot(rng, g.nodes())};
    const auto dir = temp_dir("params");
    write_params(p, dir);
    const auto back = read_params(dir, 2);
    ASSERT_EQ(back.slots.size(), 2u);
    for (auto c : kAllComponents) EXPECT_EQ(back.slots[1][c], p.slots[1][c]) << component_name(c);
}

TEST(ParamFields, ComponentNamesRoundTrip) {
    for (auto c : kAllComponents) EXPECT_EQ(parse_component(component_name(c)), c);
    EXPECT_THROW(parse_component("sigma"), ConfigError);
}

TEST(InitFromField, LinearFieldGivesItsGradient) {
    const Grid2D g{6, 5, 0.5, 2.0, 1.0, 1};
    Field f(g);
    for (int i = 0; i < g.ny; ++i)
        for (int j = 0; j < g.nx; ++j) f.values[flatten(i, j, g)] = 2.0 * j * g.dx - 3.0 * i * g.dy;
    const auto p = init_from_field(f);
    const auto& s = p.slots[0];
    for (std::size_t k = 0; k < g.nodes(); ++k) {
        EXPECT_NEAR(s.m1[k], 2.0, 1e-12);
        EXPECT_NEAR(s.m2[k], -3.0, 1e-12);
        EXPECT_NEAR(s.v1[k], 0.0, 1e-10);
        EXPECT_NEAR(s.v2[k], 0.0, 1e-10);
        EXPECT_NEAR(s.kappa[k], 1.0, 1e-12);
        EXPECT_NEAR(s.tau[k], 1.0, 1e-12);
        EXPECT_DOUBLE_EQ(s.gamma[k], kInitGamma);
        EXPECT_DOUBLE_EQ(s.beta[k], 1.0);
    }
}

TEST(InitFromField, FlatFieldHitsTheFloor) {
    const Field f(Grid2D{4, 4, 1, 1, 1, 1});
    const auto p = init_from_field(f);
    for (double v : p.slots[0].kappa) EXPECT_DOUBLE_EQ(v, kInitFloor);
    EXPECT_NO_THROW(p.validate());
}

TEST(InitFromField, RejectsNonFiniteInput) {
    Field f(Grid2D{4, 4, 1, 1, 1, 1});
    f.values[3] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(init_from_field(f), ConfigError);
}
