#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace spdegp;
using namespace spdegp::testing;

namespace {

struct Poly2 {
    // c0 + cx x + cy y + cxx x^2 + cxy x y + cyy y^2 + cxxx x^3
    double c0, cx, cy, cxx, cxy, cyy, cxxx;
    double operator()(double x, double y) const {
        return c0 + cx * x + cy * y + cxx * x * x + cxy * x * y + cyy * y * y + cxxx * x * x * x;
    }
};

// kappa^2 f + m . grad f - div(H grad f) for constant coefficients.
double continuous(const Poly2& f, double x, double y, double kappa, double m1, double m2, double h11, double h12,
                  double h22) {
    const double fx = f.cx + 2 * f.cxx * x + f.cxy * y + 3 * f.cxxx * x * x;
    const double fy = f.cy + f.cxy * x + 2 * f.cyy * y;
    const double fxx = 2 * f.cxx + 6 * f.cxxx * x;
    const double fxy = f.cxy;
    const double fyy = 2 * f.cyy;
    return kappa * kappa * f(x, y) + m1 * fx + m2 * fy - (h11 * fxx + 2 * h12 * fxy + h22 * fyy);
}

void check_exactness(Scheme scheme, const Poly2& f, double tol) {
    const Grid2D g{9, 8, 0.7, 1.3, 1.0, 1};
    const double kappa = 0.8, gamma = 0.6, beta = 1.5, v1 = 0.6, v2 = -0.8;
    for (double m1 : {-0.9, 0.0, 0.7})
        for (double m2 : {-0.4, 0.5}) {
            auto p = ParamFields<double>::uniform(g, kappa, gamma);
            auto& s = p.slots[0];
            s.beta.assign(g.nodes(), beta);
            s.v1.assign(g.nodes(), v1);
            s.v2.assign(g.nodes(), v2);
            s.m1.assign(g.nodes(), m1);
            s.m2.assign(g.nodes(), m2);
            const auto a = assemble_operator(p, 0, scheme);
            std::vector<double> x(g.nodes());
            for (int i = 0; i < g.ny; ++i)
                for (int j = 0; j < g.nx; ++j) x[flatten(i, j, g)] = f(j * g.dx, i * g.dy);
            const auto ax = spmv(a, x);
            const int reach = scheme == Scheme::ufdm3 ? 2 : 1;
            for (int i = reach; i < g.ny - reach; ++i)
                for (int j = reach; j < g.nx - reach; ++j) {
                    const double ref = continuous(f, j * g.dx, i * g.dy, kappa, m1, m2, gamma + beta * v1 * v1,
                                                  beta * v1 * v2, gamma + beta * v2 * v2);
                    EXPECT_NEAR(ax[flatten(i, j, g)], ref, tol) << scheme_name(scheme) << " " << i << "," << j;
                }
        }
}

} // namespace

TEST(Operator, Ufdm1IsExactOnLinearFields) { check_exactness(Scheme::ufdm1, {0.3, 1.2, -0.7, 0, 0, 0, 0}, 1e-12); }

TEST(Operator, CenteredIsExactOnQuadratics) {
    check_exactness(Scheme::centered, {0.3, 1.2, -0.7, 0.4, -0.25, 0.6, 0}, 1e-11);
}

TEST(Operator, Ufdm3IsExactOnCubicsInX) {
    check_exactness(Scheme::ufdm3, {0.3, 1.2, -0.7, 0.4, -0.25, 0.6, 0.05}, 1e-10);
}

TEST(Operator, FrozenThreeByThreeRows) {
    const Grid2D g{3, 3, 1, 1, 1, 1};
    auto p = ParamFields<double>::uniform(g, 1.0, 1.0);
    auto a = assemble_operator(p, 0, Scheme::centered);
    EXPECT_DOUBLE_EQ(a.coeff(4, 4), 5.0);
    EXPECT_DOUBLE_EQ(a.coeff(4, 3), -1.0);
    EXPECT_DOUBLE_EQ(a.coeff(4, 1), -1.0);
    EXPECT_DOUBLE_EQ(a.coeff(4, 0), 0.0);

    p.slots[0].m1.assign(9, 0.5);
    a = assemble_operator(p, 0, Scheme::ufdm1);
    EXPECT_DOUBLE_EQ(a.coeff(4, 4), 5.5);
    EXPECT_DOUBLE_EQ(a.coeff(4, 3), -1.5);
    EXPECT_DOUBLE_EQ(a.coeff(4, 5), -1.0);
    p.slots[0].m1.assign(9, -0.5);
    a = assemble_operator(p, 0, Scheme::ufdm1);
    EXPECT_DOUBLE_EQ(a.coeff(4, 4), 5.5);
    EXPECT_DOUBLE_EQ(a.coeff(4, 3), -1.0);
    EXPECT_DOUBLE_EQ(a.coeff(4, 5), -1.5);
    a = assemble_operator(p, 0, Scheme::centered);
    EXPECT_DOUBLE_EQ(a.coeff(4, 3), -0.75);
    EXPECT_DOUBLE_EQ(a.coeff(4, 5), -1.25);
}

TEST(Operator, AnisotropicCrossTerms) {
    const Grid2D g{3, 3, 1, 1, 1, 1};
    auto p = ParamFields<double>::uniform(g, 1.0, 1.0);
    p.slots[0].beta.assign(9, 2.0);
    p.slots[0].v1.assign(9, 1.0);
    p.slots[0].v2.assign(9, 1.0);
    const auto a = assemble_operator(p, 0, Scheme::centered);
    // H = [[3, 2], [2, 3]]: corners carry -/+ H12 / (2 dx dy).
    EXPECT_DOUBLE_EQ(a.coeff(4, 8), -1.0);
    EXPECT_DOUBLE_EQ(a.coeff(4, 0), -1.0);
    EXPECT_DOUBLE_EQ(a.coeff(4, 6), 1.0);
    EXPECT_DOUBLE_EQ(a.coeff(4, 2), 1.0);
    EXPECT_DOUBLE_EQ(a.coeff(4, 4), 1.0 + 2.0 * (3.0 + 3.0));
}

TEST(Operator, SymmetricWithoutAdvectionAndUniformTensor) {
    Rng rng(41);
    for (auto scheme : {Scheme::centered, Scheme::ufdm1, Scheme::ufdm3}) {
        const Grid2D g{6, 5, 0.8, 1.1, 1, 1};
        auto p = ParamFields<double>::uniform(g, 0.5, 0.9);
        auto& s = p.slots[0];
        for (auto& k : s.kappa) k = uniform(rng, 0.2, 2.0);
        s.beta.assign(g.nodes(), 1.3);
        s.v1.assign(g.nodes(), 0.4);
        s.v2.assign(g.nodes(), -0.9);
        EXPECT_LT(relative_asymmetry(assemble_operator(p, 0, scheme)), 1e-15);
    }
}

TEST(Operator, FullStencilPatternIsAlwaysPresent) {
    const Grid2D g{5, 5, 1, 1, 1, 1};
    const auto p = ParamFields<double>::uniform(g, 1.0, 1.0);
    const auto centered = assemble_operator(p, 0, Scheme::centered);
    const auto ufdm3 = assemble_operator(p, 0, Scheme::ufdm3);
    // Interior node: 9 entries (13 with the second ring of the third-order scheme).
    EXPECT_EQ(centered.row_ptr()[13] - centered.row_ptr()[12], 9u);
    EXPECT_EQ(ufdm3.row_ptr()[13] - ufdm3.row_ptr()[12], 13u);
}

TEST(Operator, Ufdm3NeedsFiveNodes) {
    const auto p = ParamFields<double>::uniform(Grid2D{4, 6, 1, 1, 1, 1}, 1, 1);
    EXPECT_THROW(assemble_operator(p, 0, Scheme::ufdm3), ConfigError);
}

TEST(Operator, PowerIsRepeatedProduct) {
    Rng rng(42);
    const Grid2D g{4, 4, 1, 1, 1, 1};
    ParamFields<double> p;
    p.grid = g;
    p.slots = {random_slot(rng, g.nodes())};
    const auto a = assemble_operator(p, 0, Scheme::centered);
    const auto ad = dense(a);
    EXPECT_LT(max_abs(dense(operator_power(a, 4)) - ad * ad), 1e-12);
    EXPECT_LT(max_abs(dense(operator_power(a, 6)) - ad * ad * ad), 1e-10);
    try {
        operator_power(a, 3);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("fractional"), std::string::npos);
    }
    EXPECT_THROW(operator_power(a, 0), ConfigError);
}

TEST(Operator, StepMatrixIsIdentityPlusDtB) {
    Rng rng(43);
    const Grid2D g{4, 5, 1, 1, 0.3, 1};
    ParamFields<double> p;
    p.grid = g;
    p.alpha = 4;
    p.slots = {random_slot(rng, g.nodes())};
    const auto b = dense(operator_power(assemble_operator(p, 0, Scheme::ufdm1), 4));
    const auto minv = dense(step_matrix(p, 0, Scheme::ufdm1));
    EXPECT_LT(max_abs(minv - (Eigen::MatrixXd::Identity(20, 20) + 0.3 * b)), 1e-12);
}

TEST(Operator, SchemeNamesRoundTrip) {
    for (auto s : {Scheme::centered, Scheme::ufdm1, Scheme::ufdm3}) EXPECT_EQ(parse_scheme(scheme_name(s)), s);
    EXPECT_THROW(parse_scheme("upwind"), ConfigError);
}

TEST(SpatialNoise, WhiteAndColoredPrecisions) {
    const Grid2D g{4, 4, 0.5, 2.0, 1, 1};
    const auto white = assemble_spatial_noise_precision(g, NoiseSpec{});
    EXPECT_DOUBLE_EQ(white.coeff(3, 3), 1.0);
    const NoiseSpec colored{false, 1.5, 2};
    const auto q = assemble_spatial_noise_precision(g, colored);
    const auto b = dense(isotropic_operator(g, 1.5));
    EXPECT_LT(max_abs(dense(q) - b.transpose() * b), 1e-12);
    EXPECT_LT(relative_asymmetry(q), 1e-15);
}
