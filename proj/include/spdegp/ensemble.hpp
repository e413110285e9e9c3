#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "spdegp/cholesky.hpp"
#include "spdegp/errors.hpp"
#include "spdegp/gp.hpp"
#include "spdegp/grid.hpp"

namespace spdegp {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Seed of member i: splitmix64(base ^ splitmix64(i)). Independent of the
/// order in which members are generated.
inline std::uint64_t member_seed(std::uint64_t base, std::uint64_t i) { return splitmix64(base ^ splitmix64(i)); }

/// Everything needed to condition members on one observation set.
struct ConditioningContext {
    const CholeskyFactor* prior = nullptr;     // factor of the prior precision Q
    const CholeskyFactor* posterior = nullptr; // factor of Q + H^T R^{-1} H
    const ObsSet* obs = nullptr;
    std::span<const double> xb;
    std::span<const double> x_star;
    bool observation_noise = true;
};

/// x* + x_i - xhat_i: x_i an unconditional draw around xb, xhat_i its optimal
/// interpolation from pseudo-observations at the data locations (with fresh
/// noise of the same variance unless disabled).
inline std::vector<double> condition_member(const ConditioningContext& ctx, std::uint64_t seed) {
    if (!ctx.prior || !ctx.posterior || !ctx.obs) throw ConfigError("condition_member: incomplete context");
    Rng rng(seed);
    const auto z = standard_normal(rng, ctx.prior->size());
    const auto xi = sample_from_precision(*ctx.prior, ctx.xb, std::span<const double>(z));

    const auto reg = regularize_exact(*ctx.obs);
    std::vector<double> pseudo(reg.size());
    std::normal_distribution<double> dist(0.0, 1.0);
    std::size_t q = 0;
    for (const auto& o : reg) {
        pseudo[q++] = xi[o.index] + (ctx.observation_noise ? std::sqrt(o.variance) * dist(rng) : 0.0);
    }
    const auto inc = oi_increment(*ctx.posterior, reg.with_values(pseudo), ctx.xb);
    std::vector<double> out(xi.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = ctx.x_star[k] + xi[k] - (ctx.xb[k] + inc[k]);
    return out;
}

struct Ensemble {
    std::vector<std::vector<double>> members;
    std::vector<std::uint64_t> seeds;
    std::vector<double> reference; // x*
};

inline Ensemble run_ensemble(const ConditioningContext& ctx, std::size_t n, std::uint64_t base_seed) {
    Ensemble e;
    e.reference.assign(ctx.x_star.begin(), ctx.x_star.end());
    for (std::size_t i = 0; i < n; ++i) {
        e.seeds.push_back(member_seed(base_seed, i));
        e.members.push_back(condition_member(ctx, e.seeds.back()));
    }
    return e;
}

struct EnsembleStats {
    std::vector<double> mean;
    std::vector<double> std;
    std::optional<std::vector<double>> covariance; // row-major n x n, on request
};

/// Mean and unbiased (N - 1) standard deviation; full covariance on request.
inline EnsembleStats ensemble_stats(const std::vector<std::vector<double>>& members, bool with_covariance = false) {
    const auto n_mem = members.size();
    if (n_mem < 2) throw ConfigError("ensemble_stats: need at least 2 members");
    const auto n = members[0].size();
    for (const auto& x : members)
        if (x.size() != n) throw DimensionError("ensemble_stats: members differ in size");
    EnsembleStats s;
    s.mean.assign(n, 0.0);
    for (const auto& x : members)
        for (std::size_t k = 0; k < n; ++k) s.mean[k] += x[k];
    for (auto& v : s.mean) v /= static_cast<double>(n_mem);
    s.std.assign(n, 0.0);
    for (const auto& x : members)
        for (std::size_t k = 0; k < n; ++k) s.std[k] += (x[k] - s.mean[k]) * (x[k] - s.mean[k]);
    for (auto& v : s.std) v = std::sqrt(v / static_cast<double>(n_mem - 1));
    if (with_covariance) {
        std::vector<double> c(n * n, 0.0);
        for (const auto& x : members)
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b) c[a * n + b] += (x[a] - s.mean[a]) * (x[b] - s.mean[b]);
        for (auto& v : c) v /= static_cast<double>(n_mem - 1);
        s.covariance = std::move(c);
    }
    return s;
}

inline EnsembleStats ensemble_stats(const Ensemble& e, bool with_covariance = false) {
    return ensemble_stats(e.members, with_covariance);
}

/// CRPS of the empirical distribution of `values` against y:
/// mean|X - y| - 1/2 mean|X - X'|, evaluated in O(N log N) after sorting.
inline double crps(std::span<const double> values, double y) {
    const auto n = values.size();
    if (n == 0) throw ConfigError("crps: empty ensemble");
    std::vector<double> s(values.begin(), values.end());
    std::sort(s.begin(), s.end());
    double abs_dev = 0.0;
    double spread = 0.0;
    const double nd = static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        abs_dev += std::abs(s[i] - y);
        spread += (2.0 * static_cast<double>(i) - nd + 1.0) * s[i];
    }
    return abs_dev / nd - spread / (nd * nd);
}

/// Pointwise CRPS of an ensemble against a reference field.
inline std::vector<double> crps_map(const std::vector<std::vector<double>>& members, std::span<const double> truth) {
    if (members.empty()) throw ConfigError("crps_map: empty ensemble");
    std::vector<double> out(truth.size());
    std::vector<double> col(members.size());
    for (std::size_t k = 0; k < truth.size(); ++k) {
        for (std::size_t i = 0; i < members.size(); ++i) col[i] = members[i][k];
        out[k] = crps(col, truth[k]);
    }
    return out;
}

struct NrmseReport {
    std::vector<double> rmse;          // per frame
    std::vector<double> score;         // 1 - rmse / sigma_truth, NaN when undefined
    std::vector<bool> defined;
    double mu_rmse = 0.0;
    double sigma_rmse = 0.0;           // population std of the rmse series
    double mu_score = std::numeric_limits<double>::quiet_NaN(); // over defined frames
};

namespace detail {

inline void finish_nrmse(NrmseReport& r) {
    const double n = static_cast<double>(r.rmse.size());
    double s = 0.0;
    for (double v : r.rmse) s += v;
    r.mu_rmse = s / n;
    double ss = 0.0;
    for (double v : r.rmse) ss += (v - r.mu_rmse) * (v - r.mu_rmse);
    r.sigma_rmse = std::sqrt(ss / n);
    double sc = 0.0;
    int cnt = 0;
    for (std::size_t t = 0; t < r.score.size(); ++t)
        if (r.defined[t]) {
            sc += r.score[t];
            ++cnt;
        }
    if (cnt > 0) r.mu_score = sc / cnt;
}

} // namespace detail

/// Per-frame RMSE and the score 1 - RMSE / sigma(truth), two-pass.
inline NrmseReport nrmse(const SpaceTimeField& estimate, const SpaceTimeField& truth) {
    if (!(estimate.grid == truth.grid)) throw DimensionError("nrmse: shapes differ");
    NrmseReport r;
    const auto m = truth.grid.nodes();
    for (int t = 0; t < truth.grid.n_steps; ++t) {
        const auto e = estimate.frame(t);
        const auto x = truth.frame(t);
        double se = 0.0;
        double mean = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            se += (e[k] - x[k]) * (e[k] - x[k]);
            mean += x[k];
        }
        mean /= static_cast<double>(m);
        double var = 0.0;
        for (std::size_t k = 0; k < m; ++k) var += (x[k] - mean) * (x[k] - mean);
        const double rmse = std::sqrt(se / static_cast<double>(m));
        const double sigma = std::sqrt(var / static_cast<double>(m));
        r.rmse.push_back(rmse);
        r.defined.push_back(sigma > 0.0);
        r.score.push_back(sigma > 0.0 ? 1.0 - rmse / sigma : std::numeric_limits<double>::quiet_NaN());
    }
    detail::finish_nrmse(r);
    return r;
}

/// Same quantities accumulated in one pass (Welford for the truth variance).
inline NrmseReport nrmse_streaming(const SpaceTimeField& estimate, const SpaceTimeField& truth) {
    if (!(estimate.grid == truth.grid)) throw DimensionError("nrmse: shapes differ");
    NrmseReport r;
    const auto m = truth.grid.nodes();
    for (int t = 0; t < truth.grid.n_steps; ++t) {
        const auto e = estimate.frame(t);
        const auto x = truth.frame(t);
        double se = 0.0;
        double mean = 0.0;
        double m2 = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            se += (e[k] - x[k]) * (e[k] - x[k]);
            const double delta = x[k] - mean;
            mean += delta / static_cast<double>(k + 1);
            m2 += delta * (x[k] - mean);
        }
        const double rmse = std::sqrt(se / static_cast<double>(m));
        const double sigma = std::sqrt(m2 / static_cast<double>(m));
        r.rmse.push_back(rmse);
        r.defined.push_back(sigma > 0.0);
        r.score.push_back(sigma > 0.0 ? 1.0 - rmse / sigma : std::numeric_limits<double>::quiet_NaN());
    }
    detail::finish_nrmse(r);
    return r;
}

/// Root-mean-square difference over all entries.
inline double rmse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("rmse: size mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s / static_cast<double>(a.size()));
}

} // namespace spdegp
