#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <algorithm>
#include <map>
#include <utility>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "spdegp/cholesky.hpp"
#include "spdegp/errors.hpp"
#include "spdegp/grid.hpp"
#include "spdegp/operator.hpp"
#include "spdegp/params.hpp"
#include "spdegp/precision.hpp"
#include "spdegp/sparse_matrix.hpp"

namespace spdegp {

/// Noise variance used in place of exact (r = 0) observations.
inline constexpr double kExactObsVariance = 1e-10;

using Rng = std::mt19937_64;

inline std::vector<double> standard_normal(Rng& rng, std::size_t n) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> z(n);
    for (auto& v : z) v = dist(rng);
    return z;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

struct Trajectory {
    SpaceTimeField x;
    std::uint64_t seed = 0;
};

/// Solves the nonsymmetric system Minv x = b through the normal equations
/// (Minv^T Minv) x = Minv^T b with iterative refinement.
class StepSolver {
public:
    explicit StepSolver(SparseMatrix<double> minv)
        : minv_(std::move(minv)), minv_t_(transpose(minv_)),
          factor_(CholeskyFactor::factorize(symmetrize(spmul(minv_t_, minv_)))) {}

    std::vector<double> solve(std::span<const double> b, int refinements = 2) const {
        auto x = factor_.solve(spmv(minv_t_, std::span<const double>(b)));
        for (int it = 0; it < refinements; ++it) {
            auto r = spmv(minv_, std::span<const double>(x));
            for (std::size_t k = 0; k < r.size(); ++k) r[k] = b[k] - r[k];
            const auto dx = factor_.solve(spmv(minv_t_, std::span<const double>(r)));
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += dx[k];
        }
        return x;
    }

    const SparseMatrix<double>& minv() const { return minv_; }

private:
    SparseMatrix<double> minv_;
    SparseMatrix<double> minv_t_;
    CholeskyFactor factor_;
};

/// Draws eps ~ N(0, Q_s^{-1}).
class SpatialNoise {
public:
    SpatialNoise(const Grid2D& g, const NoiseSpec& spec) : white_(spec.white), area_(g.dx * g.dy) {
        if (!white_) factor_ = factorize_shared(assemble_spatial_noise_precision(g, spec));
    }

    std::vector<double> draw(Rng& rng, std::size_t m) const {
        auto z = standard_normal(rng, m);
        if (white_) {
            const double s = 1.0 / std::sqrt(area_);
            for (auto& v : z) v *= s;
            return z;
        }
        factor_->solve_upper_inplace(z);
        return factor_->unpermute(z);
    }

private:
    bool white_;
    double area_;
    SharedFactor factor_;
};

struct SimulateOptions {
    bool noise = true; // false gives the deterministic decay x_{t+1} = M x_t
};

/// Integrates Minv_t x_t = x_{t-1} + sqrt(dt) tau_t eps_t from x0.
inline Trajectory simulate_prior(const ParamFields<double>& p, Scheme scheme, const Field& x0, std::uint64_t seed,
                                 SimulateOptions opts = {}) {
    p.validate();
    const auto& g = p.grid;
    if (x0.values.size() != g.nodes()) throw DimensionError("simulate_prior: x0 does not match the grid");
    const auto report = check_stability(p);
    if (!report.ok)
        warn("simulate_prior: CFL number " + std::to_string(report.max_cfl) + " exceeds 1");

    Rng rng(seed);
    const SpatialNoise noise(g, p.noise);
    const double sdt = std::sqrt(g.dt);
    const auto m = g.nodes();
    Trajectory out{SpaceTimeField(g), seed};
    out.x.set_frame(0, x0.values);

    std::map<std::size_t, std::shared_ptr<const StepSolver>> solvers;
    std::vector<double> prev = x0.values;
    for (int t = 1; t < g.n_steps; ++t) {
        const auto slot = p.slot_index(t);
        auto& solver = solvers[slot];
        if (!solver) {
            if (!p.stationary()) solvers.clear();
            solver = std::make_shared<const StepSolver>(step_matrix(p, t, scheme));
        }
        std::vector<double> rhs = prev;
        if (opts.noise) {
            const auto eps = noise.draw(rng, m);
            const auto& tau = p.at(t).tau;
            for (std::size_t k = 0; k < m; ++k) rhs[k] += sdt * tau[k] * eps[k];
        }
        prev = solver->solve(rhs);
        out.x.set_frame(t, prev);
    }
    return out;
}

/// mean + P^T L^{-T} z: a draw with precision P^T L L^T P.
inline std::vector<double> sample_from_precision(const CholeskyFactor& f, std::span<const double> mean,
                                                 std::span<const double> z) {
    if (mean.size() != f.size() || z.size() != f.size()) throw DimensionError("sample_from_precision: size mismatch");
    std::vector<double> y(z.begin(), z.end());
    f.solve_upper_inplace(y);
    auto x = f.unpermute(y);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] += mean[k];
    return x;
}

inline std::vector<double> sample_from_precision(const CholeskyFactor& f, std::span<const double> mean,
                                                 std::uint64_t seed) {
    Rng rng(seed);
    const auto z = standard_normal(rng, f.size());
    return sample_from_precision(f, mean, std::span<const double>(z));
}

/// Observation set with exact observations replaced by variance 1e-10.
inline ObsSet regularize_exact(const ObsSet& obs) {
    std::vector<Observation> items = obs.items();
    for (auto& o : items)
        if (o.variance == 0.0) o.variance = kExactObsVariance;
    return ObsSet(obs.state_size(), std::move(items));
}

/// H^T R^{-1} (y - H xb).
inline std::vector<double> observation_rhs(const ObsSet& obs, std::span<const double> xb) {
    std::vector<double> rhs(xb.size(), 0.0);
    for (const auto& o : obs) rhs[o.index] = (o.value - xb[o.index]) / o.variance;
    return rhs;
}

struct OIResult {
    std::vector<double> x;
    SparseMatrix<double> q_post;
    SharedFactor factor; // posterior factor, reusable for further solves
};

/// Solves (Q + H^T R^{-1} H)(x - xb) = H^T R^{-1}(y - H xb).
inline OIResult optimal_interpolate(const SparseMatrix<double>& q, const ObsSet& obs, std::span<const double> xb) {
    if (xb.size() != q.rows()) throw DimensionError("optimal_interpolate: background size mismatch");
    const auto reg = regularize_exact(obs);
    OIResult out;
    out.q_post = build_posterior_precision(q, reg);
    out.factor = factorize_shared(out.q_post);
    if (reg.empty()) {
        out.x.assign(xb.begin(), xb.end());
        return out;
    }
    const auto d = out.factor->solve(observation_rhs(reg, xb));
    out.x.resize(xb.size());
    for (std::size_t k = 0; k < d.size(); ++k) out.x[k] = xb[k] + d[k];
    return out;
}

/// Increment x - xb for new observation values, reusing a posterior factor.
inline std::vector<double> oi_increment(const CholeskyFactor& posterior, const ObsSet& obs, std::span<const double> xb) {
    return posterior.solve(observation_rhs(regularize_exact(obs), xb));
}

/// Observations of `truth` on the masks, perturbed by N(0, variance) noise.
inline ObsSet observe(const SpaceTimeField& truth, const std::vector<Mask>& masks, double variance, Rng& rng) {
    auto obs = ObsSet::from_masks(truth, masks, variance);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> values;
    values.reserve(obs.size());
    for (const auto& o : obs) values.push_back(o.value + std::sqrt(variance) * dist(rng));
    return obs.with_values(values);
}

struct WindowOptions {
    int window = 0; // time steps per window; 0 = the whole sequence
    P0Mode p0_mode = P0Mode::innovation;
    int n_stab = 50;
};

/// [first, count) pairs covering n_steps with windows of the given length.
inline std::vector<std::pair<int, int>> time_windows(int n_steps, int window) {
    const int w = window <= 0 ? n_steps : std::min(window, n_steps);
    std::vector<std::pair<int, int>> out;
    for (int first = 0; first < n_steps; first += w) out.emplace_back(first, std::min(w, n_steps - first));
    return out;
}

/// Optimal interpolation solved independently on consecutive time windows,
/// each with its own prior (P0 from the window's first parameters).
inline std::vector<double> windowed_oi(const ParamFields<double>& p, Scheme scheme, const ObsSet& obs,
                                       std::span<const double> xb, const WindowOptions& opt = {}) {
    const auto& g = p.grid;
    const auto m = g.nodes();
    std::vector<double> out(g.size());
    for (const auto& [first, count] : time_windows(g.n_steps, opt.window)) {
        const auto wp = window_params(p, first, count);
        const auto prior = build_prior(wp, scheme, opt.p0_mode, opt.n_stab, false);
        const auto wobs = obs.window(g, first, count);
        const auto wxb = xb.subspan(static_cast<std::size_t>(first) * m, static_cast<std::size_t>(count) * m);
        const auto oi = optimal_interpolate(prior.q, wobs, wxb);
        std::copy(oi.x.begin(), oi.x.end(), out.begin() + static_cast<std::ptrdiff_t>(first * m));
    }
    return out;
}

/// sum_obs (x_k - y_k)^2 / r_k + lambda (x - xb)^T Q (x - xb).
inline double variational_cost(std::span<const double> x, const ObsSet& obs, const SparseMatrix<double>& q,
                               std::span<const double> xb, double lambda) {
    if (x.size() != q.rows() || xb.size() != q.rows()) throw DimensionError("variational_cost: size mismatch");
    const auto reg = regularize_exact(obs);
    double misfit = 0.0;
    for (const auto& o : reg) {
        const double r = x[o.index] - o.value;
        misfit += r * r / o.variance;
    }
    std::vector<double> u(x.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = x[k] - xb[k];
    const auto qu = spmv(q, std::span<const double>(u));
    return misfit + lambda * dot(u, qu);
}

/// 2 H^T R^{-1}(Hx - y) + 2 lambda Q (x - xb).
inline std::vector<double> variational_gradient(std::span<const double> x, const ObsSet& obs,
                                                const SparseMatrix<double>& q, std::span<const double> xb,
                                                double lambda) {
    const auto reg = regularize_exact(obs);
    std::vector<double> u(x.size());
    for (std::size_t k = 0; k < u.size(); ++k) u[k] = x[k] - xb[k];
    auto g = spmv(q, std::span<const double>(u));
    for (auto& v : g) v *= 2.0 * lambda;
    for (const auto& o : reg) g[o.index] += 2.0 * (x[o.index] - o.value) / o.variance;
    return g;
}

enum class StepRule { fixed, backtracking, exact };

inline StepRule parse_step_rule(std::string_view s) {
    if (s == "fixed") return StepRule::fixed;
    if (s == "backtracking") return StepRule::backtracking;
    if (s == "exact") return StepRule::exact;
    throw ConfigError("unknown step rule '" + std::string(s) + "'");
}

/// Replacement update: returns the increment d, the iterate becomes x - d.
using UpdateRule = std::function<std::vector<double>(std::span<const double> x, std::span<const double> grad, int iter)>;

struct GradientOptions {
    double lambda = 1.0;
    double eta = 1e-2;
    int n_iters = 100;
    StepRule rule = StepRule::backtracking;
    double grad_tol = 1e-12;   // stop when ||g|| <= grad_tol * max(1, ||g_0||)
    double armijo = 1e-4;
    int max_halvings = 20;
    UpdateRule update;         // optional; bypasses the step rule
};

struct VariationalState {
    std::vector<double> x;
    int iterations = 0;
    std::vector<double> cost_history; // cost_history[0] is the starting cost
    bool converged = false;
};

/// Minimizes the variational cost by gradient descent from x_init (xb if empty).
inline VariationalState gradient_descent_solve(const ObsSet& obs, const SparseMatrix<double>& q,
                                               std::span<const double> xb, const GradientOptions& opt,
                                               std::span<const double> x_init = {}) {
    if (!(opt.eta > 0.0)) throw ConfigError("gradient_descent_solve: eta must be > 0");
    const auto reg = regularize_exact(obs);
    VariationalState st;
    st.x.assign(x_init.empty() ? xb.begin() : x_init.begin(), x_init.empty() ? xb.end() : x_init.end());
    auto cost = [&](std::span<const double> x) { return variational_cost(x, reg, q, xb, opt.lambda); };
    double f = cost(st.x);
    st.cost_history.push_back(f);
    double eta = opt.eta;
    double g0 = -1.0;
    const auto n = st.x.size();
    std::vector<double> trial(n);

    for (int it = 0; it < opt.n_iters; ++it) {
        const auto g = variational_gradient(st.x, reg, q, xb, opt.lambda);
        const double gn = norm2(g);
        if (g0 < 0.0) g0 = gn;
        if (gn <= opt.grad_tol * std::max(1.0, g0)) {
            st.converged = true;
            break;
        }

        if (opt.update) {
            const auto d = opt.update(st.x, g, it);
            for (std::size_t k = 0; k < n; ++k) st.x[k] -= d[k];
            f = cost(st.x);
        } else if (opt.rule == StepRule::exact) {
            // The Hessian is 2 (H^T R^{-1} H + lambda Q).
            auto hg = spmv(q, std::span<const double>(g));
            for (auto& v : hg) v *= 2.0 * opt.lambda;
            for (const auto& o : reg) hg[o.index] += 2.0 * g[o.index] / o.variance;
            const double curv = dot(g, hg);
            if (!(curv > 0.0)) throw NumericalError("exact line search: non-positive curvature");
            const double step = gn * gn / curv;
            for (std::size_t k = 0; k < n; ++k) st.x[k] -= step * g[k];
            f = cost(st.x);
        } else {
            const bool armijo = opt.rule == StepRule::backtracking;
            int halvings = 0;
            while (true) {
                for (std::size_t k = 0; k < n; ++k) trial[k] = st.x[k] - eta * g[k];
                const double ft = cost(trial);
                const double target = armijo ? f - opt.armijo * eta * gn * gn : f;
                if (std::isfinite(ft) && ft <= target) {
                    st.x = trial;
                    f = ft;
                    break;
                }
                if (++halvings > opt.max_halvings)
                    throw NumericalError("gradient descent diverged: cost still increasing after " +
                                         std::to_string(opt.max_halvings) + " step halvings");
                eta *= 0.5;
                if (!armijo) warn("gradient descent: cost increased, halving the step to " + std::to_string(eta));
            }
            if (armijo && halvings == 0) eta *= 2.0;
        }
        st.cost_history.push_back(f);
        st.iterations = it + 1;
    }
    return st;
}

} // namespace spdegp
