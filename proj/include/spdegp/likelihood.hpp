#pragma once

// Gaussian negative log-likelihood under the joint precision, its gradient
// with respect to a coarse parametrization, and mixed-loss fitting.
//
// Gradients combine two pieces: the derivative of every stored entry of Q
// with respect to one coarse parameter (forward mode, by assembling Q on
// dual numbers), and the adjoint G of the loss with respect to those
// entries (selected inverse for the log-determinant, solve_backward for the
// reconstruction term). The directional derivative is sum_ij G_ij dQ_ij.

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "spdegp/backward.hpp"
#include "spdegp/cholesky.hpp"
#include "spdegp/dual.hpp"
#include "spdegp/errors.hpp"
#include "spdegp/gp.hpp"
#include "spdegp/operator.hpp"
#include "spdegp/params.hpp"
#include "spdegp/precision.hpp"

namespace spdegp {

/// -logdet(Q) + u^T Q u with u = x - xb.
inline double nll(const SparseMatrix<double>& q, const CholeskyFactor& f, std::span<const double> u) {
    if (u.size() != q.rows()) throw DimensionError("nll: size mismatch");
    const auto qu = spmv(q, u);
    return -f.logdet() + dot(u, qu);
}

inline double nll(const SparseMatrix<double>& q, std::span<const double> u) {
    return nll(q, CholeskyFactor::factorize(q), u);
}

enum class Transform { positive, velocity, identity };

inline Transform transform_of(Component c) {
    switch (c) {
        case Component::kappa:
        case Component::gamma:
        case Component::beta:
        case Component::tau: return Transform::positive;
        case Component::m1:
        case Component::m2: return Transform::velocity;
        default: return Transform::identity;
    }
}

/// P x P lattice of unconstrained values per active component, constant in
/// time, bilinearly upsampled to the grid and then mapped to the constrained
/// range. Inactive components are taken from `base`.
struct CoarseParamGrid {
    int p = 1;
    std::vector<Component> active;
    std::vector<double> raw; // component-major, each block P*P row-major
    ParamFields<double> base;

    std::size_t size() const { return raw.size(); }
    std::size_t block() const { return static_cast<std::size_t>(p) * static_cast<std::size_t>(p); }

    /// Raw values reproducing the per-component mean of the base fields.
    static CoarseParamGrid from_base(const ParamFields<double>& base, std::vector<Component> active, int p = 1) {
        if (p < 1) throw ConfigError("coarse grid size P must be >= 1");
        base.validate();
        CoarseParamGrid g;
        g.p = p;
        g.active = std::move(active);
        g.base = base;
        const double vb = velocity_bound(base.grid);
        for (auto c : g.active) {
            const auto& f = base.slots[0][c];
            double mean = 0.0;
            for (double v : f) mean += v;
            mean /= static_cast<double>(f.size());
            double r = mean;
            switch (transform_of(c)) {
                case Transform::positive: r = inverse_transform(std::max(mean, 2.0 * kPositiveFloor)); break;
                case Transform::velocity: r = unclip_velocity(std::clamp(mean, -0.99 * vb, 0.99 * vb), vb); break;
                case Transform::identity: break;
            }
            g.raw.insert(g.raw.end(), g.block(), r);
        }
        return g;
    }

    template <class T>
    ParamFields<T> to_params(std::span<const T> values) const {
        if (values.size() != raw.size()) throw DimensionError("CoarseParamGrid: raw size mismatch");
        const auto& g = base.grid;
        const double vb = velocity_bound(g);
        ParamFields<T> out;
        out.grid = g;
        out.alpha = base.alpha;
        out.noise = base.noise;
        for (const auto& s : base.slots) {
            ParamSlot<T> d;
            for (auto c : kAllComponents) d[c] = std::vector<T>(s[c].begin(), s[c].end());
            out.slots.push_back(std::move(d));
        }
        const auto m = g.nodes();
        std::vector<T> field(m);
        for (std::size_t a = 0; a < active.size(); ++a) {
            const auto coarse = values.subspan(a * block(), block());
            for (int i = 0; i < g.ny; ++i)
                for (int j = 0; j < g.nx; ++j) {
                    T v = coarse[0];
                    if (p > 1) {
                        const double u = static_cast<double>(j) * (p - 1) / (g.nx - 1);
                        const double w = static_cast<double>(i) * (p - 1) / (g.ny - 1);
                        const int j0 = std::min(static_cast<int>(u), p - 2);
                        const int i0 = std::min(static_cast<int>(w), p - 2);
                        const double fu = u - j0;
                        const double fw = w - i0;
                        auto at = [&](int ii, int jj) { return coarse[static_cast<std::size_t>(ii * p + jj)]; };
                        v = T((1 - fu) * (1 - fw)) * at(i0, j0) + T(fu * (1 - fw)) * at(i0, j0 + 1) +
                            T((1 - fu) * fw) * at(i0 + 1, j0) + T(fu * fw) * at(i0 + 1, j0 + 1);
                    }
                    switch (transform_of(active[a])) {
                        case Transform::positive: v = positive_transform(v); break;
                        case Transform::velocity: v = clip_velocity(v, vb); break;
                        case Transform::identity: break;
                    }
                    field[static_cast<std::size_t>(i * g.nx + j)] = v;
                }
            for (auto& s : out.slots) s[active[a]] = field;
        }
        return out;
    }

    ParamFields<double> to_params() const { return to_params<double>(std::span<const double>(raw)); }
};

/// Prior precision used by the fitter: innovation-mode P0, same parameters.
template <class T>
JointPrecision<T> fit_precision(const ParamFields<T>& p, Scheme scheme, bool validate) {
    return build_joint_precision(p, scheme, p0_innovation(p, scheme), validate);
}

/// Stored-entry derivatives of Q with respect to coarse parameter `index`.
inline std::vector<double> precision_tangent(const CoarseParamGrid& theta, std::span<const double> raw, Scheme scheme,
                                             std::size_t index, const SparseMatrix<double>& q_ref) {
    std::vector<Dual> r(raw.begin(), raw.end());
    r[index].d = 1.0;
    const auto params = theta.to_params<Dual>(std::span<const Dual>(r));
    const auto jp = fit_precision(params, scheme, false);
    if (jp.q.row_ptr() != q_ref.row_ptr() || jp.q.col_idx() != q_ref.col_idx())
        throw NumericalError("precision_tangent: pattern differs from the value assembly");
    std::vector<double> d(jp.q.nnz());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = jp.q.values()[k].d;
    return d;
}

/// Supervised fitting data: replicate windows with their observations.
struct FitProblem {
    std::vector<SpaceTimeField> truths;
    std::vector<ObsSet> obs;       // one per window; may be empty sets
    Scheme scheme = Scheme::centered;
    CoarseParamGrid theta;
    double lambda_mix = 1e-2;      // +inf: likelihood only; 0: reconstruction only
};

struct LossValue {
    double loss = 0.0;
    double l1 = std::numeric_limits<double>::quiet_NaN();
    double l2 = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> grad;
};

/// L1 = mean squared error of the OI reconstruction over all windows;
/// L2 = nll summed over windows divided by the number of state entries.
/// The mixed loss is L1 + lambda L2 (L2 alone when lambda is infinite).
inline LossValue evaluate_loss(const FitProblem& prob, std::span<const double> raw, bool with_gradient) {
    const bool use_l1 = !std::isinf(prob.lambda_mix);
    const bool use_l2 = prob.lambda_mix != 0.0;
    const double w2 = std::isinf(prob.lambda_mix) ? 1.0 : prob.lambda_mix;
    if (prob.truths.empty()) throw ConfigError("fit: no training windows");
    if (use_l1 && prob.obs.size() != prob.truths.size()) throw ConfigError("fit: one observation set per window needed");

    const auto params = prob.theta.to_params<double>(raw);
    const auto jp = fit_precision(params, prob.scheme, true);
    const auto& q = jp.q;
    const auto n = q.rows();
    double total = 0.0;
    for (const auto& t : prob.truths) {
        if (t.values.size() != n) throw DimensionError("fit: window does not match the parameter grid");
        total += static_cast<double>(n);
    }

    LossValue out;
    out.loss = 0.0;
    std::vector<double> gq(with_gradient ? q.nnz() : 0, 0.0); // adjoint on the pattern of Q
    const std::vector<double> xb(n, 0.0);

    if (use_l2) {
        double l2 = 0.0;
        for (const auto& t : prob.truths) l2 += nll(q, *jp.factor, t.values);
        out.l2 = l2 / total;
        out.loss += w2 * out.l2;
        if (with_gradient) {
            const auto inv = inverse_on_pattern(*jp.factor, q);
            const double nw = static_cast<double>(prob.truths.size());
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t p = q.row_ptr()[r]; p < q.row_ptr()[r + 1]; ++p) {
                    double s = -nw * inv.values()[p];
                    for (const auto& t : prob.truths) s += t.values[r] * t.values[q.col_idx()[p]];
                    gq[p] += w2 * s / total;
                }
        }
    }
    if (use_l1) {
        double l1 = 0.0;
        for (std::size_t w = 0; w < prob.truths.size(); ++w) {
            const auto oi = optimal_interpolate(q, prob.obs[w], xb);
            const auto& truth = prob.truths[w].values;
            std::vector<double> gbar(n);
            for (std::size_t k = 0; k < n; ++k) {
                const double e = oi.x[k] - truth[k];
                l1 += e * e;
                gbar[k] = 2.0 * e / total;
            }
            if (with_gradient && !prob.obs[w].empty()) {
                // x* - xb = Q_post^{-1} c with c independent of theta, and dQ_post = dQ.
                const auto back = solve_backward(oi.q_post, *oi.factor, oi.x, gbar);
                for (std::size_t p = 0; p < gq.size(); ++p) gq[p] += back.grad_a.values()[p];
            }
        }
        out.l1 = l1 / total;
        out.loss += out.l1;
    }

    if (with_gradient) {
        out.grad.assign(raw.size(), 0.0);
        bool any = false;
        for (double v : gq) any = any || v != 0.0;
        if (any)
            for (std::size_t i = 0; i < raw.size(); ++i) {
                const auto dq = precision_tangent(prob.theta, raw, prob.scheme, i, q);
                double s = 0.0;
                for (std::size_t p = 0; p < dq.size(); ++p) s += gq[p] * dq[p];
                out.grad[i] = s;
            }
    }
    return out;
}

/// Central finite differences of the loss (oracle for the analytic gradient).
inline std::vector<double> fd_gradient(const FitProblem& prob, std::span<const double> raw, double h = 1e-5) {
    std::vector<double> g(raw.size());
    std::vector<double> r(raw.begin(), raw.end());
    for (std::size_t i = 0; i < r.size(); ++i) {
        const double keep = r[i];
        r[i] = keep + h;
        const double fp = evaluate_loss(prob, r, false).loss;
        r[i] = keep - h;
        const double fm = evaluate_loss(prob, r, false).loss;
        r[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

struct FitOptions {
    int iters = 50;
    double lr = 1e-1;
    double grad_tol = 1e-8;
    double loss_tol = 1e-10; // relative loss change for termination
    int max_halvings = 30;
    double armijo = 1e-4;
};

struct FitReport {
    std::vector<double> losses;
    std::vector<double> l1;
    std::vector<double> l2;
    std::vector<double> grad_norms;
    std::vector<double> raw;
    ParamFields<double> params;
    int iterations = 0;
    bool converged = false;
    std::string stop_reason;
    double wall_seconds = 0.0;
};

/// Backtracking gradient descent on the raw coarse parameters. Trial steps
/// that break definiteness or raise the loss are halved.
inline FitReport fit_parameters(const FitProblem& prob, const FitOptions& opt) {
    if (prob.lambda_mix < 0.0 || std::isnan(prob.lambda_mix)) throw ConfigError("lambda_mix must be >= 0");
    if (opt.iters < 0) throw ConfigError("iters must be >= 0");
    const auto t0 = std::chrono::steady_clock::now();
    FitReport rep;
    rep.raw = prob.theta.raw;
    auto cur = evaluate_loss(prob, rep.raw, opt.iters > 0);
    rep.losses.push_back(cur.loss);
    rep.l1.push_back(cur.l1);
    rep.l2.push_back(cur.l2);
    double lr = opt.lr;
    rep.stop_reason = "iteration limit";

    for (int it = 0; it < opt.iters; ++it) {
        const double gn = norm2(cur.grad);
        rep.grad_norms.push_back(gn);
        if (gn <= opt.grad_tol) {
            rep.converged = true;
            rep.stop_reason = "gradient below tolerance";
            break;
        }
        bool accepted = false;
        LossValue next;
        std::vector<double> trial(rep.raw.size());
        for (int h = 0; h <= opt.max_halvings; ++h) {
            for (std::size_t i = 0; i < trial.size(); ++i) trial[i] = rep.raw[i] - lr * cur.grad[i];
            try {
                next = evaluate_loss(prob, trial, false);
                if (std::isfinite(next.loss) && next.loss <= cur.loss - opt.armijo * lr * gn * gn) {
                    accepted = true;
                    if (h == 0) lr *= 2.0;
                    break;
                }
            } catch (const NumericalError&) {
                // step left the positive-definite region
            } catch (const ConfigError&) {
            }
            lr *= 0.5;
        }
        if (!accepted) {
            rep.converged = true;
            rep.stop_reason = "no descent step found";
            break;
        }
        const double rel = std::abs(cur.loss - next.loss) / std::max(1.0, std::abs(cur.loss));
        rep.raw = trial;
        cur = evaluate_loss(prob, rep.raw, true);
        rep.losses.push_back(cur.loss);
        rep.l1.push_back(cur.l1);
        rep.l2.push_back(cur.l2);
        rep.iterations = it + 1;
        if (rel <= opt.loss_tol) {
            rep.converged = true;
            rep.stop_reason = "loss change below tolerance";
            break;
        }
    }
    rep.params = prob.theta.to_params<double>(std::span<const double>(rep.raw));
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

} // namespace spdegp
