#pragma once

// SPDE parameter fields theta = [kappa, m, H(gamma, beta, v), tau].
//
// Fields are stored per "slot": a ParamFields with one slot is stationary and
// serves every time step; otherwise slot t belongs to time step t. The scalar
// type is a template parameter so assembly can run on dual numbers.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "spdegp/dual.hpp"
#include "spdegp/errors.hpp"
#include "spdegp/grid.hpp"
#include "spdegp/raster_io.hpp"

namespace spdegp {

inline constexpr double kPositiveFloor = 1e-6;
inline constexpr double kInitFloor = 1e-3;
inline constexpr double kInitGamma = 1e-2;
inline constexpr double kPecletWarning = 2.0;

/// Spatial driving noise: white, or colored by (kappa_s^2 - Laplacian)^(alpha_s/2).
struct NoiseSpec {
    bool white = true;
    double kappa_s = 1.0;
    int alpha_s = 2;

    friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

enum class Component { kappa, m1, m2, gamma, beta, v1, v2, tau };

inline constexpr std::array<Component, 8> kAllComponents = {Component::kappa, Component::m1,   Component::m2,
                                                             Component::gamma, Component::beta, Component::v1,
                                                             Component::v2,    Component::tau};

inline std::string_view component_name(Component c) {
    switch (c) {
        case Component::kappa: return "kappa";
        case Component::m1: return "m1";
        case Component::m2: return "m2";
        case Component::gamma: return "gamma";
        case Component::beta: return "beta";
        case Component::v1: return "v1";
        case Component::v2: return "v2";
        case Component::tau: return "tau";
    }
    return "?";
}

inline Component parse_component(std::string_view name) {
    for (auto c : kAllComponents)
        if (component_name(c) == name) return c;
    throw ConfigError("unknown parameter component '" + std::string(name) + "'");
}

template <class T>
struct ParamSlot {
    std::vector<T> kappa, m1, m2, gamma, beta, v1, v2, tau;

    std::vector<T>& operator[](Component c) {
        switch (c) {
            case Component::kappa: return kappa;
            case Component::m1: return m1;
            case Component::m2: return m2;
            case Component::gamma: return gamma;
            case Component::beta: return beta;
            case Component::v1: return v1;
            case Component::v2: return v2;
            case Component::tau: return tau;
        }
        throw ConfigError("bad component");
    }
    const std::vector<T>& operator[](Component c) const { return const_cast<ParamSlot&>(*this)[c]; }
};

template <class T = double>
struct ParamFields {
    Grid2D grid;
    int alpha = 2;
    NoiseSpec noise;
    std::vector<ParamSlot<T>> slots;

    /// Stationary fields with uniform values.
    static ParamFields uniform(const Grid2D& g, double kappa, double gamma, double tau = 1.0, int alpha = 2) {
        ParamFields p;
        p.grid = g;
        p.alpha = alpha;
        const auto m = g.nodes();
        ParamSlot<T> s;
        s.kappa.assign(m, T(kappa));
        s.m1.assign(m, T(0.0));
        s.m2.assign(m, T(0.0));
        s.gamma.assign(m, T(gamma));
        s.beta.assign(m, T(0.0));
        s.v1.assign(m, T(0.0));
        s.v2.assign(m, T(0.0));
        s.tau.assign(m, T(tau));
        p.slots.push_back(std::move(s));
        return p;
    }

    bool stationary() const { return slots.size() == 1; }
    std::size_t slot_index(int t) const { return stationary() ? 0 : static_cast<std::size_t>(t); }
    const ParamSlot<T>& at(int t) const { return slots.at(slot_index(t)); }
    ParamSlot<T>& at(int t) { return slots.at(slot_index(t)); }

    /// Copy with every slot replaced by `n` copies of the stationary slot.
    ParamFields expanded(int n) const {
        if (!stationary()) return *this;
        ParamFields out = *this;
        out.slots.assign(static_cast<std::size_t>(n), slots[0]);
        return out;
    }

    void validate() const {
        grid.validate();
        std::string why;
        if (alpha < 2 || alpha % 2 != 0) why += " alpha must be an even integer >= 2;";
        if (!noise.white) {
            if (!(noise.kappa_s > 0.0)) why += " kappa_s must be > 0;";
            if (noise.alpha_s < 2 || noise.alpha_s % 2 != 0) why += " alpha_s must be an even integer >= 2;";
        }
        if (slots.empty()) why += " no parameter slots;";
        if (!stationary() && slots.size() != static_cast<std::size_t>(grid.n_steps))
            why += " need 1 or n_steps parameter slots;";
        const auto m = grid.nodes();
        for (const auto& s : slots) {
            for (auto c : kAllComponents)
                if (s[c].size() != m) {
                    why += " component " + std::string(component_name(c)) + " has the wrong size;";
                    break;
                }
            for (std::size_t k = 0; k < m && k < s.kappa.size() && k < s.tau.size() && k < s.gamma.size(); ++k) {
                if (!(value_of(s.kappa[k]) > 0.0) || !(value_of(s.tau[k]) > 0.0) || !(value_of(s.gamma[k]) > 0.0)) {
                    why += " kappa, tau and gamma must be > 0;";
                    break;
                }
                if (k < s.beta.size() && !(value_of(s.beta[k]) >= 0.0)) {
                    why += " beta must be >= 0;";
                    break;
                }
            }
            for (auto c : kAllComponents) {
                const auto& f = s[c];
                if (std::any_of(f.begin(), f.end(), [](const T& x) { return !std::isfinite(value_of(x)); })) {
                    why += " non-finite " + std::string(component_name(c)) + ";";
                    break;
                }
            }
        }
        if (!why.empty()) throw ConfigError("invalid parameters:" + why);
    }
};

/// Parameters restricted to the time steps [first, first + count).
template <class T>
ParamFields<T> window_params(const ParamFields<T>& p, int first, int count) {
    if (first < 0 || count < 1 || first + count > p.grid.n_steps)
        throw DimensionError("window_params: range outside the time axis");
    ParamFields<T> w = p;
    w.grid = p.grid.with_steps(count);
    if (!p.stationary())
        w.slots.assign(p.slots.begin() + first, p.slots.begin() + first + count);
    return w;
}

template <class T>
ParamFields<double> value_of(const ParamFields<T>& p) {
    ParamFields<double> out;
    out.grid = p.grid;
    out.alpha = p.alpha;
    out.noise = p.noise;
    for (const auto& s : p.slots) {
        ParamSlot<double> d;
        for (auto c : kAllComponents) {
            d[c].resize(s[c].size());
            std::transform(s[c].begin(), s[c].end(), d[c].begin(), [](const T& x) { return value_of(x); });
        }
        out.slots.push_back(std::move(d));
    }
    return out;
}

template <class T>
struct DiffusionTensor {
    std::vector<T> h11, h12, h22;
};

/// H = gamma I + beta v v^T, pointwise.
template <class T>
DiffusionTensor<T> build_diffusion_tensor(const std::vector<T>& gamma, const std::vector<T>& beta,
                                          const std::vector<T>& v1, const std::vector<T>& v2) {
    const auto n = gamma.size();
    if (beta.size() != n || v1.size() != n || v2.size() != n)
        throw DimensionError("build_diffusion_tensor: size mismatch");
    DiffusionTensor<T> h{std::vector<T>(n), std::vector<T>(n), std::vector<T>(n)};
    for (std::size_t k = 0; k < n; ++k) {
        h.h11[k] = gamma[k] + beta[k] * v1[k] * v1[k];
        h.h12[k] = beta[k] * v1[k] * v2[k];
        h.h22[k] = gamma[k] + beta[k] * v2[k] * v2[k];
    }
    return h;
}

template <class T>
DiffusionTensor<T> build_diffusion_tensor(const ParamSlot<T>& s) {
    return build_diffusion_tensor(s.gamma, s.beta, s.v1, s.v2);
}

struct StabilityReport {
    double max_cfl = 0.0;
    double max_peclet = 0.0;
    bool ok = true;
    bool peclet_warning = false;
};

/// Cr = dt (|m1|/dx + |m2|/dy) and cell Peclet max(|m1| dx / H11, |m2| dy / H22).
template <class T>
StabilityReport check_stability(const ParamFields<T>& p) {
    const auto& g = p.grid;
    StabilityReport r;
    for (const auto& s : p.slots) {
        const auto h = build_diffusion_tensor(s);
        for (std::size_t k = 0; k < s.m1.size(); ++k) {
            const double a = std::abs(value_of(s.m1[k]));
            const double b = std::abs(value_of(s.m2[k]));
            r.max_cfl = std::max(r.max_cfl, g.dt * (a / g.dx + b / g.dy));
            r.max_peclet = std::max({r.max_peclet, a * g.dx / value_of(h.h11[k]), b * g.dy / value_of(h.h22[k])});
        }
    }
    r.ok = r.max_cfl <= 1.0;
    r.peclet_warning = r.max_peclet > kPecletWarning;
    return r;
}

template <class T>
T softplus(const T& x) {
    using std::exp;
    using std::log1p;
    if (value_of(x) > 30.0) return x + log1p(exp(-x));
    return log1p(exp(x));
}

/// softplus(raw) + 1e-6: strictly positive, saturating at the floor.
template <class T>
T positive_transform(const T& raw) {
    return softplus(raw) + T(kPositiveFloor);
}

inline double inverse_transform(double constrained) {
    const double y = constrained - kPositiveFloor;
    if (!(y > 0.0)) throw ConfigError("inverse_transform: value must exceed the positivity floor 1e-6");
    if (y > 30.0) return y + std::log(-std::expm1(-y));
    return std::log(std::expm1(y));
}

/// Smooth velocity clip: bound * tanh(raw / bound).
template <class T>
T clip_velocity(const T& raw, double bound) {
    using std::tanh;
    return T(bound) * tanh(raw / T(bound));
}

inline double unclip_velocity(double m, double bound) {
    const double r = m / bound;
    if (!(std::abs(r) < 1.0)) throw ConfigError("velocity outside the clipping bound");
    return bound * std::atanh(r);
}

/// Per-component velocity bound that keeps Cr <= 0.8.
inline double velocity_bound(const Grid2D& g) { return 0.4 * std::min(g.dx, g.dy) / g.dt; }

namespace detail {

// First and second derivatives along one axis of a raster line. `stride`
// walks the line, `n` nodes, step h; one-sided at both ends.
inline void line_derivatives(const std::vector<double>& x, std::size_t start, std::size_t stride, int n, double h,
                             std::vector<double>& d1, std::vector<double>& d2) {
    auto at = [&](int q) { return x[start + static_cast<std::size_t>(q) * stride]; };
    for (int q = 0; q < n; ++q) {
        const auto k = start + static_cast<std::size_t>(q) * stride;
        if (q == 0) {
            d1[k] = (at(1) - at(0)) / h;
            d2[k] = (at(0) - 2.0 * at(1) + at(2)) / (h * h);
        } else if (q == n - 1) {
            d1[k] = (at(n - 1) - at(n - 2)) / h;
            d2[k] = (at(n - 1) - 2.0 * at(n - 2) + at(n - 3)) / (h * h);
        } else {
            d1[k] = (at(q + 1) - at(q - 1)) / (2.0 * h);
            d2[k] = (at(q + 1) - 2.0 * at(q) + at(q - 1)) / (h * h);
        }
    }
}

} // namespace detail

/// Heuristic starting point from the derivatives of a first-guess field:
/// m = grad x, v = (x_xx, x_yy), kappa = tau = |grad x| normalized to unit
/// mean (floored at 1e-3), beta = 1, gamma = 1e-2.
inline ParamFields<double> init_from_field(const Field& x0, int alpha = 2) {
    const auto& g = x0.grid;
    g.validate();
    for (double v : x0.values)
        if (!std::isfinite(v)) throw ConfigError("init_from_field: non-finite input");
    const auto m = g.nodes();
    const auto nx = static_cast<std::size_t>(g.nx);
    std::vector<double> dxv(m), dyv(m), dxx(m), dyy(m);
    for (int i = 0; i < g.ny; ++i)
        detail::line_derivatives(x0.values, static_cast<std::size_t>(i) * nx, 1, g.nx, g.dx, dxv, dxx);
    for (int j = 0; j < g.nx; ++j)
        detail::line_derivatives(x0.values, static_cast<std::size_t>(j), nx, g.ny, g.dy, dyv, dyy);

    std::vector<double> norm(m);
    double mean = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        norm[k] = std::hypot(dxv[k], dyv[k]);
        mean += norm[k];
    }
    mean /= static_cast<double>(m);
    for (auto& v : norm) v = mean > 0.0 ? std::max(v / mean, kInitFloor) : kInitFloor;

    auto p = ParamFields<double>::uniform(g.with_steps(g.n_steps), 1.0, kInitGamma, 1.0, alpha);
    auto& s = p.slots[0];
    s.kappa = norm;
    s.tau = norm;
    s.m1 = dxv;
    s.m2 = dyv;
    s.v1 = dxx;
    s.v2 = dyy;
    s.beta.assign(m, 1.0);
    return p;
}

/// One raster per component, named <dir>/<component>.json; time slots are
/// stored as frames.
inline void write_params(const ParamFields<double>& p, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const auto n = static_cast<int>(p.slots.size());
    for (auto c : kAllComponents) {
        SpaceTimeField f(p.grid.with_steps(n));
        for (int t = 0; t < n; ++t) f.set_frame(t, p.slots[static_cast<std::size_t>(t)][c]);
        write_raster(f, dir / (std::string(component_name(c)) + ".json"));
    }
}

inline ParamFields<double> read_params(const std::filesystem::path& dir, int alpha, NoiseSpec noise = {}) {
    ParamFields<double> p;
    p.alpha = alpha;
    p.noise = noise;
    for (auto c : kAllComponents) {
        const auto f = read_raster(dir / (std::string(component_name(c)) + ".json"));
        if (p.slots.empty()) {
            p.grid = f.grid;
            p.slots.resize(static_cast<std::size_t>(f.grid.n_steps));
        } else if (f.grid.nx != p.grid.nx || f.grid.ny != p.grid.ny ||
                   f.grid.n_steps != static_cast<int>(p.slots.size())) {
            throw IoError("read_params: component " + std::string(component_name(c)) + " has a different shape");
        }
        for (int t = 0; t < f.grid.n_steps; ++t) {
            const auto fr = f.frame(t);
            p.slots[static_cast<std::size_t>(t)][c].assign(fr.begin(), fr.end());
        }
    }
    return p;
}

} // namespace spdegp
