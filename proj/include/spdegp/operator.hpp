#pragma once

// Finite-difference discretization of kappa^2 + m . grad - div(H grad) on the
// raster, with truncated stencils at the boundary (neighbours outside the
// domain are dropped, i.e. homogeneous Dirichlet).
//
// Row k = i*nx + j:
//   diffusion   diag  2 (H11/dx^2 + H22/dy^2)
//               k+-1  -H11/dx^2,  k+-nx  -H22/dy^2
//               k+-(nx+1)  -H12/(2 dx dy),  k+-(nx-1)  +H12/(2 dx dy)
//   advection   centered, first-order upwind or third-order upwind-biased,
//               with a+ = max(m, 0), a- = min(m, 0).
// Every row always carries its full stencil structure (zeros included), so
// the sparsity pattern does not depend on parameter values.

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "spdegp/errors.hpp"
#include "spdegp/params.hpp"
#include "spdegp/sparse_matrix.hpp"

namespace spdegp {

enum class Scheme { centered, ufdm1, ufdm3 };

inline std::string_view scheme_name(Scheme s) {
    switch (s) {
        case Scheme::centered: return "centered";
        case Scheme::ufdm1: return "ufdm1";
        case Scheme::ufdm3: return "ufdm3";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view s) {
    if (s == "centered") return Scheme::centered;
    if (s == "ufdm1") return Scheme::ufdm1;
    if (s == "ufdm3") return Scheme::ufdm3;
    throw ConfigError("unknown scheme '" + std::string(s) + "' (expected centered, ufdm1 or ufdm3)");
}

namespace detail {

// Advection weights along one axis at offsets -2..+2 (index 0..4).
template <class T>
std::array<T, 5> advection_weights(const T& a, double h, Scheme scheme) {
    std::array<T, 5> w{T(0.0), T(0.0), T(0.0), T(0.0), T(0.0)};
    switch (scheme) {
        case Scheme::centered:
            w[1] = -a / T(2.0 * h);
            w[3] = a / T(2.0 * h);
            break;
        case Scheme::ufdm1: {
            const T ap = positive_part(a);
            const T am = negative_part(a);
            w[1] = -ap / T(h);
            w[2] = (ap - am) / T(h);
            w[3] = am / T(h);
            break;
        }
        case Scheme::ufdm3: {
            const T ap = positive_part(a);
            const T am = negative_part(a);
            const T s = T(6.0 * h);
            w[0] = ap / s;
            w[1] = -(T(6.0) * ap + T(2.0) * am) / s;
            w[2] = T(3.0) * (ap - am) / s;
            w[3] = (T(2.0) * ap + T(6.0) * am) / s;
            w[4] = -am / s;
            break;
        }
    }
    return w;
}

} // namespace detail

/// A_t for a parameter slot.
template <class T>
SparseMatrix<T> assemble_operator(const Grid2D& g, const ParamSlot<T>& s, Scheme scheme) {
    if (scheme == Scheme::ufdm3 && (g.nx < 5 || g.ny < 5))
        throw ConfigError("ufdm3 needs nx >= 5 and ny >= 5");
    const auto h = build_diffusion_tensor(s);
    const int nx = g.nx;
    const int ny = g.ny;
    const double dx2 = g.dx * g.dx;
    const double dy2 = g.dy * g.dy;
    const double dxy2 = 2.0 * g.dx * g.dy;
    const int reach = scheme == Scheme::ufdm3 ? 2 : 1;

    std::vector<Triplet<T>> trips;
    trips.reserve(g.nodes() * (scheme == Scheme::ufdm3 ? 13 : 9));
    auto put = [&](int i, int j, int ii, int jj, const T& v) {
        if (ii < 0 || ii >= ny || jj < 0 || jj >= nx) return;
        trips.push_back({static_cast<std::size_t>(i * nx + j), static_cast<std::size_t>(ii * nx + jj), v});
    };

    for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < nx; ++j) {
            const auto k = static_cast<std::size_t>(i * nx + j);
            const T& h11 = h.h11[k];
            const T& h12 = h.h12[k];
            const T& h22 = h.h22[k];
            const auto wx = detail::advection_weights(s.m1[k], g.dx, scheme);
            const auto wy = detail::advection_weights(s.m2[k], g.dy, scheme);

            put(i, j, i, j, s.kappa[k] * s.kappa[k] + T(2.0) * (h11 / T(dx2) + h22 / T(dy2)) + wx[2] + wy[2]);
            for (int o = -reach; o <= reach; ++o) {
                if (o == 0) continue;
                const bool near = o == -1 || o == 1;
                const auto q = static_cast<std::size_t>(o + 2);
                put(i, j, i, j + o, (near ? -h11 / T(dx2) : T(0.0)) + wx[q]);
                put(i, j, i + o, j, (near ? -h22 / T(dy2) : T(0.0)) + wy[q]);
            }
            put(i, j, i + 1, j + 1, -h12 / T(dxy2));
            put(i, j, i - 1, j - 1, -h12 / T(dxy2));
            put(i, j, i + 1, j - 1, h12 / T(dxy2));
            put(i, j, i - 1, j + 1, h12 / T(dxy2));
        }
    }
    return SparseMatrix<T>::from_triplets(g.nodes(), g.nodes(), std::move(trips));
}

template <class T>
SparseMatrix<T> assemble_operator(const ParamFields<T>& p, int t, Scheme scheme) {
    return assemble_operator(p.grid, p.at(t), scheme);
}

/// B = A^(alpha/2) for even alpha >= 2.
template <class T>
SparseMatrix<T> operator_power(const SparseMatrix<T>& a, int alpha) {
    if (alpha % 2 != 0)
        throw ConfigError("alpha = " + std::to_string(alpha) +
                          " is odd: fractional operator powers are not supported, alpha must be even");
    if (alpha < 2) throw ConfigError("alpha must be an even integer >= 2");
    auto b = a;
    for (int q = 1; q < alpha / 2; ++q) b = spmul(b, a);
    return b;
}

/// Isotropic (kappa_s^2 - Laplacian) with the 5-point stencil.
inline SparseMatrix<double> isotropic_operator(const Grid2D& g, double kappa_s) {
    const double cx = 1.0 / (g.dx * g.dx);
    const double cy = 1.0 / (g.dy * g.dy);
    std::vector<Triplet<double>> trips;
    for (int i = 0; i < g.ny; ++i)
        for (int j = 0; j < g.nx; ++j) {
            const auto k = static_cast<std::size_t>(i * g.nx + j);
            trips.push_back({k, k, kappa_s * kappa_s + 2.0 * (cx + cy)});
            if (j > 0) trips.push_back({k, k - 1, -cx});
            if (j + 1 < g.nx) trips.push_back({k, k + 1, -cx});
            if (i > 0) trips.push_back({k, k - static_cast<std::size_t>(g.nx), -cy});
            if (i + 1 < g.ny) trips.push_back({k, k + static_cast<std::size_t>(g.nx), -cy});
        }
    return SparseMatrix<double>::from_triplets(g.nodes(), g.nodes(), std::move(trips));
}

/// Q_s = dx dy B_s^T B_s, or dx dy I for white noise.
inline SparseMatrix<double> assemble_spatial_noise_precision(const Grid2D& g, const NoiseSpec& noise) {
    const double area = g.dx * g.dy;
    if (noise.white) return SparseMatrix<double>::identity(g.nodes(), area);
    if (!(noise.kappa_s > 0.0)) throw ConfigError("kappa_s must be > 0");
    const auto bs = operator_power(isotropic_operator(g, noise.kappa_s), noise.alpha_s);
    return scale(spmul(transpose(bs), bs), area);
}

/// I + dt B.
template <class T>
SparseMatrix<T> step_matrix_from(const SparseMatrix<T>& b, double dt) {
    return spadd(SparseMatrix<T>::identity(b.rows()), b, T(1.0), T(dt));
}

/// Minv_t = I + dt A_t^(alpha/2); the inverse M_t is never formed.
template <class T>
SparseMatrix<T> step_matrix(const ParamFields<T>& p, int t, Scheme scheme) {
    return step_matrix_from(operator_power(assemble_operator(p, t, scheme), p.alpha), p.grid.dt);
}

} // namespace spdegp
