#pragma once

// Joint space-time precision of the implicit-Euler SPDE dynamics
//
//   x_0 ~ N(0, P0),   Minv_k x_k = x_{k-1} + sqrt(dt) tau_k eps_k,
//   eps_k ~ N(0, Q_s^{-1}),  Minv_k = I + dt B_k,  k = 1..L.
//
// With Qt_k = tau_k^{-1} Q_s tau_k^{-1} the precision is block tridiagonal:
//   (0,0)     P0inv + Qt_1 / dt
//   (k,k)     Minv_k^T Qt_k Minv_k / dt + Qt_{k+1} / dt
//   (L,L)     Minv_L^T Qt_L Minv_L / dt
//   (k-1,k)   -Qt_k Minv_k / dt        (k,k-1) its transpose.

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spdegp/cholesky.hpp"
#include "spdegp/errors.hpp"
#include "spdegp/grid.hpp"
#include "spdegp/operator.hpp"
#include "spdegp/params.hpp"
#include "spdegp/sparse_matrix.hpp"

namespace spdegp {

enum class P0Mode { recursion, innovation };

inline constexpr std::size_t kDenseCap = 4096;

inline P0Mode parse_p0_mode(std::string_view s) {
    if (s == "recursion") return P0Mode::recursion;
    if (s == "innovation") return P0Mode::innovation;
    throw ConfigError("unknown p0 mode '" + std::string(s) + "' (expected recursion or innovation)");
}

template <class T>
SparseMatrix<T> lift(const SparseMatrix<double>& a) {
    return a.map_values([](double x) { return T(x); });
}

template <class T>
SparseMatrix<T> symmetrize(const SparseMatrix<T>& a) {
    return spadd(a, transpose(a), T(0.5), T(0.5));
}

/// tau^{-1} Q_s tau^{-1}.
template <class T>
SparseMatrix<T> weighted_noise_precision(const SparseMatrix<double>& qs, const std::vector<T>& tau) {
    std::vector<T> inv(tau.size());
    for (std::size_t k = 0; k < tau.size(); ++k) inv[k] = T(1.0) / tau[k];
    return scale_rows_cols(lift<T>(qs), std::span<const T>(inv), std::span<const T>(inv));
}

/// One-innovation P0 precision (1/dt) Minv_0^T Qt_0 Minv_0.
template <class T>
SparseMatrix<T> p0_innovation(const ParamFields<T>& p, Scheme scheme) {
    const auto qs = assemble_spatial_noise_precision(p.grid, p.noise);
    const auto minv = step_matrix(p, 0, scheme);
    const auto qt = weighted_noise_precision(qs, p.at(0).tau);
    return symmetrize(scale(spmul(transpose(minv), spmul(qt, minv)), T(1.0 / p.grid.dt)));
}

inline Eigen::MatrixXd to_dense(const SparseMatrix<double>& a) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p)
            d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a.col_idx()[p])) += a.values()[p];
    return d;
}

inline SparseMatrix<double> from_eigen(const Eigen::MatrixXd& d) {
    std::vector<Triplet<double>> trips;
    for (Eigen::Index r = 0; r < d.rows(); ++r)
        for (Eigen::Index c = 0; c < d.cols(); ++c)
            if (d(r, c) != 0.0) trips.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c), d(r, c)});
    return SparseMatrix<double>::from_triplets(static_cast<std::size_t>(d.rows()), static_cast<std::size_t>(d.cols()),
                                               std::move(trips));
}

/// Stationary covariance after a stabilization run with the step-0
/// parameters: P = S, then n_stab times P = M P M^T + S with
/// S = dt M tau Q_s^{-1} tau M^T. Dense; returns P^{-1}.
inline Eigen::MatrixXd p0_recursion_dense(const ParamFields<double>& p, Scheme scheme, int n_stab) {
    const auto m = p.grid.nodes();
    if (m > kDenseCap)
        throw ConfigError("p0 recursion mode is dense and limited to " + std::to_string(kDenseCap) + " nodes");
    if (n_stab < 0) throw ConfigError("n_stab must be >= 0");
    const Eigen::MatrixXd minv = to_dense(step_matrix(p, 0, scheme));
    const Eigen::MatrixXd mm = minv.partialPivLu().inverse();
    const Eigen::MatrixXd qs = to_dense(assemble_spatial_noise_precision(p.grid, p.noise));
    const Eigen::MatrixXd qs_inv = qs.llt().solve(Eigen::MatrixXd::Identity(qs.rows(), qs.cols()));
    Eigen::VectorXd tau(static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) tau(static_cast<Eigen::Index>(k)) = p.at(0).tau[k];
    const Eigen::MatrixXd noise = tau.asDiagonal() * qs_inv * tau.asDiagonal();
    Eigen::MatrixXd s = p.grid.dt * mm * noise * mm.transpose();
    s = 0.5 * (s + s.transpose()).eval();
    Eigen::MatrixXd cov = s;
    for (int it = 0; it < n_stab; ++it) {
        cov = mm * cov * mm.transpose() + s;
        cov = 0.5 * (cov + cov.transpose()).eval();
    }
    Eigen::MatrixXd prec = cov.llt().solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    return 0.5 * (prec + prec.transpose());
}

inline SparseMatrix<double> build_p0_precision(const ParamFields<double>& p, Scheme scheme, int n_stab, P0Mode mode) {
    if (mode == P0Mode::innovation) return p0_innovation(p, scheme);
    return from_eigen(p0_recursion_dense(p, scheme, n_stab));
}

template <class T>
struct JointPrecision {
    SparseMatrix<T> q;
    std::size_t m = 0;
    int n_steps = 0;
    Scheme scheme = Scheme::centered;
    int alpha = 2;
    SharedFactor factor; // trial factorization, when validated

    std::size_t size() const { return q.rows(); }
};

/// Assembles the joint precision from sparse blocks. With `validate` set
/// (double only) a trial factorization checks definiteness and is kept.
template <class T>
JointPrecision<T> build_joint_precision(const ParamFields<T>& p, Scheme scheme, const SparseMatrix<T>& p0inv,
                                        bool validate = true) {
    p.validate();
    const auto& g = p.grid;
    const auto m = g.nodes();
    const int steps = g.n_steps;
    if (p0inv.rows() != m || p0inv.cols() != m) throw DimensionError("build_joint_precision: P0inv has the wrong size");
    const auto qs = assemble_spatial_noise_precision(g, p.noise);
    const T inv_dt = T(1.0 / g.dt);

    std::vector<Triplet<T>> trips;
    append_block(trips, p0inv, 0, 0);
    SparseMatrix<T> minv_stationary;
    if (p.stationary() && steps > 1) minv_stationary = step_matrix(p, 1, scheme);

    for (int k = 1; k < steps; ++k) {
        const auto minv = p.stationary() ? minv_stationary : step_matrix(p, k, scheme);
        const auto qt = scale(weighted_noise_precision(qs, p.at(k).tau), inv_dt);
        const auto qm = spmul(qt, minv);
        const auto diag = symmetrize(spmul(transpose(minv), qm));
        const auto r0 = static_cast<std::size_t>(k - 1) * m;
        const auto r1 = static_cast<std::size_t>(k) * m;
        append_block(trips, qt, r0, r0);
        append_block(trips, diag, r1, r1);
        const auto off = scale(qm, T(-1.0));
        append_block(trips, off, r0, r1);
        append_block(trips, transpose(off), r1, r0);
    }

    JointPrecision<T> jp;
    jp.q = SparseMatrix<T>::from_triplets(g.size(), g.size(), std::move(trips));
    jp.m = m;
    jp.n_steps = steps;
    jp.scheme = scheme;
    jp.alpha = p.alpha;
    if constexpr (std::is_same_v<T, double>) {
        if (validate) {
            try {
                jp.factor = factorize_shared(jp.q);
            } catch (const NotPositiveDefinite& e) {
                throw NumericalError("joint precision is not positive definite (time block " +
                                     std::to_string(e.original_index() / m) + ", node " +
                                     std::to_string(e.original_index() % m) + "): " + e.what());
            }
        }
    }
    return jp;
}

/// Prior precision with P0 built from the step-0 parameters.
inline JointPrecision<double> build_prior(const ParamFields<double>& p, Scheme scheme, P0Mode mode = P0Mode::innovation,
                                          int n_stab = 50, bool validate = true) {
    return build_joint_precision(p, scheme, build_p0_precision(p, scheme, n_stab, mode), validate);
}

/// Q + H^T R^{-1} H for a masking H with diagonal R.
inline SparseMatrix<double> build_posterior_precision(const SparseMatrix<double>& q, const ObsSet& obs) {
    if (obs.state_size() != q.rows() && !obs.empty())
        throw DimensionError("build_posterior_precision: observation set does not match the state size");
    std::vector<std::size_t> idx;
    std::vector<double> add;
    for (const auto& o : obs) {
        if (!(o.variance > 0.0))
            throw ConfigError("build_posterior_precision: zero noise variance at index " + std::to_string(o.index));
        idx.push_back(o.index);
        add.push_back(1.0 / o.variance);
    }
    return add_to_diagonal(q, std::span<const std::size_t>(idx), std::span<const double>(add));
}

/// log|Q| from per-step factors: log|P0inv| + sum_k log|Minv_k^T Qt_k Minv_k / dt|.
inline double logdet_by_blocks(const ParamFields<double>& p, Scheme scheme, const SparseMatrix<double>& p0inv) {
    const auto qs = assemble_spatial_noise_precision(p.grid, p.noise);
    double total = CholeskyFactor::factorize(p0inv).logdet();
    for (int k = 1; k < p.grid.n_steps; ++k) {
        const auto minv = step_matrix(p, k, scheme);
        const auto qt = scale(weighted_noise_precision(qs, p.at(k).tau), 1.0 / p.grid.dt);
        total += CholeskyFactor::factorize(symmetrize(spmul(transpose(minv), spmul(qt, minv)))).logdet();
    }
    return total;
}

/// Matrix Market file plus a JSON sidecar with the block layout.
inline void write_joint_precision(const JointPrecision<double>& jp, const std::filesystem::path& path) {
    write_matrix_market(jp.q, path);
    auto side = path;
    side.replace_extension(".json");
    nlohmann::json meta = {{"m", jp.m},
                           {"n_steps", jp.n_steps},
                           {"scheme", std::string(scheme_name(jp.scheme))},
                           {"alpha", jp.alpha},
                           {"nnz", jp.q.nnz()}};
    std::ofstream os(side);
    if (!os) throw IoError("cannot write " + side.string());
    os << meta.dump(2) << '\n';
}

} // namespace spdegp
