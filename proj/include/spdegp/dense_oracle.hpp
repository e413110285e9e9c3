#pragma once

// Dense reference computations for small instances. These follow the
// textbook constructions literally and share no code with the sparse paths
// beyond operator assembly.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "spdegp/errors.hpp"
#include "spdegp/grid.hpp"
#include "spdegp/operator.hpp"
#include "spdegp/params.hpp"
#include "spdegp/precision.hpp"

namespace spdegp::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd to_vec(std::span<const double> v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline void check_cap(std::size_t n, std::size_t cap = kDenseCap) {
    if (n > cap)
        throw ConfigError("dense oracle refused: " + std::to_string(n) + " unknowns exceed the cap of " +
                          std::to_string(cap));
}

/// Q = M_G^{-T} diag(P0inv, I, ..., I) M_G^{-1}, where x = M_G w maps
/// w = (x_0, z_1, ..., z_L) to the trajectory through
/// x_k = M_k x_{k-1} + T_k z_k, T_k = sqrt(dt) M_k tau_k chol(Q_s^{-1}).
inline MatrixXd joint_precision(const ParamFields<double>& p, Scheme scheme, const MatrixXd& p0inv) {
    const auto& g = p.grid;
    const auto m = static_cast<Eigen::Index>(g.nodes());
    const int steps = g.n_steps;
    check_cap(g.size());
    const auto n = m * steps;
    const MatrixXd qs = to_dense(assemble_spatial_noise_precision(g, p.noise));
    const MatrixXd qs_inv = qs.llt().solve(MatrixXd::Identity(m, m));
    const MatrixXd ls = qs_inv.llt().matrixL();

    std::vector<MatrixXd> mk(static_cast<std::size_t>(steps));
    std::vector<MatrixXd> tk(static_cast<std::size_t>(steps));
    for (int k = 1; k < steps; ++k) {
        const MatrixXd minv = to_dense(step_matrix(p, k, scheme));
        mk[static_cast<std::size_t>(k)] = minv.partialPivLu().inverse();
        VectorXd tau(m);
        for (Eigen::Index q = 0; q < m; ++q) tau(q) = p.at(k).tau[static_cast<std::size_t>(q)];
        tk[static_cast<std::size_t>(k)] = std::sqrt(g.dt) * mk[static_cast<std::size_t>(k)] * tau.asDiagonal() * ls;
    }

    MatrixXd mg = MatrixXd::Zero(n, n);
    mg.block(0, 0, m, m).setIdentity();
    for (int k = 1; k < steps; ++k) {
        const auto& mkk = mk[static_cast<std::size_t>(k)];
        for (int j = 0; j < k; ++j) mg.block(k * m, j * m, m, m) = mkk * mg.block((k - 1) * m, j * m, m, m);
        mg.block(k * m, k * m, m, m) = tk[static_cast<std::size_t>(k)];
    }
    const MatrixXd mg_inv = mg.partialPivLu().inverse();
    MatrixXd d = MatrixXd::Identity(n, n);
    d.block(0, 0, m, m) = p0inv;
    MatrixXd q = mg_inv.transpose() * d * mg_inv;
    return 0.5 * (q + q.transpose());
}

inline MatrixXd inverse_spd(const MatrixXd& a) {
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("dense oracle: matrix is not positive definite");
    return llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
}

inline double logdet_spd(const MatrixXd& a) {
    Eigen::LLT<MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) throw NumericalError("dense oracle: matrix is not positive definite");
    const MatrixXd l = llt.matrixL();
    return 2.0 * l.diagonal().array().log().sum();
}

/// Covariance-form OI: x* = xb + P H^T (H P H^T + R)^{-1} (y - H xb), P = Q^{-1}.
inline VectorXd covariance_oi(const MatrixXd& q, const ObsSet& obs, const VectorXd& xb) {
    const MatrixXd p = inverse_spd(q);
    const auto nobs = static_cast<Eigen::Index>(obs.size());
    if (nobs == 0) return xb;
    MatrixXd pxy(p.rows(), nobs);
    MatrixXd pyy(nobs, nobs);
    VectorXd innov(nobs);
    Eigen::Index a = 0;
    for (const auto& oa : obs) {
        const auto ia = static_cast<Eigen::Index>(oa.index);
        pxy.col(a) = p.col(ia);
        innov(a) = oa.value - xb(ia);
        Eigen::Index b = 0;
        for (const auto& ob : obs) pyy(a, b++) = p(ia, static_cast<Eigen::Index>(ob.index));
        pyy(a, a) += oa.variance == 0.0 ? 1e-10 : oa.variance;
        ++a;
    }
    return xb + pxy * pyy.ldlt().solve(innov);
}

/// Dense Q + H^T R^{-1} H.
inline MatrixXd posterior_precision(const MatrixXd& q, const ObsSet& obs) {
    MatrixXd out = q;
    for (const auto& o : obs) {
        const auto i = static_cast<Eigen::Index>(o.index);
        out(i, i) += 1.0 / (o.variance == 0.0 ? 1e-10 : o.variance);
    }
    return out;
}

} // namespace spdegp::oracle
