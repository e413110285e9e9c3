#pragma once

// Reverse-mode rules for the sparse solve and the Cholesky factorization.
//
// Gradients with respect to a matrix are returned on a sparsity pattern only.
// The convention is dL = sum_ij Abar_ij dA_ij over stored entries, so for a
// symmetric perturbation of an off-diagonal pair the change is
// Abar_ij + Abar_ji.

#include <algorithm>
#include <span>
#include <vector>

#include "spdegp/cholesky.hpp"
#include "spdegp/errors.hpp"
#include "spdegp/sparse_matrix.hpp"

namespace spdegp {

struct SolveGradients {
    std::vector<double> grad_b;
    SparseMatrix<double> grad_a; // on the pattern of A
};

/// Backward pass of x = A^{-1} b for symmetric A held by `factor`.
inline SolveGradients solve_backward(const SparseMatrix<double>& a, const CholeskyFactor& factor,
                                     std::span<const double> x, std::span<const double> gbar) {
    if (x.size() != a.rows() || gbar.size() != a.rows() || factor.size() != a.rows())
        throw DimensionError("solve_backward: dimension mismatch");
    SolveGradients out{factor.solve(gbar), a};
    auto& v = out.grad_a.values();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p)
            v[p] = -out.grad_b[r] * x[a.col_idx()[p]];
    return out;
}

inline SolveGradients solve_backward(const SparseMatrix<double>& a, std::span<const double> x,
                                     std::span<const double> gbar) {
    return solve_backward(a, CholeskyFactor::factorize(a), x, gbar);
}

/// Selected inverse: entries of A^{-1} on the pattern of L (permuted
/// ordering), computed by the Takahashi recurrences. Values are stored in
/// the same column-compressed layout as the factor.
inline std::vector<double> selected_inverse(const CholeskyFactor& f) {
    const auto n = f.size();
    const auto& cp = f.col_ptr();
    const auto& ri = f.row_idx();
    const auto& lv = f.values();
    std::vector<double> z(lv.size(), 0.0);

    auto lookup = [&](std::size_t i, std::size_t k) -> double {
        const std::size_t hi = std::max(i, k);
        const std::size_t lo = std::min(i, k);
        const auto first = ri.begin() + static_cast<std::ptrdiff_t>(cp[lo]);
        const auto last = ri.begin() + static_cast<std::ptrdiff_t>(cp[lo + 1]);
        const auto it = std::lower_bound(first, last, hi);
        if (it == last || *it != hi) throw NumericalError("selected_inverse: entry outside the filled pattern");
        return z[static_cast<std::size_t>(it - ri.begin())];
    };

    for (std::size_t j = n; j-- > 0;) {
        const double ljj = lv[cp[j]];
        for (std::size_t p = cp[j] + 1; p < cp[j + 1]; ++p) {
            const std::size_t i = ri[p];
            double s = 0.0;
            for (std::size_t q = cp[j] + 1; q < cp[j + 1]; ++q) s += lv[q] * lookup(i, ri[q]);
            z[p] = -s / ljj;
        }
        double s = 0.0;
        for (std::size_t q = cp[j] + 1; q < cp[j + 1]; ++q) s += lv[q] * z[q];
        z[cp[j]] = 1.0 / (ljj * ljj) - s / ljj;
    }
    return z;
}

/// Entries of A^{-1} at the stored positions of `pattern` (original
/// ordering). Every position must lie inside the filled pattern of L + L^T,
/// which holds for any pattern contained in that of A.
inline SparseMatrix<double> inverse_on_pattern(const CholeskyFactor& f, const SparseMatrix<double>& pattern) {
    const auto z = selected_inverse(f);
    const auto& cp = f.col_ptr();
    const auto& ri = f.row_idx();
    const auto& inv = f.inverse_perm();
    auto out = pattern;
    for (std::size_t r = 0; r < pattern.rows(); ++r)
        for (std::size_t p = pattern.row_ptr()[r]; p < pattern.row_ptr()[r + 1]; ++p) {
            const std::size_t a = inv[r];
            const std::size_t b = inv[pattern.col_idx()[p]];
            const std::size_t hi = std::max(a, b);
            const std::size_t lo = std::min(a, b);
            const auto first = ri.begin() + static_cast<std::ptrdiff_t>(cp[lo]);
            const auto last = ri.begin() + static_cast<std::ptrdiff_t>(cp[lo + 1]);
            const auto it = std::lower_bound(first, last, hi);
            if (it == last || *it != hi) throw NumericalError("inverse_on_pattern: entry outside the filled pattern");
            out.values()[p] = z[static_cast<std::size_t>(it - ri.begin())];
        }
    return out;
}

/// Gradient of logdet(A) on the pattern of A: A^{-1} restricted.
inline SparseMatrix<double> logdet_gradient(const CholeskyFactor& f, const SparseMatrix<double>& a) {
    return inverse_on_pattern(f, a);
}

/// Abar = 1/2 L^{-T} ltu(L^T Lbar) L^{-1} for a CSR lower-triangular L and
/// an output gradient Lbar (lower triangular, any pattern). ltu copies the
/// lower triangle onto the upper one. The result is returned on the pattern
/// of L + L^T, the natural support of a matrix with factor L.
inline SparseMatrix<double> cholesky_backward(const SparseMatrix<double>& l, const SparseMatrix<double>& lbar) {
    const auto n = l.rows();
    if (l.cols() != n || lbar.rows() != n || lbar.cols() != n)
        throw DimensionError("cholesky_backward: dimension mismatch");
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t p = l.row_ptr()[r]; p < l.row_ptr()[r + 1]; ++p)
            if (l.col_idx()[p] > r) throw DimensionError("cholesky_backward: L is not lower triangular");
        const auto d = l.find(r, r);
        if (!d || !(l.values()[*d] > 0.0)) throw NumericalError("cholesky_backward: L needs a positive diagonal");
    }
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t p = lbar.row_ptr()[r]; p < lbar.row_ptr()[r + 1]; ++p)
            if (lbar.col_idx()[p] > r) throw DimensionError("cholesky_backward: Lbar is not lower triangular");

    const auto phi_full = spmul(transpose(l), lbar);
    const auto low = triangle(phi_full, true);
    std::vector<Triplet<double>> trips;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t p = low.row_ptr()[r]; p < low.row_ptr()[r + 1]; ++p) {
            const auto c = low.col_idx()[p];
            trips.push_back({r, c, low.values()[p]});
            if (c != r) trips.push_back({c, r, low.values()[p]});
        }
    const auto phi = SparseMatrix<double>::from_triplets(n, n, std::move(trips));

    const auto support = spadd(l, transpose(l));
    auto out = support;
    std::fill(out.values().begin(), out.values().end(), 0.0);

    // Column c of Abar: 1/2 L^{-T} phi L^{-1} e_c.
    std::vector<double> e(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::fill(e.begin(), e.end(), 0.0);
        e[c] = 1.0;
        const auto w = solve_triangular(l, e, TriangularSide::lower);
        const auto pw = spmv(phi, w);
        const auto col = solve_triangular(l, pw, TriangularSide::upper);
        for (std::size_t r = 0; r < n; ++r) {
            const auto p = out.find(r, c);
            if (p) out.values()[*p] = 0.5 * col[r];
        }
    }
    return out;
}

/// Lbar of the loss 2 * sum log L_ii, i.e. logdet(A).
inline SparseMatrix<double> logdet_lbar(const SparseMatrix<double>& l) {
    std::vector<double> d(l.rows());
    for (std::size_t r = 0; r < l.rows(); ++r) d[r] = 2.0 / l.coeff(r, r);
    return SparseMatrix<double>::diagonal(d);
}

} // namespace spdegp
