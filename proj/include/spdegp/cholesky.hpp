#pragma once

// Up-looking simplicial sparse Cholesky: P A P^T = L L^T.
//
// The symbolic phase builds the elimination tree of the permuted matrix and
// counts the nonzeros of each column of L by walking row subtrees; the
// numeric phase computes L one row at a time with a sparse triangular solve
// against the columns already finished.

#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "spdegp/errors.hpp"
#include "spdegp/ordering.hpp"
#include "spdegp/sparse_matrix.hpp"

namespace spdegp {

enum class Ordering { natural, rcm };

enum class TriangularSide { lower, upper };

inline constexpr double kSymmetryTolerance = 1e-12;
inline constexpr double kSymmetrizeLimit = 1e-9;

namespace detail {

inline constexpr std::size_t kNone = static_cast<std::size_t>(-1);

// Nonzero pattern of row k of L, in topological order, written to
// stack[top..n). Uses marks[] == k as the visited flag.
inline std::size_t ereach(const SparseMatrix<double>& c, std::size_t k, const std::vector<std::size_t>& parent,
                          std::vector<std::size_t>& stack, std::vector<std::size_t>& marks) {
    const auto n = c.rows();
    std::size_t top = n;
    marks[k] = k;
    for (std::size_t p = c.row_ptr()[k]; p < c.row_ptr()[k + 1]; ++p) {
        std::size_t i = c.col_idx()[p];
        if (i >= k) continue;
        std::size_t len = 0;
        for (; marks[i] != k; i = parent[i]) {
            stack[len++] = i;
            marks[i] = k;
        }
        while (len > 0) stack[--top] = stack[--len];
    }
    return top;
}

} // namespace detail

class CholeskyFactor {
public:
    /// Factorizes a symmetric positive-definite matrix. Relative asymmetry up
    /// to 1e-12 is accepted, up to 1e-9 the input is symmetrized with a
    /// warning, anything larger is rejected.
    static CholeskyFactor factorize(const SparseMatrix<double>& a, Ordering ordering = Ordering::rcm) {
        if (a.rows() != a.cols()) throw DimensionError("cholesky: matrix is not square");
        for (double v : a.values())
            if (!std::isfinite(v)) throw NumericalError("cholesky: non-finite matrix entry");

        const double asym = relative_asymmetry(a);
        const SparseMatrix<double>* src = &a;
        SparseMatrix<double> symmetrized;
        if (asym > kSymmetrizeLimit) {
            throw NumericalError("cholesky: matrix is not symmetric (relative asymmetry " + std::to_string(asym) + ")");
        } else if (asym > kSymmetryTolerance) {
            warn("cholesky: symmetrizing input with relative asymmetry " + std::to_string(asym));
            symmetrized = scale(spadd(a, transpose(a)), 0.5);
            src = &symmetrized;
        }

        CholeskyFactor f;
        f.n_ = a.rows();
        if (ordering == Ordering::rcm) {
            f.perm_ = reverse_cuthill_mckee(*src);
        } else {
            f.perm_.resize(f.n_);
            std::iota(f.perm_.begin(), f.perm_.end(), std::size_t{0});
        }
        f.inv_perm_ = inverse_permutation(f.perm_);
        const auto c = ordering == Ordering::rcm ? permute_symmetric(*src, f.perm_) : *src;
        f.symbolic(c);
        f.numeric(c);
        return f;
    }

    std::size_t size() const { return n_; }
    std::size_t nnz() const { return row_idx_.size(); }
    double logdet() const { return logdet_; }
    const std::vector<std::size_t>& perm() const { return perm_; }
    const std::vector<std::size_t>& inverse_perm() const { return inv_perm_; }
    const std::vector<std::size_t>& parent() const { return parent_; }

    // Column-compressed L; the diagonal is the first entry of each column.
    const std::vector<std::size_t>& col_ptr() const { return col_ptr_; }
    const std::vector<std::size_t>& row_idx() const { return row_idx_; }
    const std::vector<double>& values() const { return vals_; }

    /// L as a CSR lower-triangular matrix (permuted ordering).
    SparseMatrix<double> lower() const {
        std::vector<Triplet<double>> trips;
        trips.reserve(nnz());
        for (std::size_t j = 0; j < n_; ++j)
            for (std::size_t p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) trips.push_back({row_idx_[p], j, vals_[p]});
        return SparseMatrix<double>::from_triplets(n_, n_, std::move(trips));
    }

    std::vector<double> permute(std::span<const double> b) const {
        std::vector<double> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = b[perm_[i]];
        return out;
    }

    std::vector<double> unpermute(std::span<const double> y) const {
        std::vector<double> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[perm_[i]] = y[i];
        return out;
    }

    /// In place: x <- L^{-1} x (permuted ordering).
    void solve_lower_inplace(std::span<double> x) const {
        for (std::size_t j = 0; j < n_; ++j) {
            x[j] /= vals_[col_ptr_[j]];
            const double xj = x[j];
            for (std::size_t p = col_ptr_[j] + 1; p < col_ptr_[j + 1]; ++p) x[row_idx_[p]] -= vals_[p] * xj;
        }
    }

    /// In place: x <- L^{-T} x (permuted ordering).
    void solve_upper_inplace(std::span<double> x) const {
        for (std::size_t j = n_; j-- > 0;) {
            double s = x[j];
            for (std::size_t p = col_ptr_[j] + 1; p < col_ptr_[j + 1]; ++p) s -= vals_[p] * x[row_idx_[p]];
            x[j] = s / vals_[col_ptr_[j]];
        }
    }

    /// Solves A x = b.
    std::vector<double> solve(std::span<const double> b) const {
        if (b.size() != n_) throw DimensionError("cholesky solve: dimension mismatch");
        auto y = permute(b);
        solve_lower_inplace(y);
        solve_upper_inplace(y);
        return unpermute(y);
    }

    std::vector<double> solve(const std::vector<double>& b) const { return solve(std::span<const double>(b)); }

private:
    void symbolic(const SparseMatrix<double>& c) {
        parent_.assign(n_, detail::kNone);
        std::vector<std::size_t> ancestor(n_, detail::kNone);
        for (std::size_t k = 0; k < n_; ++k) {
            for (std::size_t p = c.row_ptr()[k]; p < c.row_ptr()[k + 1]; ++p) {
                std::size_t i = c.col_idx()[p];
                while (i != detail::kNone && i < k) {
                    const std::size_t next = ancestor[i];
                    ancestor[i] = k;
                    if (next == detail::kNone) parent_[i] = k;
                    i = next;
                }
            }
        }
        std::vector<std::size_t> counts(n_, 1);
        std::vector<std::size_t> stack(n_);
        std::vector<std::size_t> marks(n_, detail::kNone);
        for (std::size_t k = 0; k < n_; ++k) {
            const auto top = detail::ereach(c, k, parent_, stack, marks);
            for (std::size_t q = top; q < n_; ++q) counts[stack[q]] += 1;
        }
        col_ptr_.assign(n_ + 1, 0);
        for (std::size_t j = 0; j < n_; ++j) col_ptr_[j + 1] = col_ptr_[j] + counts[j];
        row_idx_.assign(col_ptr_[n_], 0);
        vals_.assign(col_ptr_[n_], 0.0);
    }

    void numeric(const SparseMatrix<double>& c) {
        std::vector<std::size_t> next(col_ptr_.begin(), col_ptr_.end() - 1);
        std::vector<std::size_t> stack(n_);
        std::vector<std::size_t> marks(n_, detail::kNone);
        std::vector<double> x(n_, 0.0);
        logdet_ = 0.0;
        for (std::size_t k = 0; k < n_; ++k) {
            const auto top = detail::ereach(c, k, parent_, stack, marks);
            x[k] = 0.0;
            for (std::size_t p = c.row_ptr()[k]; p < c.row_ptr()[k + 1]; ++p)
                if (c.col_idx()[p] <= k) x[c.col_idx()[p]] = c.values()[p];
            double d = x[k];
            x[k] = 0.0;
            for (std::size_t q = top; q < n_; ++q) {
                const std::size_t i = stack[q];
                const double lki = x[i] / vals_[col_ptr_[i]];
                x[i] = 0.0;
                for (std::size_t p = col_ptr_[i] + 1; p < next[i]; ++p) x[row_idx_[p]] -= vals_[p] * lki;
                d -= lki * lki;
                const std::size_t p = next[i]++;
                row_idx_[p] = k;
                vals_[p] = lki;
            }
            if (!(d > 0.0) || !std::isfinite(d)) throw NotPositiveDefinite(k, perm_[k], d);
            const std::size_t p = next[k]++;
            row_idx_[p] = k;
            vals_[p] = std::sqrt(d);
            logdet_ += std::log(d);
        }
    }

    std::size_t n_ = 0;
    std::vector<std::size_t> perm_;
    std::vector<std::size_t> inv_perm_;
    std::vector<std::size_t> parent_;
    std::vector<std::size_t> col_ptr_;
    std::vector<std::size_t> row_idx_;
    std::vector<double> vals_;
    double logdet_ = 0.0;
};

using SharedFactor = std::shared_ptr<const CholeskyFactor>;

inline SharedFactor factorize_shared(const SparseMatrix<double>& a, Ordering ordering = Ordering::rcm) {
    return std::make_shared<const CholeskyFactor>(CholeskyFactor::factorize(a, ordering));
}

/// Triangular solve with a CSR lower-triangular L: side == lower solves
/// L x = b, side == upper solves L^T x = b.
inline std::vector<double> solve_triangular(const SparseMatrix<double>& l, std::span<const double> b,
                                            TriangularSide side) {
    const auto n = l.rows();
    if (l.cols() != n || b.size() != n) throw DimensionError("solve_triangular: dimension mismatch");
    std::vector<double> x(b.begin(), b.end());
    auto diag = [&](std::size_t r) {
        const auto p = l.find(r, r);
        if (!p || l.values()[*p] == 0.0) throw NumericalError("solve_triangular: zero diagonal at row " + std::to_string(r));
        return l.values()[*p];
    };
    for (std::size_t r = 0; r < n; ++r)
        if (l.row_ptr()[r + 1] > l.row_ptr()[r] && l.col_idx()[l.row_ptr()[r + 1] - 1] > r)
            throw DimensionError("solve_triangular: matrix is not lower triangular");
    if (side == TriangularSide::lower) {
        for (std::size_t r = 0; r < n; ++r) {
            double s = x[r];
            for (std::size_t p = l.row_ptr()[r]; p < l.row_ptr()[r + 1]; ++p)
                if (l.col_idx()[p] < r) s -= l.values()[p] * x[l.col_idx()[p]];
            x[r] = s / diag(r);
        }
    } else {
        // L^T is upper; column r of L^T is row r of L, so sweep rows backwards.
        for (std::size_t r = n; r-- > 0;) {
            x[r] /= diag(r);
            const double xr = x[r];
            for (std::size_t p = l.row_ptr()[r]; p < l.row_ptr()[r + 1]; ++p)
                if (l.col_idx()[p] < r) x[l.col_idx()[p]] -= l.values()[p] * xr;
        }
    }
    return x;
}

/// Solves A x = b by factorizing A.
inline std::vector<double> solve(const SparseMatrix<double>& a, std::span<const double> b,
                                 Ordering ordering = Ordering::rcm) {
    return CholeskyFactor::factorize(a, ordering).solve(b);
}

} // namespace spdegp
