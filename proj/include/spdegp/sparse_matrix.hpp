#pragma once

// Compressed sparse row matrices templated on the scalar type (double, or
// Dual for forward-mode derivatives of assembled operators).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "spdegp/dual.hpp"
#include "spdegp/errors.hpp"

namespace spdegp {

template <class T>
struct Triplet {
    std::size_t row;
    std::size_t col;
    T value;
};

template <class T = double>
class SparseMatrix {
public:
    using Scalar = T;

    SparseMatrix() = default;

    SparseMatrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

    SparseMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_ptr,
                 std::vector<std::size_t> col_idx, std::vector<T> values)
        : rows_(rows), cols_(cols), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)),
          values_(std::move(values)) {
        validate();
    }

    static SparseMatrix identity(std::size_t n, T diag = T(1.0)) {
        std::vector<std::size_t> rp(n + 1);
        std::vector<std::size_t> ci(n);
        std::iota(rp.begin(), rp.end(), std::size_t{0});
        std::iota(ci.begin(), ci.end(), std::size_t{0});
        return SparseMatrix(n, n, std::move(rp), std::move(ci), std::vector<T>(n, diag));
    }

    static SparseMatrix diagonal(std::span<const T> d) {
        const auto n = d.size();
        std::vector<std::size_t> rp(n + 1);
        std::vector<std::size_t> ci(n);
        std::iota(rp.begin(), rp.end(), std::size_t{0});
        std::iota(ci.begin(), ci.end(), std::size_t{0});
        return SparseMatrix(n, n, std::move(rp), std::move(ci), std::vector<T>(d.begin(), d.end()));
    }

    /// Duplicates are summed; explicit zeros are kept as structural entries.
    static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet<T>> trips) {
        for (const auto& t : trips)
            if (t.row >= rows || t.col >= cols) throw DimensionError("from_triplets: entry out of range");
        std::sort(trips.begin(), trips.end(),
                  [](const auto& a, const auto& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
        std::vector<std::size_t> rp(rows + 1, 0);
        std::vector<std::size_t> ci;
        std::vector<T> v;
        ci.reserve(trips.size());
        v.reserve(trips.size());
        for (std::size_t q = 0; q < trips.size(); ++q) {
            if (q > 0 && trips[q].row == trips[q - 1].row && trips[q].col == trips[q - 1].col) {
                v.back() += trips[q].value;
                continue;
            }
            ci.push_back(trips[q].col);
            v.push_back(trips[q].value);
            rp[trips[q].row + 1] += 1;
        }
        for (std::size_t r = 0; r < rows; ++r) rp[r + 1] += rp[r];
        return SparseMatrix(rows, cols, std::move(rp), std::move(ci), std::move(v));
    }

    static SparseMatrix from_dense(std::size_t rows, std::size_t cols, std::span<const T> dense,
                                   bool keep_zeros = false) {
        std::vector<Triplet<T>> trips;
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const T& x = dense[r * cols + c];
                if (keep_zeros || value_of(x) != 0.0) trips.push_back({r, c, x});
            }
        return from_triplets(rows, cols, std::move(trips));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return col_idx_.size(); }
    const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
    const std::vector<std::size_t>& col_idx() const { return col_idx_; }
    const std::vector<T>& values() const { return values_; }
    std::vector<T>& values() { return values_; }

    std::optional<std::size_t> find(std::size_t r, std::size_t c) const {
        if (r >= rows_ || c >= cols_) return std::nullopt;
        const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
        const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
        const auto it = std::lower_bound(first, last, c);
        if (it == last || *it != c) return std::nullopt;
        return static_cast<std::size_t>(it - col_idx_.begin());
    }

    T coeff(std::size_t r, std::size_t c) const {
        const auto p = find(r, c);
        return p ? values_[*p] : T(0.0);
    }

    /// Row-major dense copy.
    std::vector<T> to_dense() const {
        std::vector<T> d(rows_ * cols_, T(0.0));
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) d[r * cols_ + col_idx_[p]] = values_[p];
        return d;
    }

    template <class F>
    auto map_values(F&& f) const {
        using U = decltype(f(std::declval<const T&>()));
        std::vector<U> v;
        v.reserve(values_.size());
        for (const auto& x : values_) v.push_back(f(x));
        return SparseMatrix<U>(rows_, cols_, row_ptr_, col_idx_, std::move(v));
    }

    bool same_pattern(const SparseMatrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && row_ptr_ == o.row_ptr_ && col_idx_ == o.col_idx_;
    }

private:
    void validate() const {
        if (row_ptr_.size() != rows_ + 1 || row_ptr_.front() != 0 || row_ptr_.back() != col_idx_.size() ||
            values_.size() != col_idx_.size())
            throw DimensionError("SparseMatrix: inconsistent compressed storage");
        for (std::size_t r = 0; r < rows_; ++r) {
            if (row_ptr_[r] > row_ptr_[r + 1]) throw DimensionError("SparseMatrix: row offsets decrease");
            for (std::size_t p = row_ptr_[r]; p < row_ptr_[r + 1]; ++p) {
                if (col_idx_[p] >= cols_) throw DimensionError("SparseMatrix: column index out of range");
                if (p > row_ptr_[r] && col_idx_[p] <= col_idx_[p - 1])
                    throw DimensionError("SparseMatrix: column indices must increase within a row");
            }
        }
    }

    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<T> values_;
};

template <class T>
std::vector<T> spmv(const SparseMatrix<T>& a, std::span<const T> x) {
    if (x.size() != a.cols()) throw DimensionError("spmv: dimension mismatch");
    std::vector<T> y(a.rows(), T(0.0));
    const auto& rp = a.row_ptr();
    const auto& ci = a.col_idx();
    const auto& v = a.values();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        T acc(0.0);
        for (std::size_t p = rp[r]; p < rp[r + 1]; ++p) acc += v[p] * x[ci[p]];
        y[r] = acc;
    }
    return y;
}

template <class T>
std::vector<T> spmv(const SparseMatrix<T>& a, const std::vector<T>& x) {
    return spmv(a, std::span<const T>(x));
}

/// alpha*A + beta*B over the union pattern.
template <class T>
SparseMatrix<T> spadd(const SparseMatrix<T>& a, const SparseMatrix<T>& b, T alpha = T(1.0), T beta = T(1.0)) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("spadd: dimension mismatch");
    std::vector<std::size_t> rp(a.rows() + 1, 0);
    std::vector<std::size_t> ci;
    std::vector<T> v;
    ci.reserve(a.nnz() + b.nnz());
    v.reserve(a.nnz() + b.nnz());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        std::size_t p = a.row_ptr()[r];
        std::size_t q = b.row_ptr()[r];
        const std::size_t pe = a.row_ptr()[r + 1];
        const std::size_t qe = b.row_ptr()[r + 1];
        while (p < pe || q < qe) {
            const std::size_t cp = p < pe ? a.col_idx()[p] : std::numeric_limits<std::size_t>::max();
            const std::size_t cq = q < qe ? b.col_idx()[q] : std::numeric_limits<std::size_t>::max();
            if (cp == cq) {
                ci.push_back(cp);
                v.push_back(alpha * a.values()[p++] + beta * b.values()[q++]);
            } else if (cp < cq) {
                ci.push_back(cp);
                v.push_back(alpha * a.values()[p++]);
            } else {
                ci.push_back(cq);
                v.push_back(beta * b.values()[q++]);
            }
        }
        rp[r + 1] = ci.size();
    }
    return SparseMatrix<T>(a.rows(), a.cols(), std::move(rp), std::move(ci), std::move(v));
}

/// Gustavson row-by-row product; cancellations stay as structural entries.
template <class T>
SparseMatrix<T> spmul(const SparseMatrix<T>& a, const SparseMatrix<T>& b) {
    if (a.cols() != b.rows()) throw DimensionError("spmul: dimension mismatch");
    const std::size_t n = b.cols();
    std::vector<std::size_t> marker(n, std::numeric_limits<std::size_t>::max());
    std::vector<T> acc(n, T(0.0));
    std::vector<std::size_t> rp(a.rows() + 1, 0);
    std::vector<std::size_t> ci;
    std::vector<T> v;
    std::vector<std::size_t> row_cols;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        row_cols.clear();
        for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p) {
            const std::size_t k = a.col_idx()[p];
            const T& akv = a.values()[p];
            for (std::size_t q = b.row_ptr()[k]; q < b.row_ptr()[k + 1]; ++q) {
                const std::size_t c = b.col_idx()[q];
                if (marker[c] != r) {
                    marker[c] = r;
                    acc[c] = akv * b.values()[q];
                    row_cols.push_back(c);
                } else {
                    acc[c] += akv * b.values()[q];
                }
            }
        }
        std::sort(row_cols.begin(), row_cols.end());
        for (std::size_t c : row_cols) {
            ci.push_back(c);
            v.push_back(acc[c]);
        }
        rp[r + 1] = ci.size();
    }
    return SparseMatrix<T>(a.rows(), n, std::move(rp), std::move(ci), std::move(v));
}

template <class T>
SparseMatrix<T> transpose(const SparseMatrix<T>& a) {
    std::vector<std::size_t> rp(a.cols() + 1, 0);
    for (std::size_t c : a.col_idx()) rp[c + 1] += 1;
    for (std::size_t c = 0; c < a.cols(); ++c) rp[c + 1] += rp[c];
    std::vector<std::size_t> next(rp.begin(), rp.end() - 1);
    std::vector<std::size_t> ci(a.nnz());
    std::vector<T> v(a.nnz());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p) {
            const std::size_t dst = next[a.col_idx()[p]]++;
            ci[dst] = r;
            v[dst] = a.values()[p];
        }
    return SparseMatrix<T>(a.cols(), a.rows(), std::move(rp), std::move(ci), std::move(v));
}

template <class T>
SparseMatrix<T> scale(const SparseMatrix<T>& a, T s) {
    return a.map_values([&](const T& x) { return x * s; });
}

/// diag(left) * A * diag(right)
template <class T>
SparseMatrix<T> scale_rows_cols(const SparseMatrix<T>& a, std::span<const T> left, std::span<const T> right) {
    if (left.size() != a.rows() || right.size() != a.cols()) throw DimensionError("scale_rows_cols: size mismatch");
    auto out = a;
    auto& v = out.values();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p) v[p] = left[r] * v[p] * right[a.col_idx()[p]];
    return out;
}

template <class T>
std::vector<T> diagonal_of(const SparseMatrix<T>& a) {
    std::vector<T> d(std::min(a.rows(), a.cols()), T(0.0));
    for (std::size_t r = 0; r < d.size(); ++r) d[r] = a.coeff(r, r);
    return d;
}

/// Adds d[r] to existing diagonal entries (the diagonal must be structurally present).
template <class T>
SparseMatrix<T> add_to_diagonal(const SparseMatrix<T>& a, std::span<const std::size_t> idx, std::span<const T> d) {
    auto out = a;
    for (std::size_t q = 0; q < idx.size(); ++q) {
        const auto p = out.find(idx[q], idx[q]);
        if (!p) throw DimensionError("add_to_diagonal: diagonal entry not stored");
        out.values()[*p] += d[q];
    }
    return out;
}

/// Embeds `block` at (row0, col0) in a rows x cols matrix, as triplets.
template <class T>
void append_block(std::vector<Triplet<T>>& trips, const SparseMatrix<T>& block, std::size_t row0, std::size_t col0) {
    for (std::size_t r = 0; r < block.rows(); ++r)
        for (std::size_t p = block.row_ptr()[r]; p < block.row_ptr()[r + 1]; ++p)
            trips.push_back({row0 + r, col0 + block.col_idx()[p], block.values()[p]});
}

inline double frobenius_norm(const SparseMatrix<double>& a) {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

/// ||A - A^T||_F / ||A||_F.
inline double relative_asymmetry(const SparseMatrix<double>& a) {
    if (a.rows() != a.cols()) return std::numeric_limits<double>::infinity();
    const auto d = spadd(a, transpose(a), 1.0, -1.0);
    const double na = frobenius_norm(a);
    return na == 0.0 ? 0.0 : frobenius_norm(d) / na;
}

/// Copies of the entries with col <= row (lower) or col >= row (upper).
template <class T>
SparseMatrix<T> triangle(const SparseMatrix<T>& a, bool lower) {
    std::vector<Triplet<T>> trips;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p) {
            const auto c = a.col_idx()[p];
            if (lower ? c <= r : c >= r) trips.push_back({r, c, a.values()[p]});
        }
    return SparseMatrix<T>::from_triplets(a.rows(), a.cols(), std::move(trips));
}

/// Values of `a` sampled on the pattern of `pattern` (missing entries are zero).
template <class T>
SparseMatrix<T> restrict_to_pattern(const SparseMatrix<T>& a, const SparseMatrix<T>& pattern) {
    auto out = pattern;
    for (std::size_t r = 0; r < pattern.rows(); ++r)
        for (std::size_t p = pattern.row_ptr()[r]; p < pattern.row_ptr()[r + 1]; ++p)
            out.values()[p] = a.coeff(r, pattern.col_idx()[p]);
    return out;
}

// Matrix Market coordinate real general.

inline void write_matrix_market(const SparseMatrix<double>& a, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
    os << std::setprecision(17);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p)
            os << r + 1 << ' ' << a.col_idx()[p] + 1 << ' ' << a.values()[p] << '\n';
}

inline SparseMatrix<double> read_matrix_market(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("%%MatrixMarket", 0) != 0)
        throw IoError(path.string() + ": missing MatrixMarket banner");
    std::string lower = line;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower.find("coordinate") == std::string::npos) throw IoError(path.string() + ": only coordinate format supported");
    const bool symmetric = lower.find("symmetric") != std::string::npos;
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '%') break;
    std::size_t rows = 0, cols = 0, nnz = 0;
    {
        std::istringstream ss(line);
        if (!(ss >> rows >> cols >> nnz)) throw IoError(path.string() + ": bad size line");
    }
    std::vector<Triplet<double>> trips;
    trips.reserve(symmetric ? 2 * nnz : nnz);
    for (std::size_t q = 0; q < nnz; ++q) {
        std::size_t r = 0, c = 0;
        double v = 0.0;
        if (!(is >> r >> c >> v) || r == 0 || c == 0) throw IoError(path.string() + ": bad entry");
        trips.push_back({r - 1, c - 1, v});
        if (symmetric && r != c) trips.push_back({c - 1, r - 1, v});
    }
    return SparseMatrix<double>::from_triplets(rows, cols, std::move(trips));
}

} // namespace spdegp
