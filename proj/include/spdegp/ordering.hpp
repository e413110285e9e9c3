#pragma once

#include <algorithm>
#include <queue>
#include <vector>

#include "spdegp/sparse_matrix.hpp"

namespace spdegp {

namespace detail {

// BFS level structure from `root` restricted to unvisited nodes; returns the
// nodes of the last level and the eccentricity.
template <class T>
std::pair<std::vector<std::size_t>, std::size_t> last_level(const SparseMatrix<T>& a, std::size_t root,
                                                             const std::vector<char>& done) {
    const auto n = a.rows();
    std::vector<std::size_t> level(n, static_cast<std::size_t>(-1));
    std::vector<std::size_t> frontier{root};
    level[root] = 0;
    std::size_t depth = 0;
    std::vector<std::size_t> last = frontier;
    while (!frontier.empty()) {
        last = frontier;
        std::vector<std::size_t> next;
        for (auto u : frontier)
            for (std::size_t p = a.row_ptr()[u]; p < a.row_ptr()[u + 1]; ++p) {
                const auto w = a.col_idx()[p];
                if (!done[w] && level[w] == static_cast<std::size_t>(-1)) {
                    level[w] = depth + 1;
                    next.push_back(w);
                }
            }
        if (!next.empty()) ++depth;
        frontier = std::move(next);
    }
    return {last, depth};
}

} // namespace detail

/// Reverse Cuthill-McKee permutation of a structurally symmetric matrix:
/// perm[new] = old. Each connected component starts from a pseudo-peripheral
/// node found by the George-Liu iteration.
template <class T>
std::vector<std::size_t> reverse_cuthill_mckee(const SparseMatrix<T>& a) {
    const auto n = a.rows();
    std::vector<std::size_t> degree(n);
    for (std::size_t r = 0; r < n; ++r) degree[r] = a.row_ptr()[r + 1] - a.row_ptr()[r];

    std::vector<char> done(n, 0);
    std::vector<std::size_t> order;
    order.reserve(n);
    std::vector<std::size_t> nbrs;

    for (std::size_t seed = 0; seed < n; ++seed) {
        if (done[seed]) continue;
        // lowest-degree node of this component as the starting guess
        std::size_t root = seed;
        {
            std::vector<char> seen(n, 0);
            std::vector<std::size_t> stack{seed};
            seen[seed] = 1;
            while (!stack.empty()) {
                auto u = stack.back();
                stack.pop_back();
                if (degree[u] < degree[root]) root = u;
                for (std::size_t p = a.row_ptr()[u]; p < a.row_ptr()[u + 1]; ++p) {
                    const auto w = a.col_idx()[p];
                    if (!done[w] && !seen[w]) {
                        seen[w] = 1;
                        stack.push_back(w);
                    }
                }
            }
        }
        auto [last, ecc] = detail::last_level(a, root, done);
        for (int iter = 0; iter < 8; ++iter) {
            auto cand = *std::min_element(last.begin(), last.end(),
                                          [&](auto x, auto y) { return degree[x] < degree[y]; });
            auto [last2, ecc2] = detail::last_level(a, cand, done);
            if (ecc2 <= ecc) break;
            root = cand;
            last = std::move(last2);
            ecc = ecc2;
        }

        std::queue<std::size_t> queue;
        queue.push(root);
        done[root] = 1;
        while (!queue.empty()) {
            const auto u = queue.front();
            queue.pop();
            order.push_back(u);
            nbrs.clear();
            for (std::size_t p = a.row_ptr()[u]; p < a.row_ptr()[u + 1]; ++p) {
                const auto w = a.col_idx()[p];
                if (!done[w]) {
                    done[w] = 1;
                    nbrs.push_back(w);
                }
            }
            std::sort(nbrs.begin(), nbrs.end(), [&](auto x, auto y) {
                return degree[x] != degree[y] ? degree[x] < degree[y] : x < y;
            });
            for (auto w : nbrs) queue.push(w);
        }
    }
    std::reverse(order.begin(), order.end());
    return order;
}

inline std::vector<std::size_t> inverse_permutation(const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t k = 0; k < perm.size(); ++k) inv[perm[k]] = k;
    return inv;
}

/// C = P A P^T with C(i, j) = A(perm[i], perm[j]).
template <class T>
SparseMatrix<T> permute_symmetric(const SparseMatrix<T>& a, const std::vector<std::size_t>& perm) {
    const auto inv = inverse_permutation(perm);
    std::vector<Triplet<T>> trips;
    trips.reserve(a.nnz());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t p = a.row_ptr()[r]; p < a.row_ptr()[r + 1]; ++p)
            trips.push_back({inv[r], inv[a.col_idx()[p]], a.values()[p]});
    return SparseMatrix<T>::from_triplets(a.rows(), a.cols(), std::move(trips));
}

} // namespace spdegp
