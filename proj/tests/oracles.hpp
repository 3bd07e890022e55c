// Independent reference implementations used to cross-check the library.
// Everything here is deliberately naive: boolean closures, exhaustive
// enumeration, quadruple loops, and a small one-sided Jacobi SVD.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <utility>
#include <vector>

#include "cascade/matrix.hpp"
#include "cascade/topology.hpp"

namespace oracle {

/// Reachability via boolean matrix product of per-layer adjacency.
inline std::vector<std::vector<bool>> reachability(const cascade::Topology& t) {
    using Bool2d = std::vector<std::vector<bool>>;
    Bool2d cur(t.n_in(), std::vector<bool>(t.n_in(), false));
    for (int i = 0; i < t.n_in(); ++i) cur[i][i] = true;  // cur[node][input]
    for (int l = 0; l < t.depth(); ++l) {
        Bool2d next(t.layer_widths[l + 1], std::vector<bool>(t.n_in(), false));
        for (const cascade::Edge& e : t.layers[l])
            for (int i = 0; i < t.n_in(); ++i)
                if (cur[e.src][i]) next[e.dst][i] = true;
        cur = std::move(next);
    }
    return cur;  // cur[output][input]
}

/// All input-output paths as explicit edge-index sequences; edge ids
/// count trainable edges only, in canonical order, with -1 for constant
/// edges. Only feasible for tiny graphs.
struct PathEnumeration {
    // paths[input][output] = list of paths, each a list of trainable edge ids
    std::vector<std::vector<std::vector<std::vector<int>>>> paths;
};

inline PathEnumeration enumerate_paths(const cascade::Topology& t) {
    // Assign global ids to trainable edges in canonical order.
    std::vector<std::vector<int>> ids(t.layers.size());
    int next_id = 0;
    for (size_t l = 0; l < t.layers.size(); ++l) {
        ids[l].resize(t.layers[l].size(), -1);
        for (size_t i = 0; i < t.layers[l].size(); ++i)
            if (t.layers[l][i].kind == cascade::EdgeKind::Trainable) ids[l][i] = next_id++;
    }

    PathEnumeration pe;
    pe.paths.assign(t.n_in(), std::vector<std::vector<std::vector<int>>>(t.n_out()));
    for (int input = 0; input < t.n_in(); ++input) {
        // DFS over layers.
        struct Frame {
            int layer;
            int node;
            std::vector<int> trainable_ids;
        };
        std::vector<Frame> stack{{0, input, {}}};
        while (!stack.empty()) {
            Frame f = std::move(stack.back());
            stack.pop_back();
            if (f.layer == t.depth()) {
                pe.paths[input][f.node].push_back(f.trainable_ids);
                continue;
            }
            for (size_t i = 0; i < t.layers[f.layer].size(); ++i) {
                const cascade::Edge& e = t.layers[f.layer][i];
                if (e.src != f.node) continue;
                Frame g{f.layer + 1, e.dst, f.trainable_ids};
                if (ids[f.layer][i] >= 0) g.trainable_ids.push_back(ids[f.layer][i]);
                stack.push_back(std::move(g));
            }
        }
    }
    return pe;
}

/// Maximum bipartite matching by exhaustive recursion with an upper-bound
/// prune (tiny graphs only).
inline int exhaustive_matching(const std::vector<std::vector<int>>& adjacency, int n_right) {
    std::vector<bool> used(n_right, false);
    int best = 0;
    std::function<void(size_t, int)> rec = [&](size_t c, int matched) {
        best = std::max(best, matched);
        if (c == adjacency.size()) return;
        if (matched + static_cast<int>(adjacency.size() - c) <= best) return;
        for (int e : adjacency[c]) {
            if (used[e]) continue;
            used[e] = true;
            rec(c + 1, matched + 1);
            used[e] = false;
        }
        rec(c + 1, matched);  // leave constraint c unmatched
    };
    rec(0, 0);
    return best;
}

/// Singular values by one-sided Jacobi orthogonalization.
inline std::vector<double> singular_values(const cascade::Matrix<double>& a) {
    const int m = a.rows, n = a.cols;
    std::vector<std::vector<double>> u(n, std::vector<double>(m));
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) u[j][i] = a(i, j);  // column-major copy

    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double alpha = 0, beta = 0, gamma = 0;
                for (int i = 0; i < m; ++i) {
                    alpha += u[p][i] * u[p][i];
                    beta += u[q][i] * u[q][i];
                    gamma += u[p][i] * u[q][i];
                }
                off = std::max(off, std::abs(gamma) / std::sqrt(alpha * beta + 1e-300));
                if (std::abs(gamma) < 1e-15 * std::sqrt(alpha * beta)) continue;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double tt = (zeta >= 0 ? 1.0 : -1.0) /
                                  (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + tt * tt);
                const double s = c * tt;
                for (int i = 0; i < m; ++i) {
                    const double tp = u[p][i];
                    u[p][i] = c * tp - s * u[q][i];
                    u[q][i] = s * tp + c * u[q][i];
                }
            }
        }
        if (off < 1e-14) break;
    }

    std::vector<double> sv(n);
    for (int j = 0; j < n; ++j) {
        double norm = 0;
        for (int i = 0; i < m; ++i) norm += u[j][i] * u[j][i];
        sv[j] = std::sqrt(norm);
    }
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

/// Minimal squared-Frobenius error of any rank-k approximation.
inline double eckart_young_tail(const cascade::Matrix<double>& a, int k) {
    const auto sv = singular_values(a);
    double tail = 0;
    for (size_t i = k; i < sv.size(); ++i) tail += sv[i] * sv[i];
    return tail;
}

}  // namespace oracle
