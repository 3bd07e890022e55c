#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <utility>
#include <vector>

#include "cascade/topology.hpp"

namespace cascade {

/// Bipartite graph between input-output reconstruction constraints and
/// the trainable edges that lie on at least one path between them.
/// Constant edges are not candidates: they cannot take a derived value.
struct ConstraintGraph {
    int n_in = 0;
    int n_out = 0;
    /// Reachable (input, output) pairs with at least one trainable edge
    /// on some connecting path.
    std::vector<std::pair<int, int>> constraints;
    /// Trainable-edge ids adjacent to each constraint (parallel to
    /// `constraints`; ids index trainable edges in canonical order).
    std::vector<std::vector<int>> adjacency;
    long long n_trainable_edges = 0;
    /// All (input, output) pairs connected by at least one path.
    long long reachable_pairs = 0;
    /// Reachable pairs whose every path is all-constant; excluded from
    /// the matching problem.
    long long empty_adjacency = 0;
};

/// Builds the constraint graph from forward reachability (inputs per
/// neuron) and backward reachability (outputs per neuron).
inline ConstraintGraph build_constraint_graph(const Topology& t) {
    const int n_in = t.n_in();
    const int n_out = t.n_out();
    const int L = t.depth();
    const int in_words = (n_in + 63) / 64;
    const int out_words = (n_out + 63) / 64;

    // fwd[l][node] = bitmask of inputs reaching that neuron of layer l.
    std::vector<std::vector<uint64_t>> fwd(L + 1);
    fwd[0].assign(static_cast<size_t>(n_in) * in_words, 0);
    for (int i = 0; i < n_in; ++i) fwd[0][static_cast<size_t>(i) * in_words + i / 64] |= 1ULL << (i % 64);
    for (int l = 0; l < L; ++l) {
        fwd[l + 1].assign(static_cast<size_t>(t.layer_widths[l + 1]) * in_words, 0);
        for (const Edge& e : t.layers[l])
            for (int w = 0; w < in_words; ++w)
                fwd[l + 1][static_cast<size_t>(e.dst) * in_words + w] |=
                    fwd[l][static_cast<size_t>(e.src) * in_words + w];
    }

    // bwd[l][node] = bitmask of outputs reachable from that neuron.
    std::vector<std::vector<uint64_t>> bwd(L + 1);
    bwd[L].assign(static_cast<size_t>(n_out) * out_words, 0);
    for (int o = 0; o < n_out; ++o) bwd[L][static_cast<size_t>(o) * out_words + o / 64] |= 1ULL << (o % 64);
    for (int l = L - 1; l >= 0; --l) {
        bwd[l].assign(static_cast<size_t>(t.layer_widths[l]) * out_words, 0);
        for (const Edge& e : t.layers[l])
            for (int w = 0; w < out_words; ++w)
                bwd[l][static_cast<size_t>(e.src) * out_words + w] |=
                    bwd[l + 1][static_cast<size_t>(e.dst) * out_words + w];
    }

    std::vector<std::vector<int>> adj_by_pair(static_cast<size_t>(n_in) * n_out);
    int edge_id = 0;
    for (int l = 0; l < L; ++l) {
        for (const Edge& e : t.layers[l]) {
            if (e.kind != EdgeKind::Trainable) continue;
            const uint64_t* in_bits = &fwd[l][static_cast<size_t>(e.src) * in_words];
            const uint64_t* out_bits = &bwd[l + 1][static_cast<size_t>(e.dst) * out_words];
            for (int iw = 0; iw < in_words; ++iw) {
                uint64_t ib = in_bits[iw];
                while (ib) {
                    const int i = iw * 64 + __builtin_ctzll(ib);
                    ib &= ib - 1;
                    for (int ow = 0; ow < out_words; ++ow) {
                        uint64_t ob = out_bits[ow];
                        while (ob) {
                            const int o = ow * 64 + __builtin_ctzll(ob);
                            ob &= ob - 1;
                            adj_by_pair[static_cast<size_t>(i) * n_out + o].push_back(edge_id);
                        }
                    }
                }
            }
            ++edge_id;
        }
    }

    ConstraintGraph g;
    g.n_in = n_in;
    g.n_out = n_out;
    g.n_trainable_edges = edge_id;
    for (int i = 0; i < n_in; ++i) {
        for (int o = 0; o < n_out; ++o) {
            const bool reachable =
                (fwd[L][static_cast<size_t>(o) * in_words + i / 64] >> (i % 64)) & 1ULL;
            if (!reachable) continue;
            ++g.reachable_pairs;
            auto& adj = adj_by_pair[static_cast<size_t>(i) * n_out + o];
            if (adj.empty()) {
                ++g.empty_adjacency;
                continue;
            }
            g.constraints.emplace_back(i, o);
            g.adjacency.push_back(std::move(adj));
        }
    }
    return g;
}

/// Maximum bipartite matching between constraints and trainable edges
/// (Hopcroft-Karp).
inline int max_matching(const ConstraintGraph& g) {
    const int nl = static_cast<int>(g.constraints.size());
    const int nr = static_cast<int>(g.n_trainable_edges);
    constexpr int kInf = std::numeric_limits<int>::max();
    std::vector<int> match_l(nl, -1), match_r(nr, -1), dist(nl);

    auto bfs = [&]() {
        std::queue<int> q;
        bool found = false;
        for (int u = 0; u < nl; ++u) {
            if (match_l[u] == -1) {
                dist[u] = 0;
                q.push(u);
            } else {
                dist[u] = kInf;
            }
        }
        while (!q.empty()) {
            const int u = q.front();
            q.pop();
            for (int v : g.adjacency[u]) {
                const int w = match_r[v];
                if (w == -1) {
                    found = true;
                } else if (dist[w] == kInf) {
                    dist[w] = dist[u] + 1;
                    q.push(w);
                }
            }
        }
        return found;
    };

    std::function<bool(int)> dfs = [&](int u) {
        for (int v : g.adjacency[u]) {
            const int w = match_r[v];
            if (w == -1 || (dist[w] == dist[u] + 1 && dfs(w))) {
                match_l[u] = v;
                match_r[v] = u;
                return true;
            }
        }
        dist[u] = kInf;
        return false;
    };

    int matched = 0;
    while (bfs())
        for (int u = 0; u < nl; ++u)
            if (match_l[u] == -1 && dfs(u)) ++matched;
    return matched;
}

}  // namespace cascade
