#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cascade/rng.hpp"

namespace cascade {

enum class EdgeKind : uint8_t { Trainable, Constant };

/// One connection between neuron `src` of layer l and neuron `dst` of
/// layer l+1. `value` is only meaningful for constant edges.
struct Edge {
    int src = 0;
    int dst = 0;
    EdgeKind kind = EdgeKind::Trainable;
    double value = 0.0;

    bool operator==(const Edge&) const = default;
};

/// A layered DAG of trainable and constant edges. Layer l of `layers`
/// connects layer_widths[l] source neurons to layer_widths[l+1]
/// destination neurons. Edges are kept sorted by (dst, src) so that
/// serialization and weight draws are byte-stable.
struct Topology {
    std::string name;
    std::vector<int> layer_widths;
    std::vector<std::vector<Edge>> layers;

    int depth() const { return static_cast<int>(layers.size()); }
    int n_in() const { return layer_widths.front(); }
    int n_out() const { return layer_widths.back(); }

    bool operator==(const Topology&) const = default;
};

inline long long total_edges(const Topology& t) {
    long long n = 0;
    for (const auto& l : t.layers) n += static_cast<long long>(l.size());
    return n;
}

inline long long trainable_edges(const Topology& t) {
    long long n = 0;
    for (const auto& l : t.layers)
        for (const auto& e : l)
            if (e.kind == EdgeKind::Trainable) ++n;
    return n;
}

inline long long constant_edges(const Topology& t) {
    return total_edges(t) - trainable_edges(t);
}

/// Realized sparsity of layer l: 1 - edges / (n_l * n_{l+1}).
/// Constant edges count, since they carry signal.
inline double realized_sparsity(const Topology& t, int layer) {
    const double possible =
        static_cast<double>(t.layer_widths[layer]) * t.layer_widths[layer + 1];
    return 1.0 - static_cast<double>(t.layers[layer].size()) / possible;
}

namespace detail {

inline void sort_layer(std::vector<Edge>& layer) {
    std::sort(layer.begin(), layer.end(), [](const Edge& a, const Edge& b) {
        return a.dst != b.dst ? a.dst < b.dst : a.src < b.src;
    });
}

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline int log2_exact(int n) {
    int b = 0;
    while ((1 << b) < n) ++b;
    return b;
}

}  // namespace detail

/// Checks the structural invariants; throws std::invalid_argument with a
/// description of the first violation.
inline void validate(const Topology& t) {
    if (t.layer_widths.size() < 2)
        throw std::invalid_argument("topology needs at least one layer");
    if (t.layers.size() + 1 != t.layer_widths.size())
        throw std::invalid_argument("layer count does not match widths");
    for (size_t i = 0; i < t.layer_widths.size(); ++i)
        if (t.layer_widths[i] <= 0)
            throw std::invalid_argument("zero-width layer at index " + std::to_string(i));
    for (size_t l = 0; l < t.layers.size(); ++l) {
        const Edge* prev = nullptr;
        for (const Edge& e : t.layers[l]) {
            if (e.src < 0 || e.src >= t.layer_widths[l] || e.dst < 0 ||
                e.dst >= t.layer_widths[l + 1])
                throw std::invalid_argument("edge index out of range in layer " +
                                            std::to_string(l));
            if (prev && prev->dst == e.dst && prev->src == e.src)
                throw std::invalid_argument("duplicate edge in layer " + std::to_string(l));
            if (prev && (e.dst < prev->dst || (e.dst == prev->dst && e.src < prev->src)))
                throw std::invalid_argument("edges not in canonical order in layer " +
                                            std::to_string(l));
            if (e.kind == EdgeKind::Constant && !std::isfinite(e.value))
                throw std::invalid_argument("non-finite constant edge value in layer " +
                                            std::to_string(l));
            prev = &e;
        }
    }
}

/// Random mask topology: every potential edge of every layer is present
/// independently with probability `density`. Hidden widths default to
/// max(n_in, n_out) when `hidden_width` is 0.
inline Topology gen_random(int n_in, int n_out, int depth, double density, uint64_t seed,
                           int hidden_width = 0) {
    if (n_in <= 0 || n_out <= 0) throw std::invalid_argument("zero-width layer");
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    if (!(density > 0.0) || density > 1.0)
        throw std::invalid_argument("density must be in (0, 1]");
    const int hidden = hidden_width > 0 ? hidden_width : std::max(n_in, n_out);

    Topology t;
    t.name = "random";
    t.layer_widths.push_back(n_in);
    for (int l = 1; l < depth; ++l) t.layer_widths.push_back(hidden);
    t.layer_widths.push_back(n_out);

    Rng rng(seed);
    t.layers.resize(depth);
    for (int l = 0; l < depth; ++l) {
        for (int dst = 0; dst < t.layer_widths[l + 1]; ++dst)
            for (int src = 0; src < t.layer_widths[l]; ++src)
                if (rng.uniform01() < density)
                    t.layers[l].push_back({src, dst, EdgeKind::Trainable, 0.0});
    }
    validate(t);
    return t;
}

/// Single fully-connected layer.
inline Topology gen_dense(int n_in, int n_out) {
    if (n_in <= 0 || n_out <= 0) throw std::invalid_argument("zero-width layer");
    Topology t;
    t.name = "dense";
    t.layer_widths = {n_in, n_out};
    t.layers.resize(1);
    for (int dst = 0; dst < n_out; ++dst)
        for (int src = 0; src < n_in; ++src)
            t.layers[0].push_back({src, dst, EdgeKind::Trainable, 0.0});
    return t;
}

/// Three-stage Clos network with r ingress/egress switch blocks and
/// n_mid middle crossbars. Hidden layers have n_mid*r neurons: neuron
/// (j, i) of the first hidden layer is input port i of middle switch j.
/// Total edges: n_mid * (n_in + n_out + r^2).
inline Topology gen_clos(int n_in, int n_out, int r, int n_mid) {
    if (n_in <= 0 || n_out <= 0 || r <= 0 || n_mid <= 0)
        throw std::invalid_argument("zero-width layer");
    if (n_in % r != 0 || n_out % r != 0)
        throw std::invalid_argument("r must divide both n_in and n_out");
    const int in_per_block = n_in / r;
    const int out_per_block = n_out / r;
    const int mid_width = n_mid * r;

    Topology t;
    t.name = "clos";
    t.layer_widths = {n_in, mid_width, mid_width, n_out};
    t.layers.resize(3);
    // Ingress: block b fully connects its inputs to one port per middle switch.
    for (int b = 0; b < r; ++b)
        for (int i = 0; i < in_per_block; ++i)
            for (int j = 0; j < n_mid; ++j)
                t.layers[0].push_back({b * in_per_block + i, j * r + b, EdgeKind::Trainable, 0.0});
    // Middle: each switch is an r x r crossbar.
    for (int j = 0; j < n_mid; ++j)
        for (int a = 0; a < r; ++a)
            for (int b = 0; b < r; ++b)
                t.layers[1].push_back({j * r + a, j * r + b, EdgeKind::Trainable, 0.0});
    // Egress mirrors ingress.
    for (int b = 0; b < r; ++b)
        for (int j = 0; j < n_mid; ++j)
            for (int o = 0; o < out_per_block; ++o)
                t.layers[2].push_back({j * r + b, b * out_per_block + o, EdgeKind::Trainable, 0.0});
    for (auto& l : t.layers) detail::sort_layer(l);
    validate(t);
    return t;
}

/// Radix-2 butterfly: stage t connects neuron i to i and to
/// i XOR 2^(t mod log2 n). Every neuron has exactly two in-edges.
inline Topology gen_butterfly(int n, int depth) {
    if (!detail::is_power_of_two(n)) throw std::invalid_argument("n must be a power of two");
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    const int bits = detail::log2_exact(n);

    Topology t;
    t.name = "butterfly";
    t.layer_widths.assign(depth + 1, n);
    t.layers.resize(depth);
    for (int l = 0; l < depth; ++l) {
        const int bit = 1 << (l % bits);
        for (int i = 0; i < n; ++i) {
            t.layers[l].push_back({i, i, EdgeKind::Trainable, 0.0});
            t.layers[l].push_back({i ^ bit, i, EdgeKind::Trainable, 0.0});
        }
        detail::sort_layer(t.layers[l]);
    }
    validate(t);
    return t;
}

/// Hypercube: every layer connects each neuron to itself and to all
/// log2(n) neighbors differing in exactly one address bit.
inline Topology gen_hypercube(int n, int depth) {
    if (!detail::is_power_of_two(n)) throw std::invalid_argument("n must be a power of two");
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    const int bits = detail::log2_exact(n);

    Topology t;
    t.name = "hypercube";
    t.layer_widths.assign(depth + 1, n);
    t.layers.resize(depth);
    for (int l = 0; l < depth; ++l) {
        for (int i = 0; i < n; ++i) {
            t.layers[l].push_back({i, i, EdgeKind::Trainable, 0.0});
            for (int b = 0; b < bits; ++b)
                t.layers[l].push_back({i ^ (1 << b), i, EdgeKind::Trainable, 0.0});
        }
        detail::sort_layer(t.layers[l]);
    }
    validate(t);
    return t;
}

/// 2D torus on rows x cols nodes: self plus the four wrap-around
/// neighbors per layer. When a dimension is 2 the two wrap neighbors
/// coincide and are deduplicated.
inline Topology gen_torus(int rows, int cols, int depth) {
    if (rows < 2 || cols < 2) throw std::invalid_argument("rows and cols must be >= 2");
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    const int n = rows * cols;

    Topology t;
    t.name = "torus";
    t.layer_widths.assign(depth + 1, n);
    t.layers.resize(depth);
    for (int l = 0; l < depth; ++l) {
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                const int dst = r * cols + c;
                std::vector<int> srcs = {dst,
                                         ((r + 1) % rows) * cols + c,
                                         ((r - 1 + rows) % rows) * cols + c,
                                         r * cols + (c + 1) % cols,
                                         r * cols + (c - 1 + cols) % cols};
                std::sort(srcs.begin(), srcs.end());
                srcs.erase(std::unique(srcs.begin(), srcs.end()), srcs.end());
                for (int src : srcs) t.layers[l].push_back({src, dst, EdgeKind::Trainable, 0.0});
            }
        }
        detail::sort_layer(t.layers[l]);
    }
    validate(t);
    return t;
}

/// Two fully-connected layers through a k-neuron bottleneck.
inline Topology gen_low_rank(int n_in, int n_out, int k) {
    if (n_in <= 0 || n_out <= 0 || k <= 0) throw std::invalid_argument("zero-width layer");
    Topology t;
    t.name = "low_rank";
    t.layer_widths = {n_in, k, n_out};
    t.layers.resize(2);
    for (int dst = 0; dst < k; ++dst)
        for (int src = 0; src < n_in; ++src)
            t.layers[0].push_back({src, dst, EdgeKind::Trainable, 0.0});
    for (int dst = 0; dst < n_out; ++dst)
        for (int src = 0; src < k; ++src)
            t.layers[1].push_back({src, dst, EdgeKind::Trainable, 0.0});
    return t;
}

/// p disjoint depth-d butterfly blocks over the same n inputs, with a
/// final constant-valued layer summing corresponding block outputs.
inline Topology gen_parallel_butterfly(int n, int d, int p) {
    if (!detail::is_power_of_two(n)) throw std::invalid_argument("n must be a power of two");
    if (d < 1 || p < 1) throw std::invalid_argument("d and p must be >= 1");
    const int bits = detail::log2_exact(n);

    Topology t;
    t.name = "parallel_butterfly";
    t.layer_widths.push_back(n);
    for (int l = 0; l < d; ++l) t.layer_widths.push_back(p * n);
    t.layer_widths.push_back(n);
    t.layers.resize(d + 1);
    for (int l = 0; l < d; ++l) {
        const int bit = 1 << (l % bits);
        for (int q = 0; q < p; ++q) {
            const int src_base = l == 0 ? 0 : q * n;
            for (int i = 0; i < n; ++i) {
                t.layers[l].push_back({src_base + i, q * n + i, EdgeKind::Trainable, 0.0});
                t.layers[l].push_back({src_base + (i ^ bit), q * n + i, EdgeKind::Trainable, 0.0});
            }
        }
        detail::sort_layer(t.layers[l]);
    }
    for (int q = 0; q < p; ++q)
        for (int i = 0; i < n; ++i)
            t.layers[d].push_back({q * n + i, i, EdgeKind::Constant, 1.0});
    detail::sort_layer(t.layers[d]);
    validate(t);
    return t;
}

/// Converts one in-edge per non-input neuron to a constant skip valued 1.
/// Neurons that already carry a constant-1 in-edge are left untouched,
/// which makes the operation idempotent. The in-edge with the smallest
/// source index is chosen; `seed` is reserved for a randomized strategy.
inline Topology apply_skip_connections(const Topology& t, uint64_t seed = 0) {
    (void)seed;
    Topology out = t;
    out.name = t.name + "+skip";
    for (size_t l = 0; l < out.layers.size(); ++l) {
        // Group in-edges per destination; layers are sorted by (dst, src),
        // so each destination's first edge has the smallest source.
        std::vector<int> first_edge(out.layer_widths[l + 1], -1);
        std::vector<bool> has_skip(out.layer_widths[l + 1], false);
        std::vector<bool> has_in(out.layer_widths[l + 1], false);
        for (size_t i = 0; i < out.layers[l].size(); ++i) {
            const Edge& e = out.layers[l][i];
            if (!has_in[e.dst]) {
                has_in[e.dst] = true;
                first_edge[e.dst] = static_cast<int>(i);
            }
            if (e.kind == EdgeKind::Constant && e.value == 1.0) has_skip[e.dst] = true;
        }
        for (int dst = 0; dst < out.layer_widths[l + 1]; ++dst) {
            if (!has_in[dst])
                throw std::invalid_argument("neuron " + std::to_string(dst) + " in layer " +
                                            std::to_string(l + 1) + " has no in-edges");
            if (has_skip[dst]) continue;
            Edge& e = out.layers[l][first_edge[dst]];
            e.kind = EdgeKind::Constant;
            e.value = 1.0;
        }
    }
    return out;
}

struct ConnectivityReport {
    long long reachable_pairs = 0;
    long long total_pairs = 0;
    double fraction = 0.0;
};

/// Exact (input, output) pair coverage by breadth-first sweep of the
/// layered DAG, carrying a bitmask of reached inputs per neuron.
inline ConnectivityReport connectivity(const Topology& t) {
    const int n_in = t.n_in();
    const int words = (n_in + 63) / 64;
    std::vector<uint64_t> reach(static_cast<size_t>(t.n_in()) * words, 0);
    for (int i = 0; i < n_in; ++i) reach[static_cast<size_t>(i) * words + i / 64] = 1ULL << (i % 64);

    std::vector<uint64_t> cur = reach;
    for (int l = 0; l < t.depth(); ++l) {
        std::vector<uint64_t> next(static_cast<size_t>(t.layer_widths[l + 1]) * words, 0);
        for (const Edge& e : t.layers[l])
            for (int w = 0; w < words; ++w)
                next[static_cast<size_t>(e.dst) * words + w] |=
                    cur[static_cast<size_t>(e.src) * words + w];
        cur = std::move(next);
    }

    ConnectivityReport rep;
    rep.total_pairs = static_cast<long long>(n_in) * t.n_out();
    for (int o = 0; o < t.n_out(); ++o)
        for (int w = 0; w < words; ++w)
            rep.reachable_pairs += __builtin_popcountll(cur[static_cast<size_t>(o) * words + w]);
    rep.fraction = static_cast<double>(rep.reachable_pairs) / static_cast<double>(rep.total_pairs);
    return rep;
}

struct ConvParamCounts {
    long long dense = 0;
    double decomposed = 0.0;
};

/// Parameter counts of a dense convolution (f^2 c k) versus its
/// depthwise + sparse-pointwise decomposition (f^2 c n + c n k t s).
inline ConvParamCounts conv_param_counts(int f, int c, int k, int n, int t, double s) {
    ConvParamCounts out;
    out.dense = static_cast<long long>(f) * f * c * k;
    out.decomposed = static_cast<double>(f) * f * c * n +
                     static_cast<double>(c) * n * k * t * s;
    return out;
}

}  // namespace cascade
