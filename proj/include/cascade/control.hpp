#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "cascade/errors.hpp"
#include "cascade/matrix.hpp"
#include "cascade/rng.hpp"
#include "cascade/topology.hpp"

namespace cascade {

namespace detail {

template <typename Real>
Real softplus(Real x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Real>
Real sigmoid(Real x) {
    return x > 0 ? Real(1) / (Real(1) + std::exp(-x)) : std::exp(x) / (Real(1) + std::exp(x));
}

}  // namespace detail

/// The pairwise contraction propagating controllability through one
/// layer's ratio splits: out(i,j,k) = sum_m C(i,j,m) R(i,j,k,m).
/// Dense form; the trainer uses an equivalent edge-sparse path.
template <typename Real>
Tensor3<Real> diamond(const Tensor3<Real>& c, const Tensor4<Real>& r) {
    if (r.d0 != c.d0 || r.d1 != c.d1 || r.d3 != c.d2)
        throw std::invalid_argument("diamond: shape mismatch");
    Tensor3<Real> out(c.d0, c.d1, r.d2);
    for (int i = 0; i < c.d0; ++i)
        for (int j = 0; j < c.d1; ++j)
            for (int k = 0; k < r.d2; ++k) {
                Real acc = 0;
                for (int m = 0; m < c.d2; ++m) acc += c(i, j, m) * r(i, j, k, m);
                out(i, j, k) = acc;
            }
    return out;
}

/// Per-output deficit loss: sum_k ((n_in - 1) - sum_ij C(i,j,k))^2.
template <typename Real>
Real control_loss(const Tensor3<Real>& c_last, int n_in) {
    Real loss = 0;
    for (int k = 0; k < c_last.d2; ++k) {
        Real total = 0;
        for (int i = 0; i < c_last.d0; ++i)
            for (int j = 0; j < c_last.d1; ++j) total += c_last(i, j, k);
        const Real deficit = Real(n_in - 1) - total;
        loss += deficit * deficit;
    }
    return loss;
}

/// Controllability analysis state for one topology: the free parameters
/// behind the ratio splits R (softmax over each source's out-edges) and
/// the added controllability dC (softplus, rescaled into the per-neuron
/// budget min(t, k-1)).
template <typename Real>
struct ControlState {
    struct EdgeRef {
        int src = 0;
        int dst = 0;
    };
    struct LayerInfo {
        std::vector<EdgeRef> edges;               // canonical order
        std::vector<std::vector<int>> out_edges;  // per source neuron
        std::vector<int> cap;                     // per destination neuron
        std::vector<int> dc_index;                // per destination; -1 when cap = 0
        int n_capped = 0;
    };

    Topology topology;
    std::vector<LayerInfo> info;
    /// Ordered pair ids (a*n0+b, a != b) whose inputs both reach the
    /// node, per layer and node. Controllability is zero outside these:
    /// a neuron cannot set a ratio between signals that never arrive at
    /// it, so dC is restricted to them and every loop skips the rest.
    std::vector<std::vector<std::vector<int>>> node_pairs;
    /// Free ratio parameters, [layer][edge * P + pair].
    std::vector<std::vector<Real>> r_params;
    /// Free added-controllability parameters, [layer][dc_index * P + pair].
    std::vector<std::vector<Real>> dc_params;

    int n_inputs() const { return topology.n_in(); }
    int n_pairs() const { return topology.n_in() * topology.n_in(); }
    /// Pairs dC may claim at destination neuron k of layer l.
    const std::vector<int>& allowed_pairs(int layer, int dst) const {
        return node_pairs[layer + 1][dst];
    }
};

/// Intermediate values of one propagate pass, kept for the backward pass.
template <typename Real>
struct ControlWorkspace {
    /// Controllability per layer, [layer][node * P + pair]; c[0] = 0.
    std::vector<std::vector<Real>> c;
    /// Softmax-normalized ratio splits, [layer][edge * P + pair].
    std::vector<std::vector<Real>> r_values;
    /// Pre-clamp controllability (diamond + dC), [layer][node * P + pair].
    std::vector<std::vector<Real>> pre;
    /// Softplus mass per capped destination, [layer][dc_index].
    std::vector<std::vector<Real>> dc_mass;
};

template <typename Real>
ControlState<Real> make_control_state(const Topology& t, uint64_t seed) {
    ControlState<Real> st;
    st.topology = t;
    const int P = st.n_pairs();
    st.info.resize(t.layers.size());
    st.r_params.resize(t.layers.size());
    st.dc_params.resize(t.layers.size());

    // Forward reachability: which inputs feed each neuron.
    const int n0 = t.n_in();
    const int words = (n0 + 63) / 64;
    std::vector<uint64_t> reach(static_cast<size_t>(n0) * words, 0);
    for (int i = 0; i < n0; ++i) reach[static_cast<size_t>(i) * words + i / 64] = 1ULL << (i % 64);

    auto pairs_of = [&](const uint64_t* bits) {
        std::vector<int> inputs;
        for (int i = 0; i < n0; ++i)
            if ((bits[i / 64] >> (i % 64)) & 1ULL) inputs.push_back(i);
        std::vector<int> pairs;
        pairs.reserve(inputs.size() * (inputs.size() - 1));
        for (int a : inputs)
            for (int b : inputs)
                if (a != b) pairs.push_back(a * n0 + b);
        return pairs;
    };

    st.node_pairs.resize(t.layers.size() + 1);
    st.node_pairs[0].resize(t.layer_widths[0]);
    for (int i = 0; i < n0; ++i)
        st.node_pairs[0][i] = pairs_of(&reach[static_cast<size_t>(i) * words]);

    Rng rng(seed);
    for (size_t l = 0; l < t.layers.size(); ++l) {
        auto& li = st.info[l];
        li.out_edges.resize(t.layer_widths[l]);
        std::vector<int> k_in(t.layer_widths[l + 1], 0), t_in(t.layer_widths[l + 1], 0);
        std::vector<uint64_t> reach_next(static_cast<size_t>(t.layer_widths[l + 1]) * words, 0);
        for (size_t i = 0; i < t.layers[l].size(); ++i) {
            const Edge& e = t.layers[l][i];
            li.edges.push_back({e.src, e.dst});
            li.out_edges[e.src].push_back(static_cast<int>(i));
            ++k_in[e.dst];
            if (e.kind == EdgeKind::Trainable) ++t_in[e.dst];
            for (int w = 0; w < words; ++w)
                reach_next[static_cast<size_t>(e.dst) * words + w] |=
                    reach[static_cast<size_t>(e.src) * words + w];
        }
        li.cap.resize(t.layer_widths[l + 1]);
        li.dc_index.assign(t.layer_widths[l + 1], -1);
        st.node_pairs[l + 1].resize(t.layer_widths[l + 1]);
        for (int k = 0; k < t.layer_widths[l + 1]; ++k) {
            st.node_pairs[l + 1][k] = pairs_of(&reach_next[static_cast<size_t>(k) * words]);
            li.cap[k] = t_in[k] >= 1 ? std::min(t_in[k], k_in[k] - 1) : 0;
            if (li.cap[k] > 0) li.dc_index[k] = li.n_capped++;
        }
        reach = std::move(reach_next);

        st.r_params[l].resize(li.edges.size() * static_cast<size_t>(P));
        for (auto& v : st.r_params[l]) v = static_cast<Real>(rng.uniform(-0.1, 0.1));
        st.dc_params[l].resize(static_cast<size_t>(li.n_capped) * P);
        for (auto& v : st.dc_params[l]) v = static_cast<Real>(rng.uniform(-2.0, -1.0));
    }
    return st;
}

/// Layer-by-layer propagation: softmax ratio splits, sparse diamond,
/// budgeted dC, clamp to [0,1], then the pairwise rescale keeping
/// C(a/b) + C(b/a) <= 1. Diagonal pairs stay pinned at 0.
template <typename Real>
ControlWorkspace<Real> propagate_control(const ControlState<Real>& st) {
    const Topology& t = st.topology;
    const int n0 = st.n_inputs();
    const int P = st.n_pairs();
    const int L = t.depth();

    ControlWorkspace<Real> ws;
    ws.c.resize(L + 1);
    ws.r_values.resize(L);
    ws.pre.resize(L);
    ws.dc_mass.resize(L);
    ws.c[0].assign(static_cast<size_t>(t.layer_widths[0]) * P, Real(0));

    for (int l = 0; l < L; ++l) {
        const auto& li = st.info[l];
        const auto& rp = st.r_params[l];
        const int width_next = t.layer_widths[l + 1];
        ws.r_values[l].assign(rp.size(), Real(0));
        ws.pre[l].assign(static_cast<size_t>(width_next) * P, Real(0));
        ws.dc_mass[l].assign(li.n_capped, Real(0));

        // Ratio splits: normalized exponential over each source's
        // out-edges, computed only where the source can carry control.
        for (size_t m = 0; m < li.out_edges.size(); ++m) {
            const auto& out = li.out_edges[m];
            if (out.empty()) continue;
            if (out.size() == 1) {
                for (int p : st.node_pairs[l][m])
                    ws.r_values[l][static_cast<size_t>(out[0]) * P + p] = Real(1);
            } else if (out.size() == 2) {
                const Real* r0 = &rp[static_cast<size_t>(out[0]) * P];
                const Real* r1 = &rp[static_cast<size_t>(out[1]) * P];
                Real* v0 = &ws.r_values[l][static_cast<size_t>(out[0]) * P];
                Real* v1 = &ws.r_values[l][static_cast<size_t>(out[1]) * P];
                for (int p : st.node_pairs[l][m]) {
                    const Real a = detail::sigmoid(r0[p] - r1[p]);
                    v0[p] = a;
                    v1[p] = Real(1) - a;
                }
            } else {
                for (int p : st.node_pairs[l][m]) {
                    Real mx = rp[static_cast<size_t>(out[0]) * P + p];
                    for (size_t e = 1; e < out.size(); ++e)
                        mx = std::max(mx, rp[static_cast<size_t>(out[e]) * P + p]);
                    Real denom = 0;
                    for (size_t e = 0; e < out.size(); ++e) {
                        const Real v = std::exp(rp[static_cast<size_t>(out[e]) * P + p] - mx);
                        ws.r_values[l][static_cast<size_t>(out[e]) * P + p] = v;
                        denom += v;
                    }
                    for (size_t e = 0; e < out.size(); ++e)
                        ws.r_values[l][static_cast<size_t>(out[e]) * P + p] /= denom;
                }
            }
        }

        // Sparse diamond into pre.
        for (size_t ei = 0; ei < li.edges.size(); ++ei) {
            const Real* c_src = &ws.c[l][static_cast<size_t>(li.edges[ei].src) * P];
            const Real* r_e = &ws.r_values[l][ei * static_cast<size_t>(P)];
            Real* dst = &ws.pre[l][static_cast<size_t>(li.edges[ei].dst) * P];
            for (int p : st.node_pairs[l][li.edges[ei].src]) dst[p] += c_src[p] * r_e[p];
        }

        // Added controllability, rescaled into each destination's budget
        // and restricted to pairs of inputs that reach the neuron.
        for (int k = 0; k < width_next; ++k) {
            const int ci = li.dc_index[k];
            if (ci < 0) continue;
            const Real* params = &st.dc_params[l][static_cast<size_t>(ci) * P];
            Real total = 0;
            for (int p : st.allowed_pairs(l, k)) total += detail::softplus(params[p]);
            ws.dc_mass[l][ci] = total;
            const Real cap = static_cast<Real>(li.cap[k]);
            const Real scale = total > cap ? cap / total : Real(1);
            Real* dst = &ws.pre[l][static_cast<size_t>(k) * P];
            for (int p : st.allowed_pairs(l, k)) dst[p] += scale * detail::softplus(params[p]);
        }

        // Clamp and pairwise rescale; pre is zero outside the node's
        // active pairs, which come in (a,b)/(b,a) couples.
        ws.c[l + 1].assign(static_cast<size_t>(width_next) * P, Real(0));
        for (int k = 0; k < width_next; ++k) {
            const Real* pk = &ws.pre[l][static_cast<size_t>(k) * P];
            Real* ck = &ws.c[l + 1][static_cast<size_t>(k) * P];
            for (int p : st.node_pairs[l + 1][k]) {
                const int a = p / n0, b = p % n0;
                if (a > b) continue;
                const int q = b * n0 + a;
                const Real u = std::min(std::max(pk[p], Real(0)), Real(1));
                const Real v = std::min(std::max(pk[q], Real(0)), Real(1));
                const Real d = u + v;
                if (d > Real(1)) {
                    ck[p] = u / d;
                    ck[q] = v / d;
                } else {
                    ck[p] = u;
                    ck[q] = v;
                }
            }
        }
    }
    return ws;
}

/// Final-layer controllability tensor C^L with shape (n0, n0, n_out).
template <typename Real>
Tensor3<Real> propagate(const ControlState<Real>& st) {
    const auto ws = propagate_control(st);
    const int n0 = st.n_inputs();
    const int n_out = st.topology.n_out();
    Tensor3<Real> out(n0, n0, n_out);
    for (int k = 0; k < n_out; ++k)
        for (int i = 0; i < n0; ++i)
            for (int j = 0; j < n0; ++j)
                out(i, j, k) = ws.c.back()[static_cast<size_t>(k) * n0 * n0 + i * n0 + j];
    return out;
}

template <typename Real>
struct ControlGradients {
    std::vector<std::vector<Real>> r_grads;
    std::vector<std::vector<Real>> dc_grads;
};

/// Reverse pass of propagate_control starting from dLoss/dC^L.
template <typename Real>
ControlGradients<Real> backward_control(const ControlState<Real>& st,
                                        const ControlWorkspace<Real>& ws,
                                        std::vector<Real> gc_last) {
    const Topology& t = st.topology;
    const int n0 = st.n_inputs();
    const int P = st.n_pairs();

    ControlGradients<Real> g;
    g.r_grads.resize(t.layers.size());
    g.dc_grads.resize(t.layers.size());

    std::vector<Real> gc = std::move(gc_last);  // grad of ws.c[l+1]
    for (int l = t.depth() - 1; l >= 0; --l) {
        const auto& li = st.info[l];
        const int width_next = t.layer_widths[l + 1];
        g.r_grads[l].assign(st.r_params[l].size(), Real(0));
        g.dc_grads[l].assign(st.dc_params[l].size(), Real(0));
        std::vector<Real> gpre(static_cast<size_t>(width_next) * P, Real(0));

        // Pairwise rescale and clamp.
        for (int k = 0; k < width_next; ++k) {
            const Real* pk = &ws.pre[l][static_cast<size_t>(k) * P];
            const Real* gck = &gc[static_cast<size_t>(k) * P];
            Real* gpk = &gpre[static_cast<size_t>(k) * P];
            for (int p : st.node_pairs[l + 1][k]) {
                const int a = p / n0, b = p % n0;
                if (a > b) continue;
                const int q = b * n0 + a;
                const Real u = std::min(std::max(pk[p], Real(0)), Real(1));
                const Real v = std::min(std::max(pk[q], Real(0)), Real(1));
                const Real d = u + v;
                Real gu, gv;
                if (d > Real(1)) {
                    gu = (gck[p] - gck[q]) * v / (d * d);
                    gv = (gck[q] - gck[p]) * u / (d * d);
                } else {
                    gu = gck[p];
                    gv = gck[q];
                }
                gpk[p] = pk[p] < Real(1) ? gu : Real(0);
                gpk[q] = pk[q] < Real(1) ? gv : Real(0);
            }
        }

        // dC budget rescale back to the free parameters.
        for (int k = 0; k < width_next; ++k) {
            const int ci = li.dc_index[k];
            if (ci < 0) continue;
            const Real* params = &st.dc_params[l][static_cast<size_t>(ci) * P];
            const Real* gpk = &gpre[static_cast<size_t>(k) * P];
            Real* gout = &g.dc_grads[l][static_cast<size_t>(ci) * P];
            const Real total = ws.dc_mass[l][ci];
            const Real cap = static_cast<Real>(li.cap[k]);
            if (total > cap) {
                // dc_p = cap * s_p / total.
                Real dot = 0;
                for (int p : st.allowed_pairs(l, k)) dot += gpk[p] * detail::softplus(params[p]);
                for (int p : st.allowed_pairs(l, k)) {
                    const Real gs = cap / total * gpk[p] - cap / (total * total) * dot;
                    gout[p] = gs * detail::sigmoid(params[p]);
                }
            } else {
                for (int p : st.allowed_pairs(l, k))
                    gout[p] = gpk[p] * detail::sigmoid(params[p]);
            }
        }

        // Diamond back to C_l and the normalized splits.
        std::vector<Real> gc_prev(static_cast<size_t>(t.layer_widths[l]) * P, Real(0));
        std::vector<Real> gr(ws.r_values[l].size(), Real(0));
        for (size_t ei = 0; ei < li.edges.size(); ++ei) {
            const Real* c_src = &ws.c[l][static_cast<size_t>(li.edges[ei].src) * P];
            const Real* r_e = &ws.r_values[l][ei * static_cast<size_t>(P)];
            const Real* gpk = &gpre[static_cast<size_t>(li.edges[ei].dst) * P];
            Real* gcs = &gc_prev[static_cast<size_t>(li.edges[ei].src) * P];
            Real* gre = &gr[ei * static_cast<size_t>(P)];
            for (int p : st.node_pairs[l][li.edges[ei].src]) {
                gcs[p] += gpk[p] * r_e[p];
                gre[p] += gpk[p] * c_src[p];
            }
        }

        // Softmax back to the free ratio parameters.
        for (size_t m = 0; m < li.out_edges.size(); ++m) {
            const auto& out = li.out_edges[m];
            if (out.empty()) continue;
            for (int p : st.node_pairs[l][m]) {
                Real dot = 0;
                for (int e : out)
                    dot += ws.r_values[l][static_cast<size_t>(e) * P + p] *
                           gr[static_cast<size_t>(e) * P + p];
                for (int e : out) {
                    const Real r = ws.r_values[l][static_cast<size_t>(e) * P + p];
                    g.r_grads[l][static_cast<size_t>(e) * P + p] =
                        r * (gr[static_cast<size_t>(e) * P + p] - dot);
                }
            }
        }

        gc = std::move(gc_prev);
    }
    return g;
}

/// Loss over a propagated workspace plus the seed gradient for backward.
template <typename Real>
Real control_loss_and_grad(const ControlState<Real>& st, const ControlWorkspace<Real>& ws,
                           std::vector<Real>* gc_last) {
    const int n0 = st.n_inputs();
    const int P = st.n_pairs();
    const int n_out = st.topology.n_out();
    const auto& c_last = ws.c.back();
    Real loss = 0;
    if (gc_last) gc_last->assign(c_last.size(), Real(0));
    for (int k = 0; k < n_out; ++k) {
        Real total = 0;
        for (int p = 0; p < P; ++p) total += c_last[static_cast<size_t>(k) * P + p];
        const Real deficit = Real(n0 - 1) - total;
        loss += deficit * deficit;
        if (gc_last) {
            const Real gk = Real(-2) * deficit;
            for (int a = 0; a < n0; ++a)
                for (int b = 0; b < n0; ++b)
                    if (a != b) (*gc_last)[static_cast<size_t>(k) * P + a * n0 + b] = gk;
        }
    }
    return loss;
}

/// Plain gradient descent on the controllability loss over the free R
/// and dC parameters. Deterministic under seed.
template <typename Real>
ControlState<Real> train_control(const Topology& t, int iters, Real lr, uint64_t seed) {
    if (iters < 0) throw std::invalid_argument("iters must be >= 0");
    ControlState<Real> st = make_control_state<Real>(t, seed);
    for (int it = 0; it < iters; ++it) {
        auto ws = propagate_control(st);
        std::vector<Real> gc;
        const Real loss = control_loss_and_grad(st, ws, &gc);
        if (!std::isfinite(static_cast<double>(loss))) throw DivergedError(it);
        auto grads = backward_control(st, ws, std::move(gc));
        for (size_t l = 0; l < st.r_params.size(); ++l) {
            for (size_t i = 0; i < st.r_params[l].size(); ++i)
                st.r_params[l][i] -= lr * grads.r_grads[l][i];
            for (size_t i = 0; i < st.dc_params[l].size(); ++i)
                st.dc_params[l][i] -= lr * grads.dc_grads[l][i];
        }
    }
    return st;
}

struct KMatrix {
    Matrix<double> k;
    double mean = 0.0;
    double variance = 0.0;
};

/// Sums the controllability tensor over the second ratio index:
/// K(i, k) = sum_j C(i, j, k), with mean and population variance over
/// all entries.
template <typename Real>
KMatrix k_matrix(const Tensor3<Real>& c_last) {
    KMatrix km;
    km.k = Matrix<double>(c_last.d0, c_last.d2);
    for (int i = 0; i < c_last.d0; ++i)
        for (int k = 0; k < c_last.d2; ++k) {
            double acc = 0;
            for (int j = 0; j < c_last.d1; ++j) acc += static_cast<double>(c_last(i, j, k));
            km.k(i, k) = acc;
        }
    const size_t n = km.k.data.size();
    for (double v : km.k.data) km.mean += v;
    km.mean /= static_cast<double>(n);
    for (double v : km.k.data) km.variance += (v - km.mean) * (v - km.mean);
    km.variance /= static_cast<double>(n);
    return km;
}

/// Checks every ControlState invariant on a fresh propagation; throws
/// std::logic_error naming the first violation.
template <typename Real>
void validate_state(const ControlState<Real>& st, Real tol = Real(1e-9)) {
    const Topology& t = st.topology;
    const int n0 = st.n_inputs();
    const int P = st.n_pairs();
    const auto ws = propagate_control(st);

    for (Real v : ws.c[0])
        if (v != Real(0)) throw std::logic_error("C^0 must be zero");
    for (int l = 0; l <= t.depth(); ++l) {
        for (int k = 0; k < t.layer_widths[l]; ++k) {
            const Real* ck = &ws.c[l][static_cast<size_t>(k) * P];
            for (int a = 0; a < n0; ++a) {
                if (ck[a * n0 + a] != Real(0))
                    throw std::logic_error("diagonal pair not pinned to zero");
                for (int b = a + 1; b < n0; ++b) {
                    const Real u = ck[a * n0 + b], v = ck[b * n0 + a];
                    if (u < -tol || v < -tol) throw std::logic_error("negative controllability");
                    if (u + v > Real(1) + tol)
                        throw std::logic_error("pair sum exceeds 1");
                }
            }
        }
    }
    for (int l = 0; l < t.depth(); ++l) {
        const auto& li = st.info[l];
        for (size_t m = 0; m < li.out_edges.size(); ++m) {
            const auto& out = li.out_edges[m];
            if (out.empty()) continue;
            // Splits form a simplex on the source's active pairs and are
            // absent (zero) elsewhere.
            std::vector<bool> active(P, false);
            for (int p : st.node_pairs[l][m]) active[p] = true;
            for (int p = 0; p < P; ++p) {
                Real sum = 0;
                for (int e : out) {
                    const Real r = ws.r_values[l][static_cast<size_t>(e) * P + p];
                    if (r < -tol || r > Real(1) + tol)
                        throw std::logic_error("ratio split outside [0,1]");
                    sum += r;
                }
                if (active[p] && std::abs(sum - Real(1)) > tol)
                    throw std::logic_error("ratio splits do not sum to 1");
                if (!active[p] && sum != Real(0))
                    throw std::logic_error("ratio split on a control-free pair");
            }
        }
        for (int k = 0; k < t.layer_widths[l + 1]; ++k) {
            const int ci = li.dc_index[k];
            if (ci < 0) continue;
            const Real* params = &st.dc_params[l][static_cast<size_t>(ci) * P];
            Real total = 0;
            for (int p : st.allowed_pairs(l, k)) total += detail::softplus(params[p]);
            const Real cap = static_cast<Real>(li.cap[k]);
            const Real scale = total > cap ? cap / total : Real(1);
            if (total * scale > cap + tol) throw std::logic_error("dC budget exceeded");
        }
    }
}

}  // namespace cascade
