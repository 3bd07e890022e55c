#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cascade/errors.hpp"
#include "cascade/init.hpp"
#include "cascade/matrix.hpp"
#include "cascade/topology.hpp"
#include "cascade/weights.hpp"

namespace cascade {

enum class LossKind : uint8_t { L2, L1 };

struct TrainConfig {
    LossKind loss = LossKind::L2;
    double learning_rate = 0.05;
    int steps = 5000;
    uint64_t seed = 0;
    double epsilon_l0 = 1e-4;
    int record_every = 100;
};

struct ReconReport {
    double final_loss = 0.0;
    std::vector<std::pair<int, double>> loss_trace;
    long long l0_satisfied = 0;
    long long ratio_count = -1;  // -1 when no diagonal layer is present
    bool ratio_warning = false;
    long long trainable_params = 0;
    std::string topology_name;
    uint64_t seed = 0;
};

/// Linear propagation through the cascade; returns activations for every
/// layer including the input (depth + 1 matrices of shape n_l x batch).
template <typename Real>
std::vector<Matrix<Real>> forward_all(const CascadeWeights<Real>& w, const Topology& t,
                                      const Matrix<Real>& x) {
    if (x.rows != t.n_in()) throw std::invalid_argument("input rows must equal n_in");
    std::vector<Matrix<Real>> acts;
    acts.reserve(t.layers.size() + 1);
    acts.push_back(x);
    const int b = x.cols;
    for (size_t l = 0; l < t.layers.size(); ++l) {
        Matrix<Real> next(t.layer_widths[l + 1], b);
        const Matrix<Real>& cur = acts.back();
        for (size_t i = 0; i < t.layers[l].size(); ++i) {
            const Edge& e = t.layers[l][i];
            const Real wv = w.values[l][i];
            if (wv == Real(0)) continue;
            const Real* src_row = &cur.data[static_cast<size_t>(e.src) * b];
            Real* dst_row = &next.data[static_cast<size_t>(e.dst) * b];
            for (int c = 0; c < b; ++c) dst_row[c] += wv * src_row[c];
        }
        acts.push_back(std::move(next));
    }
    return acts;
}

template <typename Real>
Matrix<Real> forward(const CascadeWeights<Real>& w, const Topology& t, const Matrix<Real>& x) {
    return forward_all(w, t, x).back();
}

/// Backpropagates output-side deltas through the cascade; returns deltas
/// for every layer (delta[l] has shape n_l x batch, delta.back() = dout).
template <typename Real>
std::vector<Matrix<Real>> backward_all(const CascadeWeights<Real>& w, const Topology& t,
                                       const Matrix<Real>& dout) {
    if (dout.rows != t.n_out()) throw std::invalid_argument("delta rows must equal n_out");
    const int b = dout.cols;
    std::vector<Matrix<Real>> deltas(t.layers.size() + 1);
    deltas.back() = dout;
    for (int l = t.depth() - 1; l >= 0; --l) {
        Matrix<Real> prev(t.layer_widths[l], b);
        const Matrix<Real>& cur = deltas[l + 1];
        for (size_t i = 0; i < t.layers[l].size(); ++i) {
            const Edge& e = t.layers[l][i];
            const Real wv = w.values[l][i];
            if (wv == Real(0)) continue;
            const Real* dst_row = &cur.data[static_cast<size_t>(e.dst) * b];
            Real* src_row = &prev.data[static_cast<size_t>(e.src) * b];
            for (int c = 0; c < b; ++c) src_row[c] += wv * dst_row[c];
        }
        deltas[l] = std::move(prev);
    }
    return deltas;
}

/// The composed linear map of the cascade as an explicit n_out x n_in
/// matrix product of the per-layer matrices. This is a separate algebraic
/// route from forward(); tests compare the two.
template <typename Real>
Matrix<Real> effective_matrix(const CascadeWeights<Real>& w, const Topology& t) {
    Matrix<Real> e = Matrix<Real>::identity(t.n_in());
    for (size_t l = 0; l < t.layers.size(); ++l) {
        Matrix<Real> wl(t.layer_widths[l + 1], t.layer_widths[l]);
        for (size_t i = 0; i < t.layers[l].size(); ++i)
            wl(t.layers[l][i].dst, t.layers[l][i].src) = w.values[l][i];
        e = matmul(wl, e);
    }
    return e;
}

namespace detail {

template <typename Real>
Real loss_value(LossKind kind, const Matrix<Real>& target, const Matrix<Real>& out) {
    Real acc = 0;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const Real r = out.data[i] - target.data[i];
        acc += kind == LossKind::L2 ? r * r : std::abs(r);
    }
    return acc;
}

/// dLoss/d(out); the L1 subgradient at 0 is taken as 0.
template <typename Real>
Matrix<Real> loss_delta(LossKind kind, const Matrix<Real>& target, const Matrix<Real>& out) {
    Matrix<Real> d(out.rows, out.cols);
    for (size_t i = 0; i < out.data.size(); ++i) {
        const Real r = out.data[i] - target.data[i];
        d.data[i] = kind == LossKind::L2 ? Real(2) * r : Real((r > 0) - (r < 0));
    }
    return d;
}

}  // namespace detail

/// Loss gradient for every edge (trainable and constant alike) from the
/// stored activations and deltas: g = sum_b delta_{l+1}(dst) * a_l(src).
template <typename Real>
std::vector<std::vector<Real>> edge_gradients(const Topology& t,
                                              const std::vector<Matrix<Real>>& acts,
                                              const std::vector<Matrix<Real>>& deltas) {
    std::vector<std::vector<Real>> grads(t.layers.size());
    for (size_t l = 0; l < t.layers.size(); ++l) {
        grads[l].resize(t.layers[l].size(), Real(0));
        const int b = acts[l].cols;
        for (size_t i = 0; i < t.layers[l].size(); ++i) {
            const Edge& e = t.layers[l][i];
            const Real* src_row = &acts[l].data[static_cast<size_t>(e.src) * b];
            const Real* dst_row = &deltas[l + 1].data[static_cast<size_t>(e.dst) * b];
            Real g = 0;
            for (int c = 0; c < b; ++c) g += dst_row[c] * src_row[c];
            grads[l][i] = g;
        }
    }
    return grads;
}

/// Counts entries of |target - effective_matrix| strictly below eps.
template <typename Real>
long long count_l0_satisfied(const CascadeWeights<Real>& w, const Topology& t,
                             const Matrix<Real>& target, Real eps) {
    const Matrix<Real> e = effective_matrix(w, t);
    long long n = 0;
    for (size_t i = 0; i < e.data.size(); ++i)
        if (std::abs(e.data[i] - target.data[i]) < eps) ++n;
    return n;
}

struct RatioCount {
    long long count = 0;
    /// Set when fewer constraints were satisfied than there are outputs,
    /// i.e. training failed to solve all magnitude constraints.
    bool warning = false;
};

/// Ratio constraints satisfied: total satisfied minus the n_out magnitude
/// constraints, floored at zero.
inline RatioCount count_ratios(long long satisfied, int n_out) {
    RatioCount rc;
    if (satisfied < n_out) {
        rc.count = 0;
        rc.warning = true;
    } else {
        rc.count = satisfied - n_out;
    }
    return rc;
}

/// Appends a layer with a single trainable edge per output neuron. The
/// new layer can only learn magnitudes, never mix signals.
inline Topology append_diagonal_layer(const Topology& t) {
    Topology out = t;
    out.name = t.name + "+diag";
    const int n = t.n_out();
    out.layer_widths.push_back(n);
    std::vector<Edge> diag;
    for (int i = 0; i < n; ++i) diag.push_back({i, i, EdgeKind::Trainable, 0.0});
    out.layers.push_back(std::move(diag));
    return out;
}

/// True when the last layer is a pure one-to-one trainable diagonal.
inline bool has_diagonal_tail(const Topology& t) {
    if (t.layers.empty()) return false;
    const auto& last = t.layers.back();
    const int n = t.n_out();
    if (t.layer_widths[t.layer_widths.size() - 2] != n) return false;
    if (static_cast<int>(last.size()) != n) return false;
    for (int i = 0; i < n; ++i)
        if (last[i].src != i || last[i].dst != i || last[i].kind != EdgeKind::Trainable)
            return false;
    return true;
}

template <typename Real>
struct TrainResult {
    CascadeWeights<Real> weights;
    ReconReport report;
};

/// Full-batch gradient descent on || target - effective map ||, feeding
/// the identity matrix through the cascade so the output equals the
/// effective matrix column for column. Only trainable edges move.
template <typename Real>
TrainResult<Real> train_reconstruction(const Topology& t, const Matrix<Real>& target,
                                       const InitSpec& init, const TrainConfig& cfg) {
    if (target.rows != t.n_out() || target.cols != t.n_in())
        throw std::invalid_argument("target shape must be n_out x n_in");
    if (!(cfg.learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
    if (cfg.steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (!(cfg.epsilon_l0 > 0)) throw std::invalid_argument("epsilon_l0 must be > 0");

    TrainResult<Real> res;
    res.weights = init_weights<Real>(t, init);
    const Matrix<Real> x = Matrix<Real>::identity(t.n_in());
    const Real lr = static_cast<Real>(cfg.learning_rate);

    const int record_every = cfg.record_every > 0 ? cfg.record_every : 1;
    for (int step = 0; step < cfg.steps; ++step) {
        auto acts = forward_all(res.weights, t, x);
        const Real loss = detail::loss_value(cfg.loss, target, acts.back());
        if (!std::isfinite(static_cast<double>(loss))) throw DivergedError(step);
        if (step % record_every == 0)
            res.report.loss_trace.emplace_back(step, static_cast<double>(loss));

        auto deltas = backward_all(res.weights, t, detail::loss_delta(cfg.loss, target, acts.back()));
        auto grads = edge_gradients(t, acts, deltas);
        for (size_t l = 0; l < t.layers.size(); ++l)
            for (size_t i = 0; i < t.layers[l].size(); ++i)
                if (t.layers[l][i].kind == EdgeKind::Trainable)
                    res.weights.values[l][i] -= lr * grads[l][i];
    }

    const Real final_loss =
        detail::loss_value(cfg.loss, target, forward(res.weights, t, x));
    if (!std::isfinite(static_cast<double>(final_loss))) throw DivergedError(cfg.steps);
    res.report.loss_trace.emplace_back(cfg.steps, static_cast<double>(final_loss));
    res.report.final_loss = static_cast<double>(final_loss);
    res.report.l0_satisfied =
        count_l0_satisfied(res.weights, t, target, static_cast<Real>(cfg.epsilon_l0));
    if (has_diagonal_tail(t)) {
        const RatioCount rc = count_ratios(res.report.l0_satisfied, t.n_out());
        res.report.ratio_count = rc.count;
        res.report.ratio_warning = rc.warning;
    }
    res.report.trainable_params = trainable_edges(t);
    res.report.topology_name = t.name;
    res.report.seed = cfg.seed != 0 ? cfg.seed : init.seed;
    return res;
}

}  // namespace cascade
