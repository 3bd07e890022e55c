#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "cascade/rng.hpp"
#include "cascade/topology.hpp"
#include "cascade/weights.hpp"

namespace cascade {

enum class InitScheme : uint8_t {
    /// Uniform bound sqrt(6) / sqrt((n_in + n_out) (1 - s)); corrects the
    /// fan-in for the layer's realized sparsity.
    SparseXavier,
    /// Classic bound sqrt(6) / sqrt(n_in + n_out), ignoring sparsity.
    PlainXavier,
};

struct InitSpec {
    InitScheme scheme = InitScheme::SparseXavier;
    uint64_t seed = 0;
};

/// Uniform-draw bound for a layer with the given widths and sparsity.
inline double sparse_xavier_bound(int n_in, int n_out, double s) {
    if (s >= 1.0) throw std::invalid_argument("sparsity must be < 1 (zero fan-in)");
    return std::sqrt(6.0) / std::sqrt(static_cast<double>(n_in + n_out) * (1.0 - s));
}

/// Draws every trainable edge i.i.d. uniform in +-bound, where the bound
/// uses the layer's realized sparsity under SparseXavier and s = 0 under
/// PlainXavier. Constant edges keep their fixed values. Draws happen in
/// canonical edge order, so equal seeds give bit-identical weights.
template <typename Real>
CascadeWeights<Real> init_weights(const Topology& t, const InitSpec& spec) {
    CascadeWeights<Real> w = make_weights<Real>(t);
    Rng rng(spec.seed);
    for (size_t l = 0; l < t.layers.size(); ++l) {
        bool any_trainable = false;
        for (const Edge& e : t.layers[l])
            if (e.kind == EdgeKind::Trainable) any_trainable = true;
        if (!any_trainable) continue;

        const double s =
            spec.scheme == InitScheme::SparseXavier ? realized_sparsity(t, static_cast<int>(l)) : 0.0;
        const double bound =
            sparse_xavier_bound(t.layer_widths[l], t.layer_widths[l + 1], s);
        for (size_t i = 0; i < t.layers[l].size(); ++i)
            if (t.layers[l][i].kind == EdgeKind::Trainable)
                w.values[l][i] = static_cast<Real>(rng.uniform(-bound, bound));
    }
    return w;
}

}  // namespace cascade
