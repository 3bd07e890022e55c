#pragma once

#include <vector>

#include "cascade/topology.hpp"

namespace cascade {

/// Per-edge values aligned 1:1 with Topology::layers. Constant edges
/// carry their fixed value and are never updated by training.
template <typename Real>
struct CascadeWeights {
    std::vector<std::vector<Real>> values;
};

/// Weight storage for `t` with constant edges filled in and trainable
/// edges zeroed.
template <typename Real>
CascadeWeights<Real> make_weights(const Topology& t) {
    CascadeWeights<Real> w;
    w.values.resize(t.layers.size());
    for (size_t l = 0; l < t.layers.size(); ++l) {
        w.values[l].resize(t.layers[l].size(), Real(0));
        for (size_t i = 0; i < t.layers[l].size(); ++i)
            if (t.layers[l][i].kind == EdgeKind::Constant)
                w.values[l][i] = static_cast<Real>(t.layers[l][i].value);
    }
    return w;
}

}  // namespace cascade
