// Shared test fixtures: tiny worked-example graphs and matrix helpers.
#pragma once

#include "cascade/matrix.hpp"
#include "cascade/rng.hpp"
#include "cascade/topology.hpp"

namespace fixtures {

inline cascade::Matrix<double> gaussian_matrix(int rows, int cols, uint64_t seed) {
    cascade::Matrix<double> m(rows, cols);
    cascade::Rng rng(seed);
    for (auto& v : m.data) v = rng.gaussian();
    return m;
}

/// Two inputs funneled through one neuron into two outputs.
inline cascade::Topology cascade_212() {
    using cascade::EdgeKind;
    cascade::Topology t;
    t.name = "2-1-2";
    t.layer_widths = {2, 1, 2};
    t.layers = {{{0, 0, EdgeKind::Trainable, 0}, {1, 0, EdgeKind::Trainable, 0}},
                {{0, 0, EdgeKind::Trainable, 0}, {0, 1, EdgeKind::Trainable, 0}}};
    return t;
}

/// The decomposed 3-1-2 graph: inputs a, b meet at m; c joins m at n via
/// a constant pass-through; n fans out to both outputs. Six trainable
/// edges, six input-output constraints.
inline cascade::Topology graph_312() {
    using cascade::EdgeKind;
    cascade::Topology t;
    t.name = "3-1-2";
    t.layer_widths = {3, 2, 1, 2};
    t.layers = {{{0, 0, EdgeKind::Trainable, 0},
                 {1, 0, EdgeKind::Trainable, 0},
                 {2, 1, EdgeKind::Constant, 1.0}},
                {{0, 0, EdgeKind::Trainable, 0}, {1, 0, EdgeKind::Trainable, 0}},
                {{0, 0, EdgeKind::Trainable, 0}, {0, 1, EdgeKind::Trainable, 0}}};
    return t;
}

}  // namespace fixtures
