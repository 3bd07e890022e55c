#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cascade/control.hpp"
#include "cascade/engine.hpp"
#include "cascade/idx.hpp"
#include "cascade/io.hpp"
#include "cascade/matching.hpp"
#include "cascade/topology.hpp"

namespace cascade {

namespace detail {

/// Runs f(0..n-1) over `jobs` threads; results must be written into
/// pre-sized slots so the merge order never depends on scheduling.
template <typename F>
void parallel_for(int n, int jobs, F f) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(jobs, n);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) f(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace detail

/// Declarative topology constructor shared by the sweeps and the CLI.
struct TopoSpec {
    std::string family;  // dense|random|clos|butterfly|hypercube|torus|low_rank|parallel_butterfly
    int n_in = 32;
    int n_out = 32;
    int depth = 1;
    int rows = 8;
    int cols = 4;
    int r = 8;
    int n_mid = 9;
    int k = 4;
    int p = 1;
    double density = 0.5;
    int hidden_width = 0;
    uint64_t seed = 0;
    bool skip = false;

    Topology make() const {
        Topology t;
        if (family == "dense")
            t = gen_dense(n_in, n_out);
        else if (family == "random")
            t = gen_random(n_in, n_out, depth, density, seed, hidden_width);
        else if (family == "clos")
            t = gen_clos(n_in, n_out, r, n_mid);
        else if (family == "butterfly")
            t = gen_butterfly(n_in, depth);
        else if (family == "hypercube")
            t = gen_hypercube(n_in, depth);
        else if (family == "torus")
            t = gen_torus(rows, cols, depth);
        else if (family == "low_rank")
            t = gen_low_rank(n_in, n_out, k);
        else if (family == "parallel_butterfly")
            t = gen_parallel_butterfly(n_in, depth, p);
        else
            throw std::invalid_argument("unknown topology family '" + family + "'");
        if (skip) t = apply_skip_connections(t);
        return t;
    }
};

// ---------------------------------------------------------------------------
// Reconstruction sweep

struct SweepSpec {
    std::vector<TopoSpec> topologies;
    std::vector<uint64_t> seeds;
    TrainConfig train;
    InitScheme scheme = InitScheme::SparseXavier;
};

struct SweepRow {
    std::string topology;
    long long params = 0;  // trainable edges
    int depth = 0;
    bool skip = false;
    uint64_t seed = 0;
    double final_loss = 0.0;
    long long l0 = 0;
    int matching = 0;
};

/// One reconstruction run per (topology, seed) on a fresh Gaussian target
/// per seed, with the matching upper bound attached.
inline std::vector<SweepRow> run_recon_sweep(const SweepSpec& spec, int jobs = 1) {
    struct Cell {
        int topo;
        uint64_t seed;
    };
    std::vector<Topology> topologies;
    std::vector<int> matchings;
    for (const TopoSpec& ts : spec.topologies) {
        topologies.push_back(ts.make());
        matchings.push_back(max_matching(build_constraint_graph(topologies.back())));
    }
    std::vector<Cell> cells;
    for (size_t ti = 0; ti < topologies.size(); ++ti)
        for (uint64_t s : spec.seeds) cells.push_back({static_cast<int>(ti), s});

    std::vector<SweepRow> rows(cells.size());
    detail::parallel_for(static_cast<int>(cells.size()), jobs, [&](int i) {
        const Topology& t = topologies[cells[i].topo];
        const uint64_t seed = cells[i].seed;
        Matrix<double> target(t.n_out(), t.n_in());
        Rng rng(derive_seed(seed, 1));
        for (auto& v : target.data) v = rng.gaussian();
        TrainConfig cfg = spec.train;
        cfg.seed = seed;
        const InitSpec init{spec.scheme, derive_seed(seed, 2)};
        const auto res = train_reconstruction(t, target, init, cfg);
        rows[i] = {t.name,
                   res.report.trainable_params,
                   t.depth(),
                   spec.topologies[cells[i].topo].skip,
                   seed,
                   res.report.final_loss,
                   res.report.l0_satisfied,
                   matchings[cells[i].topo]};
    });
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "topology,params,depth,skip,seed,final_loss,l0,matching\n";
    for (const SweepRow& r : rows) {
        out += r.topology + ',' + std::to_string(r.params) + ',' + std::to_string(r.depth) +
               ',' + (r.skip ? "1" : "0") + ',' + std::to_string(r.seed) + ',' +
               format_real(r.final_loss) + ',' + std::to_string(r.l0) + ',' +
               std::to_string(r.matching) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Controllability study

struct ControlStudySpec {
    std::vector<TopoSpec> topologies;
    int iters = 1000;
    double lr = 0.1;
    std::vector<uint64_t> seeds;
};

struct ControlStudyRow {
    std::string name;
    long long edges = 0;
    long long trainable = 0;
    uint64_t seed = 0;
    double k_sum = 0.0;
    double k_mean = 0.0;
    double k_variance = 0.0;
};

struct ControlStudyResult {
    std::vector<ControlStudyRow> rows;
    /// K matrices in row order.
    std::vector<KMatrix> k_matrices;
};

inline ControlStudyResult run_control_study(const ControlStudySpec& spec, int jobs = 1) {
    struct Cell {
        int topo;
        uint64_t seed;
    };
    std::vector<Topology> topologies;
    for (const TopoSpec& ts : spec.topologies) topologies.push_back(ts.make());
    std::vector<Cell> cells;
    for (size_t ti = 0; ti < topologies.size(); ++ti)
        for (uint64_t s : spec.seeds) cells.push_back({static_cast<int>(ti), s});

    ControlStudyResult out;
    out.rows.resize(cells.size());
    out.k_matrices.resize(cells.size());
    detail::parallel_for(static_cast<int>(cells.size()), jobs, [&](int i) {
        const Topology& t = topologies[cells[i].topo];
        const auto st = train_control<double>(t, spec.iters, spec.lr, cells[i].seed);
        const KMatrix km = k_matrix(propagate(st));
        double total = 0;
        for (double v : km.k.data) total += v;
        out.rows[i] = {t.name,          total_edges(t), trainable_edges(t), cells[i].seed,
                       total,           km.mean,        km.variance};
        out.k_matrices[i] = km;
    });
    return out;
}

inline std::string control_summary_csv(const std::vector<ControlStudyRow>& rows) {
    std::string out = "topology,edges,trainable,seed,k_sum,k_mean,k_variance\n";
    for (const ControlStudyRow& r : rows) {
        out += r.name + ',' + std::to_string(r.edges) + ',' + std::to_string(r.trainable) +
               ',' + std::to_string(r.seed) + ',' + format_real(r.k_sum) + ',' +
               format_real(r.k_mean) + ',' + format_real(r.k_variance) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Depth x sparsity trainability grid

/// A fixed random dense one-hidden-layer network; labels are the argmax
/// of its outputs on random inputs. Stands in for a real dataset so the
/// grid needs no downloads.
struct SyntheticTeacher {
    uint64_t seed = 1;
    int n_in = 64;
    int n_classes = 10;
    int hidden = 32;
    int train_samples = 2048;
    int test_samples = 512;
};

struct ClassifyDataset {
    Matrix<double> x_train;  // n_in x N
    Matrix<double> x_test;
    std::vector<int> y_train;
    std::vector<int> y_test;
    int n_classes = 0;
};

inline ClassifyDataset make_teacher_dataset(const SyntheticTeacher& teacher) {
    Rng wrng(derive_seed(teacher.seed, 1));
    Matrix<double> w1(teacher.hidden, teacher.n_in), w2(teacher.n_classes, teacher.hidden);
    for (auto& v : w1.data) v = wrng.gaussian() / std::sqrt(static_cast<double>(teacher.n_in));
    for (auto& v : w2.data) v = wrng.gaussian() / std::sqrt(static_cast<double>(teacher.hidden));

    auto sample = [&](int n, uint64_t seed, Matrix<double>* x, std::vector<int>* y) {
        Rng rng(seed);
        *x = Matrix<double>(teacher.n_in, n);
        for (auto& v : x->data) v = rng.gaussian();
        const Matrix<double> logits = matmul(w2, matmul(w1, *x));
        y->resize(n);
        for (int c = 0; c < n; ++c) {
            int best = 0;
            for (int row = 1; row < logits.rows; ++row)
                if (logits(row, c) > logits(best, c)) best = row;
            (*y)[c] = best;
        }
    };
    ClassifyDataset d;
    d.n_classes = teacher.n_classes;
    sample(teacher.train_samples, derive_seed(teacher.seed, 2), &d.x_train, &d.y_train);
    sample(teacher.test_samples, derive_seed(teacher.seed, 3), &d.x_test, &d.y_test);
    return d;
}

inline ClassifyDataset make_idx_dataset(const IdxData& images, const IdxData& labels,
                                        int train_samples, int test_samples) {
    if (images.is_labels || !labels.is_labels)
        throw std::invalid_argument("need one image file and one label file");
    if (images.count != labels.count)
        throw std::invalid_argument("image and label counts differ");
    const int want = train_samples + test_samples;
    if (images.count < want)
        throw std::invalid_argument("dataset smaller than requested sample counts");
    ClassifyDataset d;
    d.n_classes = 10;
    const int dim = images.rows * images.cols;
    d.x_train = Matrix<double>(dim, train_samples);
    d.x_test = Matrix<double>(dim, test_samples);
    for (int c = 0; c < train_samples; ++c) {
        for (int px = 0; px < dim; ++px) d.x_train(px, c) = images.images(px, c);
        d.y_train.push_back(labels.labels[c]);
    }
    for (int c = 0; c < test_samples; ++c) {
        for (int px = 0; px < dim; ++px) d.x_test(px, c) = images.images(px, train_samples + c);
        d.y_test.push_back(labels.labels[train_samples + c]);
    }
    return d;
}

namespace detail {

/// Mean softmax cross-entropy and its delta at the logits.
inline double softmax_ce(const Matrix<double>& logits, const std::vector<int>& labels,
                         Matrix<double>* delta) {
    const int n = logits.cols;
    if (delta) *delta = Matrix<double>(logits.rows, logits.cols);
    double loss = 0;
    for (int c = 0; c < n; ++c) {
        double mx = logits(0, c);
        for (int row = 1; row < logits.rows; ++row) mx = std::max(mx, logits(row, c));
        double z = 0;
        for (int row = 0; row < logits.rows; ++row) z += std::exp(logits(row, c) - mx);
        loss += -(logits(labels[c], c) - mx - std::log(z));
        if (delta) {
            for (int row = 0; row < logits.rows; ++row) {
                const double p = std::exp(logits(row, c) - mx) / z;
                (*delta)(row, c) = (p - (row == labels[c] ? 1.0 : 0.0)) / n;
            }
        }
    }
    return loss / n;
}

inline double accuracy(const Matrix<double>& logits, const std::vector<int>& labels) {
    int hits = 0;
    for (int c = 0; c < logits.cols; ++c) {
        int best = 0;
        for (int row = 1; row < logits.rows; ++row)
            if (logits(row, c) > logits(best, c)) best = row;
        hits += best == labels[c] ? 1 : 0;
    }
    return static_cast<double>(hits) / logits.cols;
}

}  // namespace detail

/// Full-batch gradient descent with a softmax cross-entropy readout on
/// the cascade outputs (linear hidden activations). Returns the test
/// accuracy of the trained network.
template <typename Real = double>
double train_classifier(const Topology& t, const ClassifyDataset& d, const InitSpec& init,
                        int steps, double lr) {
    auto w = init_weights<Real>(t, init);
    Matrix<Real> x(d.x_train.rows, d.x_train.cols);
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<Real>(d.x_train.data[i]);
    for (int step = 0; step < steps; ++step) {
        const auto acts = forward_all(w, t, x);
        Matrix<double> logits(acts.back().rows, acts.back().cols);
        for (size_t i = 0; i < logits.data.size(); ++i)
            logits.data[i] = static_cast<double>(acts.back().data[i]);
        Matrix<double> delta;
        const double loss = detail::softmax_ce(logits, d.y_train, &delta);
        if (!std::isfinite(loss)) throw DivergedError(step);
        Matrix<Real> delta_r(delta.rows, delta.cols);
        for (size_t i = 0; i < delta.data.size(); ++i)
            delta_r.data[i] = static_cast<Real>(delta.data[i]);
        const auto deltas = backward_all(w, t, delta_r);
        const auto grads = edge_gradients(t, acts, deltas);
        for (size_t l = 0; l < t.layers.size(); ++l)
            for (size_t i = 0; i < t.layers[l].size(); ++i)
                if (t.layers[l][i].kind == EdgeKind::Trainable)
                    w.values[l][i] -= static_cast<Real>(lr) * grads[l][i];
    }
    Matrix<Real> xt(d.x_test.rows, d.x_test.cols);
    for (size_t i = 0; i < xt.data.size(); ++i) xt.data[i] = static_cast<Real>(d.x_test.data[i]);
    const auto out = forward(w, t, xt);
    Matrix<double> logits(out.rows, out.cols);
    for (size_t i = 0; i < logits.data.size(); ++i)
        logits.data[i] = static_cast<double>(out.data[i]);
    return detail::accuracy(logits, d.y_test);
}

struct GridSpec {
    int hidden_width = 256;
    std::vector<int> depths;        // hidden layer counts
    std::vector<double> sparsities; // each < 1; edge density is 1 - s
    InitScheme scheme = InitScheme::SparseXavier;
    SyntheticTeacher teacher;
    std::optional<ClassifyDataset> dataset;  // overrides the teacher when set
    int steps = 300;
    double lr = 0.5;
    std::vector<uint64_t> seeds;
};

struct GridRow {
    int depth = 0;
    double sparsity = 0.0;
    uint64_t seed = 0;
    double accuracy = 0.0;
    double connectivity = 0.0;
};

/// Random-topology cascades across the depth x sparsity grid; one row
/// per (depth, sparsity, seed) with test accuracy and the fraction of
/// connected input-output pairs.
inline std::vector<GridRow> run_grid(const GridSpec& spec, int jobs = 1) {
    for (double s : spec.sparsities)
        if (s >= 1.0) throw std::invalid_argument("sparsity must be < 1");
    const ClassifyDataset dataset =
        spec.dataset ? *spec.dataset : make_teacher_dataset(spec.teacher);

    struct Cell {
        int depth;
        double sparsity;
        uint64_t seed;
    };
    std::vector<Cell> cells;
    for (int d : spec.depths)
        for (double s : spec.sparsities)
            for (uint64_t seed : spec.seeds) cells.push_back({d, s, seed});

    std::vector<GridRow> rows(cells.size());
    detail::parallel_for(static_cast<int>(cells.size()), jobs, [&](int i) {
        const Cell& c = cells[i];
        const Topology t =
            gen_random(dataset.x_train.rows, dataset.n_classes, c.depth + 1, 1.0 - c.sparsity,
                       derive_seed(c.seed, 11), spec.hidden_width);
        const InitSpec init{spec.scheme, derive_seed(c.seed, 12)};
        const double acc = train_classifier<double>(t, dataset, init, spec.steps, spec.lr);
        rows[i] = {c.depth, c.sparsity, c.seed, acc, connectivity(t).fraction};
    });
    return rows;
}

inline std::string grid_csv(const std::vector<GridRow>& rows) {
    std::string out = "depth,sparsity,seed,accuracy,connectivity\n";
    for (const GridRow& r : rows) {
        out += std::to_string(r.depth) + ',' + format_real(r.sparsity) + ',' +
               std::to_string(r.seed) + ',' + format_real(r.accuracy) + ',' +
               format_real(r.connectivity) + '\n';
    }
    return out;
}

}  // namespace cascade
