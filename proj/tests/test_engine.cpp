#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cascade/engine.hpp"
#include "cascade/io.hpp"
#include "oracles.hpp"

using namespace cascade;

namespace {

Matrix<double> gaussian_matrix(int rows, int cols, uint64_t seed) {
    Matrix<double> m(rows, cols);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.gaussian();
    return m;
}

Topology cascade_212() {
    Topology t;
    t.name = "2-1-2";
    t.layer_widths = {2, 1, 2};
    t.layers = {{{0, 0, EdgeKind::Trainable, 0}, {1, 0, EdgeKind::Trainable, 0}},
                {{0, 0, EdgeKind::Trainable, 0}, {0, 1, EdgeKind::Trainable, 0}}};
    return t;
}

double loss_of(const Topology& t, const CascadeWeights<double>& w, const Matrix<double>& target,
               LossKind kind) {
    const Matrix<double> out = forward(w, t, Matrix<double>::identity(t.n_in()));
    double acc = 0;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double r = out.data[i] - target.data[i];
        acc += kind == LossKind::L2 ? r * r : std::abs(r);
    }
    return acc;
}

/// Largest deviation between analytic and central-difference gradients,
/// relative to the gradient magnitude (floored well below its scale).
double max_gradient_error(const Topology& t, uint64_t seed, LossKind kind) {
    auto w = init_weights<double>(t, {InitScheme::SparseXavier, seed});
    const Matrix<double> target = gaussian_matrix(t.n_out(), t.n_in(), derive_seed(seed, 7));

    const auto acts = forward_all(w, t, Matrix<double>::identity(t.n_in()));
    const auto deltas = backward_all(w, t, detail::loss_delta(kind, target, acts.back()));
    const auto grads = edge_gradients(t, acts, deltas);

    const double h = 1e-5;
    double worst = 0;
    for (size_t l = 0; l < t.layers.size(); ++l) {
        for (size_t i = 0; i < t.layers[l].size(); ++i) {
            if (t.layers[l][i].kind != EdgeKind::Trainable) continue;
            const double orig = w.values[l][i];
            w.values[l][i] = orig + h;
            const double lp = loss_of(t, w, target, kind);
            w.values[l][i] = orig - h;
            const double lm = loss_of(t, w, target, kind);
            w.values[l][i] = orig;
            const double fd = (lp - lm) / (2 * h);
            worst = std::max(worst, std::abs(grads[l][i] - fd) / std::max(std::abs(fd), 1e-3));
        }
    }
    return worst;
}

std::vector<Topology> small_families() {
    return {
        gen_dense(6, 6),
        gen_random(8, 8, 3, 0.4, 21),
        gen_clos(8, 8, 2, 3),
        gen_butterfly(8, 3),
        gen_hypercube(8, 2),
        gen_torus(2, 4, 3),
        gen_low_rank(8, 8, 3),
        gen_parallel_butterfly(8, 3, 2),
        apply_skip_connections(gen_butterfly(8, 4), 0),
        append_diagonal_layer(gen_low_rank(6, 6, 2)),
    };
}

}  // namespace

TEST_CASE("effective_matrix of a constant diagonal is the identity") {
    Topology t;
    t.name = "identity";
    t.layer_widths = {3, 3};
    t.layers = {{{0, 0, EdgeKind::Constant, 1.0},
                 {1, 1, EdgeKind::Constant, 1.0},
                 {2, 2, EdgeKind::Constant, 1.0}}};
    const auto w = make_weights<double>(t);
    REQUIRE(effective_matrix(w, t) == Matrix<double>::identity(3));
}

TEST_CASE("effective_matrix of a dense layer returns the weights themselves") {
    const Topology t = gen_dense(4, 3);
    const auto w = init_weights<double>(t, {InitScheme::SparseXavier, 2});
    const Matrix<double> e = effective_matrix(w, t);
    for (size_t i = 0; i < t.layers[0].size(); ++i)
        REQUIRE(e(t.layers[0][i].dst, t.layers[0][i].src) == w.values[0][i]);
}

TEST_CASE("effective_matrix agrees with forward on basis vectors") {
    const Topology t = gen_random(6, 5, 3, 0.5, 9);
    const auto w = init_weights<double>(t, {InitScheme::SparseXavier, 10});
    const Matrix<double> e = effective_matrix(w, t);
    for (int col = 0; col < t.n_in(); ++col) {
        Matrix<double> basis(t.n_in(), 1);
        basis(col, 0) = 1.0;
        const Matrix<double> out = forward(w, t, basis);
        for (int row = 0; row < t.n_out(); ++row)
            REQUIRE(out(row, 0) == Catch::Approx(e(row, col)).margin(1e-14));
    }
}

TEST_CASE("forward is linear and homogeneous") {
    const Topology t = gen_butterfly(8, 3);
    const auto w = init_weights<double>(t, {InitScheme::SparseXavier, 4});
    const Matrix<double> zero(8, 5);
    REQUIRE(forward(w, t, zero) == Matrix<double>(8, 5));

    const Matrix<double> x = gaussian_matrix(8, 5, 77);
    Matrix<double> cx = x;
    for (auto& v : cx.data) v *= -2.5;
    const Matrix<double> y = forward(w, t, x);
    const Matrix<double> cy = forward(w, t, cx);
    for (size_t i = 0; i < y.data.size(); ++i)
        REQUIRE(cy.data[i] == Catch::Approx(-2.5 * y.data[i]).margin(1e-12));
}

TEST_CASE("analytic gradients match central finite differences on all families") {
    for (const Topology& t : small_families()) {
        INFO("topology " << t.name);
        REQUIRE(max_gradient_error(t, 31, LossKind::L2) < 1e-5);
        REQUIRE(max_gradient_error(t, 32, LossKind::L1) < 1e-5);
    }
}

TEST_CASE("dense single layer reconstructs any target exactly") {
    const Topology t = gen_dense(6, 6);
    const Matrix<double> target = gaussian_matrix(6, 6, 15);
    const auto res = train_reconstruction(t, target, {InitScheme::SparseXavier, 16}, {});
    REQUIRE(res.report.final_loss < 1e-10);
    REQUIRE(res.report.l0_satisfied == 36);
    REQUIRE(res.report.ratio_count == -1);  // no diagonal layer
}

TEST_CASE("low-rank reconstruction reaches the Eckart-Young optimum") {
    const Topology t = gen_low_rank(16, 16, 4);
    for (uint64_t seed : {1, 2, 3}) {
        const Matrix<double> target = gaussian_matrix(16, 16, derive_seed(seed, 50));
        const auto res =
            train_reconstruction(t, target, {InitScheme::SparseXavier, derive_seed(seed, 51)}, {});
        const double ey = oracle::eckart_young_tail(target, 4);
        REQUIRE(res.report.final_loss == Catch::Approx(ey).epsilon(0.05));
    }
}

TEST_CASE("zero steps reports the initial loss") {
    const Topology t = gen_butterfly(8, 2);
    const auto w = init_weights<double>(t, {InitScheme::SparseXavier, 3});
    const Matrix<double> target = effective_matrix(w, t);
    TrainConfig cfg;
    cfg.steps = 0;
    const auto res = train_reconstruction(t, target, {InitScheme::SparseXavier, 3}, cfg);
    REQUIRE(res.report.final_loss == 0.0);
    REQUIRE(res.report.loss_trace.size() == 1);
}

TEST_CASE("diverging learning rates raise DivergedError with a step index") {
    const Topology t = gen_dense(4, 4);
    const Matrix<double> target = gaussian_matrix(4, 4, 8);
    TrainConfig cfg;
    cfg.learning_rate = 10.0;
    bool thrown = false;
    try {
        train_reconstruction(t, target, {InitScheme::SparseXavier, 9}, cfg);
    } catch (const DivergedError& e) {
        thrown = true;
        REQUIRE(e.step > 0);
        REQUIRE(e.step <= cfg.steps);
    }
    REQUIRE(thrown);
}

TEST_CASE("constant edges never change during training") {
    const Topology t = apply_skip_connections(gen_butterfly(8, 3), 0);
    const Matrix<double> target = gaussian_matrix(8, 8, 23);
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.steps = 500;
    const auto res = train_reconstruction(t, target, {InitScheme::SparseXavier, 24}, cfg);
    for (int l = 0; l < t.depth(); ++l)
        for (size_t i = 0; i < t.layers[l].size(); ++i)
            if (t.layers[l][i].kind == EdgeKind::Constant)
                REQUIRE(res.weights.values[l][i] == t.layers[l][i].value);
}

TEST_CASE("a density-1 mask trains identically to a raw dense baseline") {
    const int n = 6;
    const Topology t = gen_random(n, n, 1, 1.0, 40);
    const Matrix<double> target = gaussian_matrix(n, n, 41);
    TrainConfig cfg;
    cfg.steps = 200;
    cfg.record_every = 50;
    const auto res = train_reconstruction(t, target, {InitScheme::SparseXavier, 42}, cfg);

    // Baseline: plain gradient descent on an unmasked matrix, replaying
    // the same canonical-order initialization draws.
    Matrix<double> w(n, n);
    {
        Rng rng(42);
        const double b = sparse_xavier_bound(n, n, 0.0);
        for (int dst = 0; dst < n; ++dst)
            for (int src = 0; src < n; ++src) w(dst, src) = rng.uniform(-b, b);
    }
    std::vector<std::pair<int, double>> trace;
    for (int step = 0; step <= cfg.steps; ++step) {
        double loss = 0;
        for (size_t i = 0; i < w.data.size(); ++i) {
            const double r = w.data[i] - target.data[i];
            loss += r * r;
        }
        if (step % cfg.record_every == 0 || step == cfg.steps) trace.emplace_back(step, loss);
        if (step == cfg.steps) break;
        for (size_t i = 0; i < w.data.size(); ++i)
            w.data[i] -= cfg.learning_rate * 2.0 * (w.data[i] - target.data[i]);
    }
    REQUIRE(res.report.loss_trace == trace);
}

TEST_CASE("scaling the target scales the converged L2 loss quadratically") {
    const Topology t = gen_low_rank(8, 8, 2);
    for (uint64_t seed : {5, 6}) {
        const Matrix<double> target = gaussian_matrix(8, 8, derive_seed(seed, 60));
        Matrix<double> scaled = target;
        for (auto& v : scaled.data) v *= 3.0;
        TrainConfig cfg;
        cfg.learning_rate = 0.005;
        cfg.steps = 30000;
        const InitSpec init{InitScheme::SparseXavier, derive_seed(seed, 61)};
        const double base = train_reconstruction(t, target, init, cfg).report.final_loss;
        const double big = train_reconstruction(t, scaled, init, cfg).report.final_loss;
        REQUIRE(big == Catch::Approx(9.0 * base).epsilon(0.01));
    }
}

TEST_CASE("append_diagonal_layer adds one trainable edge per output") {
    const Topology base = gen_low_rank(5, 4, 2);
    const Topology t = append_diagonal_layer(base);
    REQUIRE(t.layer_widths == std::vector<int>{5, 2, 4, 4});
    REQUIRE(total_edges(t) == total_edges(base) + 4);
    REQUIRE(has_diagonal_tail(t));
    REQUIRE_FALSE(has_diagonal_tail(base));

    // Diagonal ones leave the effective map unchanged.
    auto w = init_weights<double>(base, {InitScheme::SparseXavier, 70});
    auto wd = make_weights<double>(t);
    for (int l = 0; l < base.depth(); ++l) wd.values[l] = w.values[l];
    for (auto& v : wd.values.back()) v = 1.0;
    REQUIRE(effective_matrix(wd, t) == effective_matrix(w, base));
}

TEST_CASE("the 2-1-2 cascade with a diagonal layer satisfies 3 of 4 constraints") {
    const Topology t = append_diagonal_layer(cascade_212());
    TrainConfig cfg;
    cfg.loss = LossKind::L1;
    cfg.learning_rate = 0.001;
    cfg.steps = 40000;
    cfg.epsilon_l0 = 0.02;
    for (uint64_t seed : {1, 5, 8}) {
        const Matrix<double> target = gaussian_matrix(2, 2, derive_seed(seed, 100));
        const auto res =
            train_reconstruction(t, target, {InitScheme::SparseXavier, derive_seed(seed, 200)}, cfg);
        REQUIRE(res.report.l0_satisfied == 3);
        REQUIRE(res.report.ratio_count == 1);  // one ratio constraint
        REQUIRE_FALSE(res.report.ratio_warning);
    }
}

TEST_CASE("count_l0_satisfied counts entries within eps") {
    const Topology t = gen_dense(4, 4);
    const Matrix<double> target = gaussian_matrix(4, 4, 80);
    const auto res = train_reconstruction(t, target, {InitScheme::SparseXavier, 81}, {});
    REQUIRE(count_l0_satisfied(res.weights, t, target, 1e-6) == 16);
    REQUIRE(count_l0_satisfied(res.weights, t, target, 0.0) == 0);

    const auto fresh = init_weights<double>(t, {InitScheme::SparseXavier, 82});
    REQUIRE(count_l0_satisfied(fresh, t, target, 1e-12) == 0);
}

TEST_CASE("L1-satisfied constraints never exceed trainable edges on generic targets") {
    for (uint64_t seed : {1, 2, 3, 4}) {
        const Topology t = gen_butterfly(8, 3);
        const Matrix<double> target = gaussian_matrix(8, 8, derive_seed(seed, 90));
        TrainConfig cfg;
        cfg.loss = LossKind::L1;
        cfg.learning_rate = 0.002;
        cfg.steps = 10000;
        cfg.epsilon_l0 = 0.02;
        const auto res =
            train_reconstruction(t, target, {InitScheme::SparseXavier, derive_seed(seed, 91)}, cfg);
        REQUIRE(res.report.l0_satisfied <= trainable_edges(t));
    }
}

TEST_CASE("count_ratios subtracts the magnitude constraints") {
    REQUIRE(count_ratios(3, 2).count == 1);
    REQUIRE_FALSE(count_ratios(3, 2).warning);
    REQUIRE(count_ratios(36, 6).count == 30);
    const RatioCount rc = count_ratios(0, 4);
    REQUIRE(rc.count == 0);
    REQUIRE(rc.warning);
}

TEST_CASE("report serialization carries the trace and counters") {
    const Topology t = gen_dense(3, 3);
    const Matrix<double> target = gaussian_matrix(3, 3, 30);
    TrainConfig cfg;
    cfg.steps = 100;
    cfg.record_every = 50;
    const auto res = train_reconstruction(t, target, {InitScheme::SparseXavier, 31}, cfg);
    const auto j = report_to_json(res.report);
    REQUIRE(j["topology_name"] == "dense");
    REQUIRE(j["trainable_params"] == 9);
    REQUIRE(j["loss_trace"].size() == 3);  // steps 0, 50, 100

    const std::string csv = loss_trace_csv(res.report);
    REQUIRE(csv.starts_with("step,loss\n0,"));
    REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 4);
}
