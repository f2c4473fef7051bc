#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "pcnet/dataset.hpp"
#include "pcnet/numerics.hpp"
#include "pcnet/pcgraph.hpp"
#include "pcnet/pcn.hpp"

using namespace pcnet;
using graph::AdjacencyMask;
using graph::ClampingPlan;
using graph::GraphParams;
using graph::GraphState;

namespace {

Vector random_vector(std::size_t n, Rng& rng) {
    Vector v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Solves the linear-activation settling problem exactly. With f = id the
// energy is 0.5 |M a - b|^2 for M = I - W, quadratic in the free activations,
// so the normal equations give the argmin inference must converge to.
Vector linear_settle_oracle(const GraphParams& params, const GraphState& state) {
    const std::size_t n = params.bias.size();
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m(i, j) = (i == j ? 1.0 : 0.0) - params.weights(i, j);

    std::vector<std::size_t> free_idx;
    for (std::size_t i = 0; i < n; ++i)
        if (!state.clamped[i]) free_idx.push_back(i);

    // Residual with free activations zeroed: r = b - M[:, clamped] a_clamped.
    Vector r = params.bias;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (state.clamped[j]) r[i] -= m(i, j) * state.a[j];

    const std::size_t k = free_idx.size();
    Matrix normal(k, k);
    Vector rhs(k);
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t q = 0; q < k; ++q) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += m(i, free_idx[p]) * m(i, free_idx[q]);
            normal(p, q) = s;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += m(i, free_idx[p]) * r[i];
        rhs[p] = s;
    }
    const Vector a_free = solve(normal, rhs);

    Vector full = state.a;
    for (std::size_t p = 0; p < k; ++p) full[free_idx[p]] = a_free[p];
    return full;
}

}  // namespace

TEST_CASE("adjacency masks store directed prediction edges") {
    AdjacencyMask mask(3);
    CHECK(mask.edge_count() == 0);
    mask.set(1, 0, true);  // node 0 predicts node 1
    CHECK(mask.at(1, 0));
    CHECK_FALSE(mask.at(0, 1));
    CHECK(mask.edge_count() == 1);
    mask.set(1, 0, false);
    CHECK(mask.edge_count() == 0);

    const AdjacencyMask full = graph::fully_connected(4);
    CHECK(full.edge_count() == 4 * 3);
    for (std::size_t i = 0; i < 4; ++i) CHECK_FALSE(full.at(i, i));
}

TEST_CASE("hierarchical masks wire consecutive layers in the given direction") {
    std::vector<std::size_t> offsets;
    const AdjacencyMask disc =
        graph::hierarchical({2, 2}, fnn::Direction::Discriminative, &offsets);
    REQUIRE(offsets == std::vector<std::size_t>{0, 2});
    // Layer 0 = nodes {0, 1} predicts layer 1 = nodes {2, 3}.
    CHECK(disc.at(2, 0));
    CHECK(disc.at(3, 1));
    CHECK_FALSE(disc.at(0, 2));
    CHECK(disc.edge_count() == 4);

    const AdjacencyMask gen = graph::hierarchical({2, 2}, fnn::Direction::Generative);
    CHECK(gen.at(0, 2));
    CHECK_FALSE(gen.at(2, 0));
}

TEST_CASE("acyclicity detection") {
    AdjacencyMask dag = graph::hierarchical({2, 3, 1}, fnn::Direction::Discriminative);
    CHECK(graph::is_acyclic(dag));
    dag.set(0, 5, true);  // top predicts back into the data layer: cycle
    CHECK_FALSE(graph::is_acyclic(dag));
    CHECK_FALSE(graph::is_acyclic(graph::fully_connected(3)));
}

TEST_CASE("graph parameters respect the mask") {
    const AdjacencyMask mask = graph::hierarchical({2, 2}, fnn::Direction::Discriminative);
    GraphParams params = graph::make_graph_params(mask);
    REQUIRE(params.weights.rows == 4);
    REQUIRE(params.bias.size() == 4);

    Rng rng(80);
    graph::init_graph_weights(params, mask, rng, 0.5);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            if (!mask.at(i, j)) CHECK(params.weights(i, j) == 0.0);
        }
    CHECK_NOTHROW(graph::validate(mask, params));

    params.weights(0, 1) = 0.7;  // not a masked-in edge
    CHECK_THROWS_AS(graph::validate(mask, params), ShapeError);
    graph::apply_mask(params, mask);
    CHECK(params.weights(0, 1) == 0.0);
    CHECK_NOTHROW(graph::validate(mask, params));
}

TEST_CASE("graph predictions and energy follow the definitions") {
    AdjacencyMask mask(2);
    mask.set(1, 0, true);
    GraphParams params = graph::make_graph_params(mask);
    params.weights(1, 0) = 2.0;
    params.bias = {0.5, -1.0};

    GraphState state = graph::make_graph_state(2);
    state.a = {3.0, 4.0};
    graph::graph_predictions(params, Activation::Linear, state);
    // Every node carries an error, including sources: mu_0 = b_0.
    CHECK(state.mu[0] == doctest::Approx(0.5));
    CHECK(state.mu[1] == doctest::Approx(2.0 * 3.0 - 1.0));
    CHECK(state.eps[0] == doctest::Approx(2.5));
    CHECK(state.eps[1] == doctest::Approx(-1.0));
    CHECK(graph::graph_energy(state) == doctest::Approx(0.5 * (2.5 * 2.5 + 1.0)));
}

TEST_CASE("linear settling converges to the normal-equations argmin") {
    for (std::uint64_t seed : {90, 91, 92}) {
        Rng rng(seed);
        const AdjacencyMask mask = graph::fully_connected(5);
        GraphParams params = graph::make_graph_params(mask);
        graph::init_graph_weights(params, mask, rng, 0.3);
        for (double& b : params.bias) b = rng.uniform(-0.5, 0.5);

        GraphState state = graph::make_graph_state(5);
        state.a = random_vector(5, rng);
        state.clamped = {1, 1, 0, 0, 0};
        graph::graph_predictions(params, Activation::Linear, state);
        for (int s = 0; s < 3000; ++s)
            graph::graph_inference_step(params, Activation::Linear, state, 0.1);

        const Vector want = linear_settle_oracle(params, state);
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(state.a[i] == doctest::Approx(want[i]).epsilon(1e-7));
    }
}

TEST_CASE("a graph inference step moves along the finite-difference gradient") {
    Rng rng(93);
    const AdjacencyMask mask = graph::fully_connected(4);
    GraphParams params = graph::make_graph_params(mask);
    graph::init_graph_weights(params, mask, rng, 0.5);

    GraphState state = graph::make_graph_state(4);
    state.a = random_vector(4, rng);
    state.clamped = {1, 0, 0, 0};
    graph::graph_predictions(params, Activation::Tanh, state);

    auto energy_at = [&](const Vector& a) {
        GraphState probe = state;
        probe.a = a;
        graph::graph_predictions(params, Activation::Tanh, probe);
        return graph::graph_energy(probe);
    };
    const Vector fd = finite_diff_gradient(energy_at, state.a, 1e-6);

    GraphState stepped = state;
    const double rate = 0.05;
    graph::graph_inference_step(params, Activation::Tanh, stepped, rate);
    CHECK(stepped.a[0] == state.a[0]);  // clamped
    for (std::size_t i = 1; i < 4; ++i) {
        const double moved = (stepped.a[i] - state.a[i]) / -rate;
        CHECK(moved == doctest::Approx(fd[i]).epsilon(1e-5));
    }
}

TEST_CASE("graph weight gradients match finite differences and stay masked") {
    Rng rng(94);
    const AdjacencyMask mask = graph::fully_connected(4);
    GraphParams params = graph::make_graph_params(mask);
    graph::init_graph_weights(params, mask, rng, 0.4);
    GraphState state = graph::make_graph_state(4);
    state.a = random_vector(4, rng);
    graph::graph_predictions(params, Activation::Sigmoid, state);

    const graph::GraphGradients grads =
        graph::graph_weight_gradients(params, Activation::Sigmoid, state, mask);
    const double h = 1e-6;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            if (!mask.at(i, j)) {
                CHECK(grads.weights(i, j) == 0.0);
                continue;
            }
            GraphParams probe = params;
            GraphState ps = state;
            probe.weights(i, j) += h;
            graph::graph_predictions(probe, Activation::Sigmoid, ps);
            const double up = graph::graph_energy(ps);
            probe.weights(i, j) -= 2.0 * h;
            graph::graph_predictions(probe, Activation::Sigmoid, ps);
            const double down = graph::graph_energy(ps);
            CHECK(grads.weights(i, j) ==
                  doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-5));
        }
        // Bias gradient too.
        GraphParams probe = params;
        GraphState ps = state;
        probe.bias[i] += h;
        graph::graph_predictions(probe, Activation::Sigmoid, ps);
        const double up = graph::graph_energy(ps);
        probe.bias[i] -= 2.0 * h;
        graph::graph_predictions(probe, Activation::Sigmoid, ps);
        const double down = graph::graph_energy(ps);
        CHECK(grads.bias[i] == doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-5));
    }

    GraphParams updated = params;
    graph::graph_weight_update(updated, Activation::Sigmoid, state, mask, 0.1);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(updated.weights(i, j) ==
                  doctest::Approx(params.weights(i, j) - 0.1 * grads.weights(i, j)));
}

TEST_CASE("a hierarchical mask reproduces the layered network lock-step") {
    Rng rng(95);
    const std::vector<std::size_t> widths{2, 3, 2};
    fnn::Topology topo;
    topo.widths = widths;
    topo.acts.assign(2, Activation::Tanh);
    fnn::Params lp = fnn::make_params(topo);
    fnn::init_weights(lp, topo, rng, 0.4);

    std::vector<std::size_t> offsets;
    const AdjacencyMask mask =
        graph::hierarchical(widths, fnn::Direction::Discriminative, &offsets);
    GraphParams gp = graph::make_graph_params(mask);
    // Copy the layered weights (and bias columns) onto the graph edges.
    for (std::size_t t = 0; t < 2; ++t) {
        const Matrix& w = lp.weights[t];
        for (std::size_t i = 0; i < w.rows; ++i) {
            for (std::size_t j = 0; j + 1 < w.cols; ++j)
                gp.weights(offsets[t + 1] + i, offsets[t] + j) = w(i, j);
            gp.bias[offsets[t + 1] + i] = w(i, w.cols - 1);
        }
    }

    const Vector x = random_vector(2, rng);
    const Vector y = random_vector(2, rng);

    pcn::NetState ls = pcn::make_state(topo);
    ls.a[0] = x;
    ls.clamped[0] = 1;
    ls.a[2] = y;
    ls.clamped[2] = 1;
    pcn::feedforward_init(topo.widths.empty() ? lp : lp, topo, ls);

    GraphState gs = graph::make_graph_state(7);
    for (std::size_t l = 0; l < 3; ++l)
        for (std::size_t i = 0; i < widths[l]; ++i) gs.a[offsets[l] + i] = ls.a[l][i];
    gs.clamped = {1, 1, 0, 0, 0, 1, 1};
    graph::graph_predictions(gp, Activation::Tanh, gs);

    for (int s = 0; s < 50; ++s) {
        pcn::inference_step(lp, topo, ls, 0.1, pcn::Schedule::Simultaneous);
        graph::graph_inference_step(gp, Activation::Tanh, gs, 0.1);
        for (std::size_t l = 0; l < 3; ++l)
            for (std::size_t i = 0; i < widths[l]; ++i)
                CHECK(std::fabs(gs.a[offsets[l] + i] - ls.a[l][i]) < 1e-12);
    }
}

TEST_CASE("topological sweep matches the layered feedforward pass") {
    Rng rng(96);
    const std::vector<std::size_t> widths{2, 4, 1};
    fnn::Topology topo;
    topo.widths = widths;
    topo.acts.assign(2, Activation::Sigmoid);
    fnn::Params lp = fnn::make_params(topo);
    fnn::init_weights(lp, topo, rng, 0.6);

    std::vector<std::size_t> offsets;
    const AdjacencyMask mask =
        graph::hierarchical(widths, fnn::Direction::Discriminative, &offsets);
    GraphParams gp = graph::make_graph_params(mask);
    for (std::size_t t = 0; t < 2; ++t) {
        const Matrix& w = lp.weights[t];
        for (std::size_t i = 0; i < w.rows; ++i) {
            for (std::size_t j = 0; j + 1 < w.cols; ++j)
                gp.weights(offsets[t + 1] + i, offsets[t] + j) = w(i, j);
            gp.bias[offsets[t + 1] + i] = w(i, w.cols - 1);
        }
    }

    const Vector x = random_vector(2, rng);
    GraphState gs = graph::make_graph_state(7);
    gs.a[0] = x[0];
    gs.a[1] = x[1];
    gs.clamped = {1, 1, 0, 0, 0, 0, 0};
    graph::topo_sweep_init(gp, Activation::Sigmoid, mask, gs);

    const Vector out = fnn::forward_output(lp, topo, x);
    CHECK(gs.a[6] == doctest::Approx(out[0]).epsilon(1e-15));

    // The sweep needs an acyclic mask.
    const AdjacencyMask cyclic = graph::fully_connected(3);
    GraphParams cp = graph::make_graph_params(cyclic);
    GraphState cs = graph::make_graph_state(3);
    CHECK_THROWS_AS(graph::topo_sweep_init(cp, Activation::Tanh, cyclic, cs), Error);
}

TEST_CASE("clamping plans are validated") {
    ClampingPlan plan;
    plan.x_nodes = {0, 1};
    plan.y_nodes = {2};
    CHECK_NOTHROW(graph::validate(plan, 4));

    ClampingPlan overlap;
    overlap.x_nodes = {0, 1};
    overlap.y_nodes = {1};
    CHECK_THROWS_AS(graph::validate(overlap, 4), ConfigError);

    ClampingPlan out_of_range;
    out_of_range.x_nodes = {0, 7};
    CHECK_THROWS_AS(graph::validate(out_of_range, 4), ConfigError);

    // A plan with no clamped nodes is legal here; the run configuration layer
    // is what insists on data nodes for training.
    ClampingPlan empty;
    CHECK_NOTHROW(graph::validate(empty, 4));
}

TEST_CASE("setup_graph_state clamps per the plan") {
    Rng rng(97);
    const AdjacencyMask mask = graph::fully_connected(5);
    GraphParams params = graph::make_graph_params(mask);
    graph::init_graph_weights(params, mask, rng, 0.3);
    ClampingPlan plan;
    plan.x_nodes = {0, 1};
    plan.y_nodes = {4};
    plan.init = graph::GraphInit::Zeros;

    const Vector x{0.7, -0.3};
    const Vector y{1.0};
    const GraphState state =
        graph::setup_graph_state(params, Activation::Tanh, mask, plan, x, &y);
    CHECK(state.a[0] == 0.7);
    CHECK(state.a[1] == -0.3);
    CHECK(state.a[4] == 1.0);
    CHECK(state.clamped[0]);
    CHECK(state.clamped[1]);
    CHECK_FALSE(state.clamped[2]);
    CHECK(state.clamped[4]);
    CHECK(state.a[2] == 0.0);

    CHECK_THROWS_AS(
        graph::setup_graph_state(params, Activation::Tanh, mask, plan, Vector{0.1}, &y),
        ShapeError);
}

TEST_CASE("graph_settle reads out the requested nodes deterministically") {
    Rng rng(98);
    const AdjacencyMask mask = graph::fully_connected(5);
    GraphParams params = graph::make_graph_params(mask);
    graph::init_graph_weights(params, mask, rng, 0.3);
    ClampingPlan plan;
    plan.x_nodes = {0, 1};
    plan.y_nodes = {2, 3};
    plan.init = graph::GraphInit::Zeros;
    pcn::InferenceConfig cfg;
    cfg.rate = 0.1;
    cfg.steps = 50;

    const Vector x{0.4, 0.9};
    const Vector out1 = graph::graph_settle(params, Activation::Tanh, mask, plan, x, cfg);
    const Vector out2 = graph::graph_settle(params, Activation::Tanh, mask, plan, x, cfg);
    REQUIRE(out1.size() == 2);
    CHECK(std::memcmp(out1.data(), out2.data(), 2 * sizeof(double)) == 0);
    CHECK(all_finite(out1));
}

TEST_CASE("a fully connected graph learns XOR through settling") {
    data::Dataset xorset = data::make_xor();
    const AdjacencyMask mask = graph::fully_connected(6);
    GraphParams params = graph::make_graph_params(mask);
    Rng rng(1);
    graph::init_graph_weights(params, mask, rng, 1.0);
    ClampingPlan plan;
    plan.x_nodes = {0, 1};
    plan.y_nodes = {2};
    plan.init = graph::GraphInit::Zeros;
    pcn::InferenceConfig cfg;
    cfg.rate = 0.2;
    cfg.steps = 40;
    cfg.stop_tol = 0.0;
    fnn::Optimizer opt = fnn::Optimizer::adam(0.05);

    int reached = -1;
    for (int e = 0; e < 300 && reached < 0; ++e) {
        const pcn::TrainTrace tr = graph::train_graph(params, mask, Activation::Tanh,
                                                      xorset.xs, &xorset.ys, plan, cfg,
                                                      opt, 1);
        if (tr.epochs.back().accuracy == 1.0) reached = e + 1;
    }
    CHECK(reached > 0);
}

TEST_CASE("graph training separates two gaussian clusters") {
    const data::Dataset ds = data::make_two_gaussians(10, 7);
    const AdjacencyMask mask = graph::fully_connected(5);
    GraphParams params = graph::make_graph_params(mask);
    Rng rng(2);
    graph::init_graph_weights(params, mask, rng, 0.3);
    ClampingPlan plan;
    plan.x_nodes = {0, 1};
    plan.y_nodes = {2};
    plan.init = graph::GraphInit::Zeros;
    pcn::InferenceConfig cfg;
    cfg.rate = 0.1;
    cfg.steps = 15;
    cfg.stop_tol = 0.0;
    fnn::Optimizer opt = fnn::Optimizer::adam(0.02);

    double best = 0.0;
    for (int e = 0; e < 60; ++e) {
        const pcn::TrainTrace tr = graph::train_graph(params, mask, Activation::Tanh,
                                                      ds.xs, &ds.ys, plan, cfg, opt, 1);
        best = std::max(best, tr.epochs.back().accuracy);
    }
    CHECK(best >= 0.9);
}
