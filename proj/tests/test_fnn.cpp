#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "pcnet/fnn.hpp"
#include "pcnet/numerics.hpp"

using namespace pcnet;
using fnn::Direction;
using fnn::Optimizer;
using fnn::Params;
using fnn::Topology;

namespace {

Topology small_topo() {
    Topology topo;
    topo.widths = {2, 3, 2};
    topo.acts = {Activation::Tanh, Activation::Sigmoid};
    return topo;
}

Vector random_vector(std::size_t n, Rng& rng) {
    Vector v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// Halved squared error as a function of the flattened parameters; the
// gradient oracle below differentiates this numerically.
double loss_at(const Params& params, const Topology& topo, const Vector& x,
               const Vector& y) {
    return 0.5 * fnn::mse_loss(fnn::forward_output(params, topo, x), y);
}

}  // namespace

TEST_CASE("topology validation rejects malformed stacks") {
    Topology empty;
    CHECK_THROWS_AS(fnn::validate(empty), ShapeError);

    Topology one;
    one.widths = {3};
    CHECK_THROWS_AS(fnn::validate(one), ShapeError);

    Topology zero_width;
    zero_width.widths = {2, 0, 1};
    zero_width.acts = {Activation::Tanh, Activation::Tanh};
    CHECK_THROWS_AS(fnn::validate(zero_width), ShapeError);

    Topology bad_acts;
    bad_acts.widths = {2, 2};
    bad_acts.acts = {Activation::Tanh, Activation::Tanh};
    CHECK_THROWS_AS(fnn::validate(bad_acts), ShapeError);

    CHECK_NOTHROW(fnn::validate(small_topo()));
}

TEST_CASE("direction names round-trip") {
    CHECK(fnn::direction_from_string(fnn::to_string(Direction::Discriminative)) ==
          Direction::Discriminative);
    CHECK(fnn::direction_from_string(fnn::to_string(Direction::Generative)) ==
          Direction::Generative);
    CHECK_THROWS_AS(fnn::direction_from_string("sideways"), ConfigError);
}

TEST_CASE("transition shapes include the bias column and flip with direction") {
    Topology topo = small_topo();
    // Discriminative: transition t predicts layer t+1 from layer t.
    CHECK(fnn::transition_shape(topo, 0) == std::pair<std::size_t, std::size_t>{3, 3});
    CHECK(fnn::transition_shape(topo, 1) == std::pair<std::size_t, std::size_t>{2, 4});

    topo.direction = Direction::Generative;
    // Generative: transition t predicts layer t from layer t+1.
    CHECK(fnn::transition_shape(topo, 0) == std::pair<std::size_t, std::size_t>{2, 4});
    CHECK(fnn::transition_shape(topo, 1) == std::pair<std::size_t, std::size_t>{3, 3});
}

TEST_CASE("make_params and init_weights produce validated, seeded weights") {
    const Topology topo = small_topo();
    Params params = fnn::make_params(topo);
    REQUIRE(params.weights.size() == 2);
    CHECK_NOTHROW(fnn::validate(topo, params));
    for (const Matrix& w : params.weights)
        for (double v : w.data) CHECK(v == 0.0);

    Rng rng(9);
    fnn::init_weights(params, topo, rng, 0.05);
    for (const Matrix& w : params.weights) {
        for (std::size_t i = 0; i < w.rows; ++i) {
            // Bias column stays zero.
            CHECK(w(i, w.cols - 1) == 0.0);
            for (std::size_t j = 0; j + 1 < w.cols; ++j) {
                CHECK(w(i, j) >= -0.05);
                CHECK(w(i, j) < 0.05);
            }
        }
    }

    // The same seed pins the exact network.
    Params again = fnn::make_params(topo);
    Rng rng2(9);
    fnn::init_weights(again, topo, rng2, 0.05);
    for (std::size_t t = 0; t < 2; ++t) CHECK(again.weights[t].data == params.weights[t].data);
}

TEST_CASE("forward computes f(w [a; 1]) layer by layer") {
    Topology topo;
    topo.widths = {2, 1};
    topo.acts = {Activation::Linear};
    Params params = fnn::make_params(topo);
    params.weights[0](0, 0) = 2.0;
    params.weights[0](0, 1) = -1.0;
    params.weights[0](0, 2) = 0.5;  // bias

    const Vector x{3.0, 4.0};
    const fnn::BpWorkspace ws = fnn::forward(params, topo, x);
    REQUIRE(ws.a.size() == 2);
    CHECK(ws.a[0] == x);
    CHECK(ws.a[1][0] == doctest::Approx(2.0 * 3.0 - 4.0 + 0.5));
    CHECK(fnn::forward_output(params, topo, x) == ws.a.back());
}

TEST_CASE("forward rejects wrong input sizes and generative topologies") {
    const Topology topo = small_topo();
    const Params params = fnn::make_params(topo);
    CHECK_THROWS_AS(fnn::forward(params, topo, Vector{1.0}), ShapeError);

    Topology gen = topo;
    gen.direction = Direction::Generative;
    CHECK_THROWS_AS(fnn::forward(fnn::make_params(gen), gen, Vector{1.0, 2.0}), ShapeError);
}

TEST_CASE("mse_loss is the unscaled squared error") {
    CHECK(fnn::mse_loss(Vector{1.0, 2.0}, Vector{0.0, 4.0}) == doctest::Approx(5.0));
    CHECK_THROWS_AS(fnn::mse_loss(Vector{1.0}, Vector{1.0, 2.0}), ShapeError);
}

TEST_CASE("bp_gradients matches central finite differences") {
    for (std::uint64_t seed : {21, 22, 23}) {
        Rng rng(seed);
        Topology topo;
        topo.widths = {3, 4, 3, 2};
        topo.acts = {Activation::Tanh, Activation::Relu, Activation::Sigmoid};
        Params params = fnn::make_params(topo);
        fnn::init_weights(params, topo, rng, 0.5);
        const Vector x = random_vector(3, rng);
        const Vector y = random_vector(2, rng);

        const std::vector<Matrix> grads = fnn::bp_gradients(params, topo, x, y);
        REQUIRE(grads.size() == params.weights.size());

        const double h = 1e-6;
        for (std::size_t t = 0; t < params.weights.size(); ++t) {
            REQUIRE(grads[t].same_shape(params.weights[t]));
            for (std::size_t i = 0; i < grads[t].data.size(); ++i) {
                Params probe = params;
                probe.weights[t].data[i] += h;
                const double up = loss_at(probe, topo, x, y);
                probe.weights[t].data[i] -= 2.0 * h;
                const double down = loss_at(probe, topo, x, y);
                const double fd = (up - down) / (2.0 * h);
                CHECK(grads[t].data[i] == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("bp workspace exposes deltas shaped like the layers") {
    Rng rng(30);
    const Topology topo = small_topo();
    Params params = fnn::make_params(topo);
    fnn::init_weights(params, topo, rng, 0.3);
    fnn::BpWorkspace ws;
    (void)fnn::bp_gradients(params, topo, Vector{0.2, -0.4}, Vector{1.0, 0.0}, &ws);
    REQUIRE(ws.delta.size() == 3);
    CHECK(ws.delta[1].size() == 3);
    CHECK(ws.delta[2].size() == 2);
    // The output delta of the halved squared error is yhat - y.
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(ws.delta[2][i] == doctest::Approx(ws.a[2][i] - (i == 0 ? 1.0 : 0.0)));
}

TEST_CASE("sgd steps are exactly w -= lr * g") {
    std::vector<Matrix> weights{Matrix(1, 2, 1.0)};
    std::vector<Matrix> grads{Matrix(1, 2, 0.0)};
    grads[0](0, 0) = 0.5;
    grads[0](0, 1) = -2.0;
    Optimizer opt = Optimizer::sgd(0.1);
    fnn::optimizer_step(opt, weights, grads);
    CHECK(weights[0](0, 0) == doctest::Approx(1.0 - 0.1 * 0.5));
    CHECK(weights[0](0, 1) == doctest::Approx(1.0 + 0.1 * 2.0));
    CHECK(opt.step_count == 1);
}

TEST_CASE("adam's first step follows the bias-corrected update") {
    std::vector<Matrix> weights{Matrix(1, 1, 0.0)};
    std::vector<Matrix> grads{Matrix(1, 1, 0.25)};
    Optimizer opt = Optimizer::adam(0.01);
    fnn::optimizer_step(opt, weights, grads);
    // After bias correction the first step is lr * g / (|g| + eps).
    const double expected = -0.01 * 0.25 / (0.25 + 1e-8);
    CHECK(weights[0](0, 0) == doctest::Approx(expected).epsilon(1e-9));
    REQUIRE(opt.m.size() == 1);
    CHECK(opt.m[0](0, 0) == doctest::Approx(0.1 * 0.25));
    CHECK(opt.v[0](0, 0) == doctest::Approx(0.001 * 0.25 * 0.25));
}

TEST_CASE("adam accumulates moments across steps") {
    std::vector<Matrix> weights{Matrix(1, 1, 0.0)};
    std::vector<Matrix> grads{Matrix(1, 1, 1.0)};
    Optimizer opt = Optimizer::adam(0.1);
    for (int i = 0; i < 50; ++i) fnn::optimizer_step(opt, weights, grads);
    CHECK(opt.step_count == 50);
    // With a constant gradient the step size approaches lr.
    std::vector<Matrix> before = weights;
    fnn::optimizer_step(opt, weights, grads);
    CHECK(before[0](0, 0) - weights[0](0, 0) == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("optimizer_step validates gradient shapes") {
    std::vector<Matrix> weights{Matrix(2, 2)};
    std::vector<Matrix> wrong_count{Matrix(2, 2), Matrix(2, 2)};
    std::vector<Matrix> wrong_shape{Matrix(3, 2)};
    Optimizer opt = Optimizer::sgd(0.1);
    CHECK_THROWS_AS(fnn::optimizer_step(opt, weights, wrong_count), ShapeError);
    CHECK_THROWS_AS(fnn::optimizer_step(opt, weights, wrong_shape), ShapeError);
}
