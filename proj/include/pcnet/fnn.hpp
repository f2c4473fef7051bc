// Forward neural network reference: layered topology, forward pass,
// backprop gradients and the optimizers shared by the other trainers.
// Biases are absorbed as the final weight column, so layer transition t
// computes f(w[t] * [a; 1]).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcnet/numerics.hpp"

namespace pcnet::fnn {

// Which way predictions flow through the layer stack. Discriminative
// networks predict layer l+1 from layer l (data at layer 0, labels at the
// top); generative networks predict layer l from layer l+1 (data at layer 0,
// the top layer acting as a prior).
enum class Direction { Discriminative, Generative };

const char* to_string(Direction d);
Direction direction_from_string(const std::string& name);

struct Topology {
    std::vector<std::size_t> widths;   // n_0 ... n_L
    std::vector<Activation> acts;      // one per transition, size depth()
    Direction direction = Direction::Discriminative;

    // Number of layer transitions (widths.size() - 1).
    std::size_t depth() const { return widths.empty() ? 0 : widths.size() - 1; }
};

void validate(const Topology& topo);

struct Params {
    std::vector<Matrix> weights;  // one per transition
};

// Expected weight shape of transition t: the predicted layer's width by the
// predicting layer's width plus one bias column.
std::pair<std::size_t, std::size_t> transition_shape(const Topology& topo, std::size_t t);

Params make_params(const Topology& topo);  // zero-initialised, validated shapes
void validate(const Topology& topo, const Params& params);

// Uniform weights in [-scale, scale], bias column zero. Entries are drawn in
// transition-major, row-major order so a seed pins the exact network.
void init_weights(Params& params, const Topology& topo, Rng& rng, double scale = 0.05);

struct BpWorkspace {
    std::vector<Vector> a;      // activations per layer, a[0] = x
    std::vector<Vector> z;      // pre-activations per layer (z[0] unused)
    std::vector<Vector> delta;  // loss gradients wrt activations (delta[0] unused)
};

// Forward pass for discriminative topologies. Caches activations and
// pre-activations in the returned workspace.
BpWorkspace forward(const Params& params, const Topology& topo, const Vector& x);

// Forward pass returning just the output layer.
Vector forward_output(const Params& params, const Topology& topo, const Vector& x);

// Unscaled squared error |yhat - y|^2.
double mse_loss(const Vector& yhat, const Vector& y);

// Gradients of the halved squared error 0.5 * |yhat - y|^2 with respect to
// each weight matrix. The bias column of a transition never participates in
// the backward transpose product. When ws is non-null the internal workspace
// (including deltas) is copied out for inspection.
std::vector<Matrix> bp_gradients(const Params& params, const Topology& topo,
                                 const Vector& x, const Vector& y,
                                 BpWorkspace* ws = nullptr);

enum class OptimizerKind { Sgd, Adam };

// Optimizer over a list of matrices. Moment state is lazily shaped to the
// parameters on the first step and afterwards must keep matching them.
struct Optimizer {
    OptimizerKind kind = OptimizerKind::Sgd;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step_count = 0;
    std::vector<Matrix> m;  // first moments (Adam)
    std::vector<Matrix> v;  // second moments (Adam)

    static Optimizer sgd(double lr);
    static Optimizer adam(double lr, double b1 = 0.9, double b2 = 0.999,
                          double eps = 1e-8);
};

// Applies one descent step: weights[i] -= update(grads[i]).
void optimizer_step(Optimizer& opt, std::vector<Matrix>& weights,
                    const std::vector<Matrix>& grads);
void optimizer_step(Optimizer& opt, Params& params, const std::vector<Matrix>& grads);

}  // namespace pcnet::fnn
