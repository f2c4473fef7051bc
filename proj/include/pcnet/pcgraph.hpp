// Predictive coding on an arbitrary directed graph. Every node i carries an
// activation a[i], a prediction mu[i] = f((W a + b)[i]) and an error
// eps[i] = a[i] - mu[i]; the adjacency mask fixes which entries of W may be
// non-zero ((i, j) set means node j predicts node i). Unlike the layered
// module every node owns an error, including clamped ones. The energy is
// 0.5 |eps|^2.
#pragma once

#include <cstdint>
#include <vector>

#include "pcnet/fnn.hpp"
#include "pcnet/numerics.hpp"
#include "pcnet/pcn.hpp"

namespace pcnet::graph {

struct AdjacencyMask {
    std::size_t n = 0;
    std::vector<std::uint8_t> entries;  // row-major n*n, entries[i*n+j] => j predicts i

    AdjacencyMask() = default;
    explicit AdjacencyMask(std::size_t n_) : n(n_), entries(n_ * n_, 0) {}

    bool at(std::size_t i, std::size_t j) const { return entries[i * n + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v);
    std::size_t edge_count() const;
};

// All pairs except self-connections.
AdjacencyMask fully_connected(std::size_t n);

// Layered mask over nodes numbered layer by layer: with a discriminative
// direction layer l predicts layer l+1, with a generative one layer l+1
// predicts layer l. offsets receives the first node index of each layer.
AdjacencyMask hierarchical(const std::vector<std::size_t>& widths,
                           fnn::Direction direction,
                           std::vector<std::size_t>* offsets = nullptr);

bool is_acyclic(const AdjacencyMask& mask);

struct GraphParams {
    Matrix weights;  // n x n, zero wherever the mask is unset
    Vector bias;     // length n
};

GraphParams make_graph_params(const AdjacencyMask& mask);
// Uniform weights in [-scale, scale] on masked-in entries, bias zero.
void init_graph_weights(GraphParams& params, const AdjacencyMask& mask, Rng& rng,
                        double scale = 0.05);
void validate(const AdjacencyMask& mask, const GraphParams& params);
// Zeroes every entry the mask excludes.
void apply_mask(GraphParams& params, const AdjacencyMask& mask);

struct GraphState {
    Vector a;
    Vector mu;
    Vector eps;
    Vector preact;  // W a + b behind mu, cached by graph_predictions
    std::vector<std::uint8_t> clamped;
};

GraphState make_graph_state(std::size_t n);

// Refreshes preact, mu and eps from the current activations (one counted
// product).
void graph_predictions(const GraphParams& params, Activation act, GraphState& state);

double graph_energy(const GraphState& state);

// Jacobi step over all unclamped nodes followed by one refresh; mirrors the
// layered module's simultaneous schedule. Requires eps refreshed.
void graph_inference_step(const GraphParams& params, Activation act, GraphState& state,
                          double rate);

// dE/dW (masked) and dE/db; uses the cached preact.
struct GraphGradients {
    Matrix weights;
    Vector bias;
};
GraphGradients graph_weight_gradients(const GraphParams& params, Activation act,
                                      const GraphState& state, const AdjacencyMask& mask);

// Plain gradient step with rate alpha; the dense update is computed and then
// re-masked.
void graph_weight_update(GraphParams& params, Activation act, const GraphState& state,
                         const AdjacencyMask& mask, double alpha);

enum class GraphInit { Zeros, TopoSweep };

// Maps dataset columns onto node indices. Overlapping or out-of-range
// assignments are rejected.
struct ClampingPlan {
    std::vector<std::size_t> x_nodes;
    std::vector<std::size_t> y_nodes;  // may be empty
    GraphInit init = GraphInit::Zeros;
};

void validate(const ClampingPlan& plan, std::size_t n);

// Sets unclamped nodes to their predictions in topological order (requires an
// acyclic mask); matches the layered feedforward init on hierarchical masks.
void topo_sweep_init(const GraphParams& params, Activation act,
                     const AdjacencyMask& mask, GraphState& state);

// Clamps x (and y when given) per the plan, initialises the remaining nodes,
// and refreshes predictions.
GraphState setup_graph_state(const GraphParams& params, Activation act,
                             const AdjacencyMask& mask, const ClampingPlan& plan,
                             const Vector& x, const Vector* y);

// Test-time read-out: clamp the x nodes, settle the rest with cfg.steps
// inference steps, return the y node values.
Vector graph_settle(const GraphParams& params, Activation act, const AdjacencyMask& mask,
                    const ClampingPlan& plan, const Vector& x,
                    const pcn::InferenceConfig& cfg);

// Inference learning on the graph: per batch, clamp per the plan, settle with
// cfg.steps inference steps, then one optimizer step on the averaged masked
// gradients (weights and bias). Accuracy is measured by settling with the
// labels free and thresholding the y nodes at 0.5.
pcn::TrainTrace train_graph(GraphParams& params, const AdjacencyMask& mask,
                            Activation act, const std::vector<Vector>& xs,
                            const std::vector<Vector>* ys, const ClampingPlan& plan,
                            const pcn::InferenceConfig& cfg, fnn::Optimizer& opt,
                            int epochs, int batch_size = 1);

}  // namespace pcnet::graph
