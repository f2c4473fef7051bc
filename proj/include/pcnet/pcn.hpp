// Predictive coding network on a layered topology. Every layer l carries an
// activation vector a[l]; each predicted layer also carries a prediction
// mu[l] and an error eps[l] = a[l] - mu[l]. Discriminative nets predict
// layer l+1 from layer l, generative nets predict layer l from layer l+1.
// The total energy is 0.5 * sum_l eps[l]^T Pi[l] eps[l] with diagonal
// precisions Pi (identity when no precision set is supplied).
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pcnet/fnn.hpp"
#include "pcnet/numerics.hpp"

namespace pcnet::pcn {

using fnn::Direction;
using fnn::Optimizer;
using fnn::Params;
using fnn::Topology;

// Diagonal precision per predicted layer. An empty set means identity
// precisions everywhere. Entries are clipped to [kFloor, 1/kFloor].
struct PrecisionSet {
    std::vector<Vector> diag;  // indexed by layer; empty vector = identity

    static constexpr double kFloor = 1e-6;

    bool empty() const { return diag.empty(); }
    // Pointer to the diagonal for a layer, or nullptr for identity.
    const Vector* layer(std::size_t l) const;
};

void validate(const Topology& topo, const PrecisionSet& prec);

struct NetState {
    std::vector<Vector> a;        // activations per layer
    std::vector<Vector> mu;       // predictions per predicted layer
    std::vector<Vector> eps;      // errors per predicted layer
    std::vector<Vector> preact;   // pre-activations behind mu, cached by predictions()
    std::vector<std::uint8_t> clamped;  // per layer
};

NetState make_state(const Topology& topo);

// True when layer l carries a prediction/error pair under this direction.
bool layer_has_error(const Topology& topo, std::size_t l);
// The observed boundary layer whose error term is the output loss:
// layer L for discriminative nets, layer 0 for generative ones.
std::size_t boundary_layer(const Topology& topo);

struct EnergyReport {
    double total = 0.0;
    std::vector<double> per_layer;  // 0.5 |eps[l]|^2_Pi, zero for layers without errors
    double output_loss = 0.0;       // boundary layer term
    double residual = 0.0;          // total - output_loss
};

// Refreshes preact, mu and eps for every predicted layer from the current
// activations. One counted product per predicted layer.
void predictions(const Params& params, const Topology& topo, NetState& state);

// Requires eps refreshed (see predictions()).
EnergyReport energy(const Topology& topo, const NetState& state,
                    const PrecisionSet& prec = {});

// Sets every unclamped layer to its prediction by sweeping along the
// prediction direction (data-to-top for discriminative, top-to-data for
// generative), then refreshes predictions. Requires the data-side layer
// (layer 0) to be clamped. After the sweep every swept layer has zero error.
void feedforward_init(const Params& params, const Topology& topo, NetState& state);

enum class Schedule { Simultaneous, SequentialTopDown };

struct InferenceConfig {
    double rate = 0.1;       // inference step size
    int steps = 20;          // inference iterations per sample
    double stop_tol = 1e-8;  // early stop on relative energy change; 0 disables
    Schedule schedule = Schedule::Simultaneous;
    int workers = 1;         // worker threads for the simultaneous schedule
};

// One inference step. Simultaneous: every unclamped layer takes a gradient
// step computed from a snapshot of the current state, then predictions are
// refreshed once. SequentialTopDown: layers are visited from the top layer
// down to layer 0, each update immediately refreshing the errors it touched.
// Requires eps refreshed on entry; leaves eps refreshed.
void inference_step(const Params& params, const Topology& topo, NetState& state,
                    double rate, Schedule schedule = Schedule::Simultaneous,
                    const PrecisionSet& prec = {});

// Simultaneous-schedule step with layer updates distributed over `workers`
// threads. Bitwise identical to the sequential simultaneous step for every
// worker count. When counts is non-null it receives the per-phase maximum of
// counted events over the layer tasks (the step's critical path).
struct StepTaskCounts {
    std::uint64_t update_max = 0;
    std::uint64_t refresh_max = 0;
};
void inference_step_parallel(const Params& params, const Topology& topo,
                             NetState& state, double rate,
                             const PrecisionSet& prec = {}, int workers = 1,
                             StepTaskCounts* counts = nullptr);

// dE/dw for one transition, using the cached pre-activations (requires eps
// refreshed). Arranged so that optimizer_step descends the energy.
Matrix transition_gradient(const NetState& state, const Params& params,
                           const Topology& topo, std::size_t t,
                           const PrecisionSet& prec = {});

// dE/dw for every transition; one counted outer product each.
std::vector<Matrix> weight_gradients(const NetState& state, const Params& params,
                                     const Topology& topo,
                                     const PrecisionSet& prec = {});

struct EpochStats {
    double energy = 0.0;       // mean post-inference total energy over samples
    double output_loss = 0.0;  // mean boundary term
    double residual = 0.0;     // mean residual term
    double accuracy = -1.0;    // training accuracy, -1 when not applicable
};

struct TrainTrace {
    std::vector<EpochStats> epochs;
};

// Inference learning: per batch, clamp data (and labels when present), run
// feedforward init and `cfg.steps` inference steps, then take one optimizer
// step on the averaged weight gradients. Labels clamp the top layer; pass
// nullptr for unsupervised generative training. Throws DivergenceError when
// the energy exceeds 1e12 or turns non-finite.
TrainTrace train_il(Params& params, const Topology& topo,
                    const std::vector<Vector>& xs, const std::vector<Vector>* ys,
                    const InferenceConfig& cfg, Optimizer& opt, int epochs,
                    int batch_size = 1, const PrecisionSet& prec = {});

// Incremental variant: inside the step loop every iteration performs one
// inference step immediately followed by one optimizer step, so partial
// E-steps and partial M-steps interleave. With steps = 1 this is exactly
// train_il with steps = 1.
TrainTrace train_incremental_il(Params& params, const Topology& topo,
                                const std::vector<Vector>& xs,
                                const std::vector<Vector>* ys,
                                const InferenceConfig& cfg, Optimizer& opt, int epochs,
                                int batch_size = 1, const PrecisionSet& prec = {});

// Zero-divergence schedule for one sample: feedforward init, inference rate
// fixed to 1, exactly L steps, and at step t only the transition at depth t
// (counting from the output side) is updated, each update computed from the
// state before that step's activation moves. The applied weight deltas are
// returned; they equal -alpha times the backprop gradients of 0.5|yhat - y|^2.
// Discriminative topologies only.
std::vector<Matrix> train_zil(Params& params, const Topology& topo, const Vector& x,
                              const Vector& y, double alpha);

// Test-time evaluation of a discriminative net: the pure forward pass.
// Shares the forward kernels with fnn, so outputs are bitwise equal to
// fnn::forward.
Vector test_discriminative(const Params& params, const Topology& topo, const Vector& x);

enum class GenerativeMode { Supervised, Unsupervised };

// Supervised: clamp the top layer to *label and sweep predictions down to
// layer 0 deterministically. Unsupervised: ancestral sampling, drawing the
// top layer from a standard normal and each predicted layer from a unit
// variance normal around its prediction; requires rng.
Vector test_generative(const Params& params, const Topology& topo, GenerativeMode mode,
                       const Vector* label, Rng* rng);

// Splits the energy into the boundary (output loss) term and the residual
// term and checks, per hidden layer, that the descent direction of the total
// energy cannot ascend the output loss:
//   -(dL/da)^T (dR/da) <= |dL/da|^2  for L = output loss, R = residual.
// min_margin is the smallest value of |dL/da|^2 + (dL/da)^T (dR/da) over
// hidden layers (non-negative exactly when the inequality holds everywhere).
struct BoundCheck {
    bool holds = true;
    double min_margin = 0.0;
};
BoundCheck energy_gradient_bound_check(const NetState& state, const Params& params,
                                       const Topology& topo,
                                       const PrecisionSet& prec = {});

// M-step for diagonal precisions: Pi_ii = 1 / max(mean eps_i^2, floor),
// averaged over the given states, clipped into [floor, 1/floor]. The result
// zeroes d/dPi of 0.5 (eps^T Pi eps - log det Pi) whenever no clip binds.
PrecisionSet update_precisions(const Topology& topo, std::span<const NetState> states,
                               double floor = PrecisionSet::kFloor);

// Energy threshold beyond which training aborts with DivergenceError.
inline constexpr double kDivergenceThreshold = 1e12;

}  // namespace pcnet::pcn
