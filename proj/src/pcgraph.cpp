#include "pcnet/pcgraph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace pcnet::graph {

void AdjacencyMask::set(std::size_t i, std::size_t j, bool v) {
    if (i >= n || j >= n) {
        throw ShapeError("mask index (" + std::to_string(i) + ", " + std::to_string(j) +
                         ") out of range for n = " + std::to_string(n));
    }
    if (v && i == j) {
        throw ShapeError("mask rejects self-connection at node " + std::to_string(i));
    }
    entries[i * n + j] = v ? 1 : 0;
}

std::size_t AdjacencyMask::edge_count() const {
    std::size_t c = 0;
    for (auto e : entries) c += e != 0;
    return c;
}

AdjacencyMask fully_connected(std::size_t n) {
    AdjacencyMask m(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) m.entries[i * n + j] = 1;
        }
    }
    return m;
}

AdjacencyMask hierarchical(const std::vector<std::size_t>& widths,
                           fnn::Direction direction, std::vector<std::size_t>* offsets) {
    if (widths.size() < 2) throw ShapeError("hierarchical mask needs at least two layers");
    std::size_t total = 0;
    std::vector<std::size_t> offs;
    for (std::size_t w : widths) {
        offs.push_back(total);
        total += w;
    }
    AdjacencyMask m(total);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        // Transition between layers l and l+1: the predicting side depends on
        // the direction.
        const std::size_t src = direction == fnn::Direction::Discriminative ? l : l + 1;
        const std::size_t dst = direction == fnn::Direction::Discriminative ? l + 1 : l;
        for (std::size_t i = 0; i < widths[dst]; ++i) {
            for (std::size_t j = 0; j < widths[src]; ++j) {
                m.entries[(offs[dst] + i) * total + (offs[src] + j)] = 1;
            }
        }
    }
    if (offsets) *offsets = std::move(offs);
    return m;
}

bool is_acyclic(const AdjacencyMask& mask) {
    // Kahn's algorithm on edges j -> i for mask(i, j).
    const std::size_t n = mask.n;
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (mask.at(i, j)) ++indeg[i];
        }
    }
    std::queue<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (indeg[i] == 0) ready.push(i);
    }
    std::size_t seen = 0;
    while (!ready.empty()) {
        const std::size_t j = ready.front();
        ready.pop();
        ++seen;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask.at(i, j) && --indeg[i] == 0) ready.push(i);
        }
    }
    return seen == n;
}

GraphParams make_graph_params(const AdjacencyMask& mask) {
    GraphParams p;
    p.weights = Matrix(mask.n, mask.n);
    p.bias.assign(mask.n, 0.0);
    return p;
}

void init_graph_weights(GraphParams& params, const AdjacencyMask& mask, Rng& rng,
                        double scale) {
    validate(mask, params);
    for (std::size_t i = 0; i < mask.n; ++i) {
        for (std::size_t j = 0; j < mask.n; ++j) {
            params.weights(i, j) = mask.at(i, j) ? rng.uniform(-scale, scale) : 0.0;
        }
    }
    std::fill(params.bias.begin(), params.bias.end(), 0.0);
}

void validate(const AdjacencyMask& mask, const GraphParams& params) {
    if (mask.n == 0) throw ShapeError("graph has no nodes");
    if (mask.entries.size() != mask.n * mask.n) {
        throw ShapeError("mask storage does not match its node count");
    }
    for (std::size_t i = 0; i < mask.n; ++i) {
        if (mask.at(i, i)) {
            throw ShapeError("mask has a self-connection at node " + std::to_string(i));
        }
    }
    if (params.weights.rows != mask.n || params.weights.cols != mask.n) {
        throw ShapeError("graph weights " + params.weights.shape_str() +
                         " do not match node count " + std::to_string(mask.n));
    }
    if (params.bias.size() != mask.n) {
        throw ShapeError("graph bias length does not match node count");
    }
    for (std::size_t i = 0; i < mask.n; ++i) {
        for (std::size_t j = 0; j < mask.n; ++j) {
            if (!mask.at(i, j) && params.weights(i, j) != 0.0) {
                throw ShapeError("weight outside the mask at (" + std::to_string(i) +
                                 ", " + std::to_string(j) + ")");
            }
        }
    }
}

void apply_mask(GraphParams& params, const AdjacencyMask& mask) {
    for (std::size_t i = 0; i < mask.n; ++i) {
        for (std::size_t j = 0; j < mask.n; ++j) {
            if (!mask.at(i, j)) params.weights(i, j) = 0.0;
        }
    }
}

GraphState make_graph_state(std::size_t n) {
    GraphState s;
    s.a.assign(n, 0.0);
    s.mu.assign(n, 0.0);
    s.eps.assign(n, 0.0);
    s.preact.assign(n, 0.0);
    s.clamped.assign(n, 0);
    return s;
}

namespace {

void check_state(const GraphParams& params, const GraphState& state) {
    const std::size_t n = params.bias.size();
    if (state.a.size() != n || state.mu.size() != n || state.eps.size() != n ||
        state.preact.size() != n || state.clamped.size() != n) {
        throw ShapeError("graph state does not match node count");
    }
}

}  // namespace

void graph_predictions(const GraphParams& params, Activation act, GraphState& state) {
    check_state(params, state);
    state.preact = matvec(params.weights, state.a);
    for (std::size_t i = 0; i < state.preact.size(); ++i) {
        state.preact[i] += params.bias[i];
    }
    state.mu = apply_activation(act, state.preact);
    for (std::size_t i = 0; i < state.a.size(); ++i) {
        state.eps[i] = state.a[i] - state.mu[i];
    }
}

double graph_energy(const GraphState& state) {
    double acc = 0.0;
    for (double e : state.eps) acc += e * e;
    return 0.5 * acc;
}

void graph_inference_step(const GraphParams& params, Activation act, GraphState& state,
                          double rate) {
    check_state(params, state);
    // Snapshot gradient: dE/da = eps - W^T (eps . f'(W a + b)), with the
    // forward product recomputed as in the layered module's cost model.
    Vector u = matvec(params.weights, state.a);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += params.bias[i];
    Vector s = state.eps;
    const Vector fp = activation_derivative(act, u);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= fp[i];
    const Vector back = matvec_transpose(params.weights, s, params.weights.cols);
    for (std::size_t i = 0; i < state.a.size(); ++i) {
        if (state.clamped[i]) continue;
        state.a[i] -= rate * (state.eps[i] - back[i]);
    }
    graph_predictions(params, act, state);
}

GraphGradients graph_weight_gradients(const GraphParams& params, Activation act,
                                      const GraphState& state,
                                      const AdjacencyMask& mask) {
    validate(mask, params);
    check_state(params, state);
    Vector s = state.eps;
    const Vector fp = activation_derivative(act, state.preact);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = -(s[i] * fp[i]);
    GraphGradients g;
    g.weights = outer(s, state.a);
    for (std::size_t i = 0; i < mask.n; ++i) {
        for (std::size_t j = 0; j < mask.n; ++j) {
            if (!mask.at(i, j)) g.weights(i, j) = 0.0;
        }
    }
    g.bias = std::move(s);
    return g;
}

void graph_weight_update(GraphParams& params, Activation act, const GraphState& state,
                         const AdjacencyMask& mask, double alpha) {
    const GraphGradients g = graph_weight_gradients(params, act, state, mask);
    for (std::size_t i = 0; i < params.weights.data.size(); ++i) {
        params.weights.data[i] -= alpha * g.weights.data[i];
    }
    for (std::size_t i = 0; i < params.bias.size(); ++i) {
        params.bias[i] -= alpha * g.bias[i];
    }
    apply_mask(params, mask);
}

void validate(const ClampingPlan& plan, std::size_t n) {
    std::vector<std::uint8_t> used(n, 0);
    auto take = [&](const std::vector<std::size_t>& nodes, const char* kind) {
        for (std::size_t i : nodes) {
            if (i >= n) {
                throw ConfigError(std::string(kind) + " node " + std::to_string(i) +
                                  " out of range for n = " + std::to_string(n));
            }
            if (used[i]) {
                throw ConfigError("clamping plan assigns node " + std::to_string(i) +
                                  " twice");
            }
            used[i] = 1;
        }
    };
    take(plan.x_nodes, "x");
    take(plan.y_nodes, "y");
}

void topo_sweep_init(const GraphParams& params, Activation act,
                     const AdjacencyMask& mask, GraphState& state) {
    validate(mask, params);
    check_state(params, state);
    if (!is_acyclic(mask)) {
        throw Error("topo_sweep_init: mask has a cycle");
    }
    // Kahn order over edges j -> i; each unclamped node takes its prediction
    // once all of its predictors are final.
    const std::size_t n = mask.n;
    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (mask.at(i, j)) ++indeg[i];
        }
    }
    std::queue<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (indeg[i] == 0) ready.push(i);
    }
    while (!ready.empty()) {
        const std::size_t i = ready.front();
        ready.pop();
        if (!state.clamped[i]) {
            double u = params.bias[i];
            for (std::size_t j = 0; j < n; ++j) {
                if (mask.at(i, j)) u += params.weights(i, j) * state.a[j];
            }
            state.a[i] = act_eval(act, u);
        }
        for (std::size_t k = 0; k < n; ++k) {
            if (mask.at(k, i) && --indeg[k] == 0) ready.push(k);
        }
    }
}

GraphState setup_graph_state(const GraphParams& params, Activation act,
                             const AdjacencyMask& mask, const ClampingPlan& plan,
                             const Vector& x, const Vector* y) {
    validate(mask, params);
    validate(plan, mask.n);
    if (x.size() != plan.x_nodes.size()) {
        throw ShapeError("sample size " + std::to_string(x.size()) + " vs " +
                         std::to_string(plan.x_nodes.size()) + " x nodes");
    }
    if (y && y->size() != plan.y_nodes.size()) {
        throw ShapeError("label size " + std::to_string(y->size()) + " vs " +
                         std::to_string(plan.y_nodes.size()) + " y nodes");
    }
    GraphState state = make_graph_state(mask.n);
    for (std::size_t i = 0; i < plan.x_nodes.size(); ++i) {
        state.a[plan.x_nodes[i]] = x[i];
        state.clamped[plan.x_nodes[i]] = 1;
    }
    if (y) {
        for (std::size_t i = 0; i < plan.y_nodes.size(); ++i) {
            state.a[plan.y_nodes[i]] = (*y)[i];
            state.clamped[plan.y_nodes[i]] = 1;
        }
    }
    if (plan.init == GraphInit::TopoSweep) {
        topo_sweep_init(params, act, mask, state);
    }
    graph_predictions(params, act, state);
    return state;
}

Vector graph_settle(const GraphParams& params, Activation act, const AdjacencyMask& mask,
                    const ClampingPlan& plan, const Vector& x,
                    const pcn::InferenceConfig& cfg) {
    GraphState state = setup_graph_state(params, act, mask, plan, x, nullptr);
    double prev = graph_energy(state);
    for (int s = 0; s < cfg.steps; ++s) {
        graph_inference_step(params, act, state, cfg.rate);
        const double e = graph_energy(state);
        if (!std::isfinite(e) || e > pcn::kDivergenceThreshold) {
            throw DivergenceError("graph energy diverged during settle (total " +
                                  std::to_string(e) + ")");
        }
        if (cfg.stop_tol > 0.0 &&
            std::fabs(e - prev) <= cfg.stop_tol * std::max(std::fabs(prev), 1e-12)) {
            break;
        }
        prev = e;
    }
    Vector out(plan.y_nodes.size(), 0.0);
    for (std::size_t i = 0; i < plan.y_nodes.size(); ++i) {
        out[i] = state.a[plan.y_nodes[i]];
    }
    return out;
}

pcn::TrainTrace train_graph(GraphParams& params, const AdjacencyMask& mask,
                            Activation act, const std::vector<Vector>& xs,
                            const std::vector<Vector>* ys, const ClampingPlan& plan,
                            const pcn::InferenceConfig& cfg, fnn::Optimizer& opt,
                            int epochs, int batch_size) {
    validate(mask, params);
    validate(plan, mask.n);
    if (xs.empty()) throw ConfigError("training needs at least one sample");
    if (ys && ys->size() != xs.size()) {
        throw ShapeError("label count does not match sample count");
    }
    if (!ys && !plan.y_nodes.empty()) {
        throw ConfigError("clamping plan names y nodes but no labels were given");
    }
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    pcn::TrainTrace trace;
    const std::size_t n_samples = xs.size();
    for (int epoch = 0; epoch < epochs; ++epoch) {
        pcn::EpochStats stats;
        for (std::size_t start = 0; start < n_samples; start += batch_size) {
            const std::size_t stop = std::min(n_samples, start + batch_size);
            Matrix gw_sum(mask.n, mask.n);
            Vector gb_sum(mask.n, 0.0);
            for (std::size_t i = start; i < stop; ++i) {
                GraphState state = setup_graph_state(params, act, mask, plan, xs[i],
                                                     ys ? &(*ys)[i] : nullptr);
                double prev = graph_energy(state);
                for (int s = 0; s < cfg.steps; ++s) {
                    graph_inference_step(params, act, state, cfg.rate);
                    const double e = graph_energy(state);
                    if (!std::isfinite(e) || e > pcn::kDivergenceThreshold) {
                        throw DivergenceError(
                            "graph energy diverged (total " + std::to_string(e) +
                            ", inference rate " + std::to_string(cfg.rate) +
                            ", learning rate " + std::to_string(opt.learning_rate) + ")");
                    }
                    const bool stop_now =
                        cfg.stop_tol > 0.0 &&
                        std::fabs(e - prev) <= cfg.stop_tol * std::max(std::fabs(prev), 1e-12);
                    prev = e;
                    if (stop_now) break;
                }
                stats.energy += graph_energy(state);
                const GraphGradients g = graph_weight_gradients(params, act, state, mask);
                for (std::size_t k = 0; k < gw_sum.data.size(); ++k) {
                    gw_sum.data[k] += g.weights.data[k];
                }
                for (std::size_t k = 0; k < gb_sum.size(); ++k) gb_sum[k] += g.bias[k];
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (double& v : gw_sum.data) v *= inv;
            for (double& v : gb_sum) v *= inv;
            // Drive both parameter blocks through the shared optimizer; the
            // bias rides along as an n x 1 matrix.
            std::vector<Matrix> block(2);
            block[0] = params.weights;
            block[1] = Matrix(mask.n, 1);
            for (std::size_t k = 0; k < mask.n; ++k) block[1](k, 0) = params.bias[k];
            std::vector<Matrix> grads(2);
            grads[0] = std::move(gw_sum);
            grads[1] = Matrix(mask.n, 1);
            for (std::size_t k = 0; k < mask.n; ++k) grads[1](k, 0) = gb_sum[k];
            fnn::optimizer_step(opt, block, grads);
            params.weights = std::move(block[0]);
            for (std::size_t k = 0; k < mask.n; ++k) params.bias[k] = block[1](k, 0);
            apply_mask(params, mask);
        }
        stats.energy /= static_cast<double>(n_samples);
        if (ys && !plan.y_nodes.empty()) {
            std::size_t correct = 0;
            for (std::size_t i = 0; i < n_samples; ++i) {
                const Vector yhat = graph_settle(params, act, mask, plan, xs[i], cfg);
                bool ok = true;
                for (std::size_t j = 0; j < yhat.size(); ++j) {
                    if (std::fabs(yhat[j] - (*ys)[i][j]) >= 0.5) {
                        ok = false;
                        break;
                    }
                }
                if (ok) ++correct;
            }
            stats.accuracy = static_cast<double>(correct) / static_cast<double>(n_samples);
        }
        trace.epochs.push_back(stats);
    }
    return trace;
}

}  // namespace pcnet::graph
