#include "pcnet/pcn.hpp"

#include <cmath>
#include <limits>

namespace pcnet::pcn {

namespace {

// Prediction wiring for one layer. For a predicted layer l this names the
// transition and source layer behind mu[l]; for a predicting layer l it
// names the transition and target layer it feeds.
struct Wiring {
    std::size_t transition = 0;
    std::size_t other = 0;  // source layer (for mu) or target layer (for updates)
};

bool prediction_of(const Topology& topo, std::size_t l, Wiring& w) {
    const std::size_t L = topo.depth();
    if (topo.direction == Direction::Discriminative) {
        if (l == 0) return false;
        w = {l - 1, l - 1};
        return true;
    }
    if (l == L) return false;
    w = {l, l + 1};
    return true;
}

bool target_of(const Topology& topo, std::size_t l, Wiring& w) {
    const std::size_t L = topo.depth();
    if (topo.direction == Direction::Discriminative) {
        if (l == L) return false;
        w = {l, l + 1};
        return true;
    }
    if (l == 0) return false;
    w = {l - 1, l - 1};
    return true;
}

Activation act_of_transition(const Topology& topo, std::size_t t) { return topo.acts[t]; }

Vector weighted_error(const NetState& state, const PrecisionSet& prec, std::size_t l) {
    Vector e = state.eps[l];
    if (const Vector* pi = prec.layer(l)) {
        for (std::size_t i = 0; i < e.size(); ++i) e[i] *= (*pi)[i];
    }
    return e;
}

// dE/da for one layer: the layer's own (precision-weighted) error minus the
// pulled-back error of the layer it predicts. The forward product behind the
// pulled-back term is recomputed here on purpose; the per-step cost model
// counts it separately from the prediction refresh, and it keeps each
// layer's update self-contained for the parallel schedule.
Vector energy_grad_activation(const Params& params, const Topology& topo,
                              const NetState& state, const PrecisionSet& prec,
                              std::size_t l) {
    Vector g(topo.widths[l], 0.0);
    if (layer_has_error(topo, l)) g = weighted_error(state, prec, l);
    Wiring t;
    if (target_of(topo, l, t)) {
        const Matrix& w = params.weights[t.transition];
        const Vector u = affine_apply(w, state.a[l]);
        Vector s = weighted_error(state, prec, t.other);
        const Vector fp = activation_derivative(act_of_transition(topo, t.transition), u);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] *= fp[i];
        const Vector back = matvec_transpose(w, s, topo.widths[l]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= back[i];
    }
    return g;
}

void refresh_layer(const Params& params, const Topology& topo, NetState& state,
                   std::size_t l) {
    Wiring p;
    if (!prediction_of(topo, l, p)) return;
    state.preact[l] = affine_apply(params.weights[p.transition], state.a[p.other]);
    state.mu[l] = apply_activation(act_of_transition(topo, p.transition), state.preact[l]);
    Vector& e = state.eps[l];
    e.resize(state.a[l].size());
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = state.a[l][i] - state.mu[l][i];
}

void check_state(const Topology& topo, const NetState& state) {
    const std::size_t n = topo.widths.size();
    if (state.a.size() != n || state.clamped.size() != n || state.mu.size() != n ||
        state.eps.size() != n || state.preact.size() != n) {
        throw ShapeError("state does not match topology layer count");
    }
    for (std::size_t l = 0; l < n; ++l) {
        if (state.a[l].size() != topo.widths[l]) {
            throw ShapeError("state layer " + std::to_string(l) + " has size " +
                             std::to_string(state.a[l].size()) + ", expected " +
                             std::to_string(topo.widths[l]));
        }
    }
}

void check_refreshed(const Topology& topo, const NetState& state, const char* op) {
    for (std::size_t l = 0; l < topo.widths.size(); ++l) {
        if (layer_has_error(topo, l) && state.eps[l].size() != topo.widths[l]) {
            throw Error(std::string(op) + ": predictions have not been refreshed");
        }
    }
}

void check_divergence(const EnergyReport& er, const InferenceConfig& cfg,
                      double learning_rate) {
    if (!std::isfinite(er.total) || er.total > kDivergenceThreshold) {
        throw DivergenceError("energy diverged (total " + std::to_string(er.total) +
                              ", inference rate " + std::to_string(cfg.rate) +
                              ", learning rate " + std::to_string(learning_rate) + ")");
    }
}

}  // namespace

const Vector* PrecisionSet::layer(std::size_t l) const {
    if (diag.empty() || l >= diag.size() || diag[l].empty()) return nullptr;
    return &diag[l];
}

void validate(const Topology& topo, const PrecisionSet& prec) {
    if (prec.empty()) return;
    if (prec.diag.size() != topo.widths.size()) {
        throw ShapeError("precision set has " + std::to_string(prec.diag.size()) +
                         " layers for a topology with " +
                         std::to_string(topo.widths.size()));
    }
    for (std::size_t l = 0; l < prec.diag.size(); ++l) {
        if (prec.diag[l].empty()) continue;
        if (!layer_has_error(topo, l)) {
            throw ShapeError("precision given for layer " + std::to_string(l) +
                             " which carries no error");
        }
        if (prec.diag[l].size() != topo.widths[l]) {
            throw ShapeError("precision for layer " + std::to_string(l) +
                             " has wrong size");
        }
        for (double p : prec.diag[l]) {
            if (!(p >= PrecisionSet::kFloor)) {
                throw NumericError("precision entry below floor");
            }
        }
    }
}

NetState make_state(const Topology& topo) {
    fnn::validate(topo);
    NetState s;
    const std::size_t n = topo.widths.size();
    s.a.resize(n);
    s.mu.resize(n);
    s.eps.resize(n);
    s.preact.resize(n);
    s.clamped.assign(n, 0);
    for (std::size_t l = 0; l < n; ++l) s.a[l].assign(topo.widths[l], 0.0);
    return s;
}

bool layer_has_error(const Topology& topo, std::size_t l) {
    if (topo.direction == Direction::Discriminative) return l >= 1;
    return l < topo.depth();
}

std::size_t boundary_layer(const Topology& topo) {
    return topo.direction == Direction::Discriminative ? topo.depth() : 0;
}

void predictions(const Params& params, const Topology& topo, NetState& state) {
    fnn::validate(topo, params);
    check_state(topo, state);
    for (std::size_t l = 0; l < topo.widths.size(); ++l) refresh_layer(params, topo, state, l);
}

EnergyReport energy(const Topology& topo, const NetState& state, const PrecisionSet& prec) {
    check_state(topo, state);
    check_refreshed(topo, state, "energy");
    validate(topo, prec);
    EnergyReport report;
    report.per_layer.assign(topo.widths.size(), 0.0);
    for (std::size_t l = 0; l < topo.widths.size(); ++l) {
        if (!layer_has_error(topo, l)) continue;
        const Vector* pi = prec.layer(l);
        double acc = 0.0;
        for (std::size_t i = 0; i < state.eps[l].size(); ++i) {
            const double e = state.eps[l][i];
            acc += e * e * (pi ? (*pi)[i] : 1.0);
        }
        report.per_layer[l] = 0.5 * acc;
        report.total += report.per_layer[l];
    }
    report.output_loss = report.per_layer[boundary_layer(topo)];
    report.residual = report.total - report.output_loss;
    return report;
}

void feedforward_init(const Params& params, const Topology& topo, NetState& state) {
    fnn::validate(topo, params);
    check_state(topo, state);
    if (!state.clamped[0]) {
        throw Error("feedforward_init: the data-side layer (layer 0) must be clamped");
    }
    const std::size_t L = topo.depth();
    if (topo.direction == Direction::Discriminative) {
        for (std::size_t l = 1; l <= L; ++l) {
            if (state.clamped[l]) continue;
            const Vector u = affine_apply(params.weights[l - 1], state.a[l - 1]);
            state.a[l] = apply_activation(topo.acts[l - 1], u);
        }
    } else {
        for (std::size_t l = L; l-- > 0;) {
            if (state.clamped[l]) continue;
            const Vector u = affine_apply(params.weights[l], state.a[l + 1]);
            state.a[l] = apply_activation(topo.acts[l], u);
        }
    }
    predictions(params, topo, state);
}

void inference_step(const Params& params, const Topology& topo, NetState& state,
                    double rate, Schedule schedule, const PrecisionSet& prec) {
    fnn::validate(topo, params);
    check_state(topo, state);
    check_refreshed(topo, state, "inference_step");
    validate(topo, prec);
    const std::size_t n = topo.widths.size();
    if (schedule == Schedule::Simultaneous) {
        // Jacobi style: every unclamped layer steps from the same snapshot,
        // then predictions are refreshed once.
        std::vector<Vector> grads(n);
        for (std::size_t l = 0; l < n; ++l) {
            if (state.clamped[l]) continue;
            grads[l] = energy_grad_activation(params, topo, state, prec, l);
        }
        for (std::size_t l = 0; l < n; ++l) {
            if (grads[l].empty()) continue;
            for (std::size_t i = 0; i < grads[l].size(); ++i) {
                state.a[l][i] -= rate * grads[l][i];
            }
        }
        predictions(params, topo, state);
        return;
    }
    // SequentialTopDown: visit layers from the top (label/prior side) down to
    // the data side, refreshing the errors each update touches before moving on.
    for (std::size_t l = n; l-- > 0;) {
        if (state.clamped[l]) continue;
        const Vector g = energy_grad_activation(params, topo, state, prec, l);
        for (std::size_t i = 0; i < g.size(); ++i) state.a[l][i] -= rate * g[i];
        // a[l] changed: its own error and the prediction it feeds are stale.
        if (layer_has_error(topo, l)) {
            for (std::size_t i = 0; i < state.eps[l].size(); ++i) {
                state.eps[l][i] = state.a[l][i] - state.mu[l][i];
            }
        }
        Wiring t;
        if (target_of(topo, l, t)) refresh_layer(params, topo, state, t.other);
    }
}

void inference_step_parallel(const Params& params, const Topology& topo, NetState& state,
                             double rate, const PrecisionSet& prec, int workers,
                             StepTaskCounts* counts) {
    fnn::validate(topo, params);
    check_state(topo, state);
    check_refreshed(topo, state, "inference_step_parallel");
    validate(topo, prec);
    const std::size_t n = topo.widths.size();
    std::vector<std::size_t> unclamped;
    for (std::size_t l = 0; l < n; ++l) {
        if (!state.clamped[l]) unclamped.push_back(l);
    }
    std::vector<Vector> grads(unclamped.size());
    std::vector<std::uint64_t> task_events;
    parallel_for(
        unclamped.size(), workers,
        [&](std::size_t i) {
            grads[i] = energy_grad_activation(params, topo, state, prec, unclamped[i]);
        },
        counts ? &task_events : nullptr);
    if (counts) {
        counts->update_max = 0;
        for (std::uint64_t e : task_events) counts->update_max = std::max(counts->update_max, e);
    }
    for (std::size_t i = 0; i < unclamped.size(); ++i) {
        Vector& a = state.a[unclamped[i]];
        for (std::size_t j = 0; j < a.size(); ++j) a[j] -= rate * grads[i][j];
    }
    std::vector<std::size_t> predicted;
    for (std::size_t l = 0; l < n; ++l) {
        if (layer_has_error(topo, l)) predicted.push_back(l);
    }
    parallel_for(
        predicted.size(), workers,
        [&](std::size_t i) { refresh_layer(params, topo, state, predicted[i]); },
        counts ? &task_events : nullptr);
    if (counts) {
        counts->refresh_max = 0;
        for (std::uint64_t e : task_events) counts->refresh_max = std::max(counts->refresh_max, e);
    }
}

Matrix transition_gradient(const NetState& state, const Params& params,
                           const Topology& topo, std::size_t t, const PrecisionSet& prec) {
    fnn::validate(topo, params);
    check_state(topo, state);
    check_refreshed(topo, state, "transition_gradient");
    if (t >= topo.depth()) {
        throw ShapeError("transition index " + std::to_string(t) + " out of range");
    }
    // Predicted layer and source layer of this transition.
    const bool disc = topo.direction == Direction::Discriminative;
    const std::size_t target = disc ? t + 1 : t;
    const std::size_t source = disc ? t : t + 1;
    Vector s = weighted_error(state, prec, target);
    const Vector fp = activation_derivative(topo.acts[t], state.preact[target]);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = -(s[i] * fp[i]);
    return outer_bias(s, state.a[source]);
}

std::vector<Matrix> weight_gradients(const NetState& state, const Params& params,
                                     const Topology& topo, const PrecisionSet& prec) {
    std::vector<Matrix> grads;
    grads.reserve(topo.depth());
    for (std::size_t t = 0; t < topo.depth(); ++t) {
        grads.push_back(transition_gradient(state, params, topo, t, prec));
    }
    return grads;
}

namespace {

NetState setup_sample_state(const Topology& topo, const Vector& x, const Vector* y) {
    if (x.size() != topo.widths[0]) {
        throw ShapeError("sample size " + std::to_string(x.size()) +
                         " does not match layer 0 width " +
                         std::to_string(topo.widths[0]));
    }
    NetState state = make_state(topo);
    state.a[0] = x;
    state.clamped[0] = 1;
    if (y) {
        const std::size_t L = topo.depth();
        if (y->size() != topo.widths[L]) {
            throw ShapeError("label size " + std::to_string(y->size()) +
                             " does not match layer " + std::to_string(L) + " width " +
                             std::to_string(topo.widths[L]));
        }
        state.a[L] = *y;
        state.clamped[L] = 1;
    }
    return state;
}

void run_step(const Params& params, const Topology& topo, NetState& state,
              const InferenceConfig& cfg, const PrecisionSet& prec) {
    if (cfg.schedule == Schedule::Simultaneous && cfg.workers > 1) {
        inference_step_parallel(params, topo, state, cfg.rate, prec, cfg.workers);
    } else {
        inference_step(params, topo, state, cfg.rate, cfg.schedule, prec);
    }
}

bool early_stop(double prev, double current, double stop_tol) {
    if (stop_tol <= 0.0) return false;
    return std::fabs(current - prev) <= stop_tol * std::max(std::fabs(prev), 1e-12);
}

std::vector<Matrix> zero_like(const Params& params) {
    std::vector<Matrix> zs;
    zs.reserve(params.weights.size());
    for (const Matrix& w : params.weights) zs.emplace_back(w.rows, w.cols);
    return zs;
}

void accumulate(std::vector<Matrix>& acc, const std::vector<Matrix>& g) {
    for (std::size_t t = 0; t < acc.size(); ++t) {
        for (std::size_t i = 0; i < acc[t].data.size(); ++i) {
            acc[t].data[i] += g[t].data[i];
        }
    }
}

void scale(std::vector<Matrix>& acc, double f) {
    for (Matrix& m : acc) {
        for (double& x : m.data) x *= f;
    }
}

double batch_accuracy(const Params& params, const Topology& topo,
                      const std::vector<Vector>& xs, const std::vector<Vector>& ys) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vector yhat = test_discriminative(params, topo, xs[i]);
        bool ok = true;
        for (std::size_t j = 0; j < ys[i].size(); ++j) {
            if (std::fabs(yhat[j] - ys[i][j]) >= 0.5) {
                ok = false;
                break;
            }
        }
        if (ok) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(xs.size());
}

void check_training_inputs(const Topology& topo, const std::vector<Vector>& xs,
                           const std::vector<Vector>* ys, int epochs, int batch_size) {
    if (xs.empty()) throw ConfigError("training needs at least one sample");
    if (ys && ys->size() != xs.size()) {
        throw ShapeError("label count " + std::to_string(ys->size()) +
                         " does not match sample count " + std::to_string(xs.size()));
    }
    if (epochs < 0) throw ConfigError("epoch count must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
    if (topo.direction == Direction::Discriminative && !ys) {
        throw ConfigError("discriminative training requires labels");
    }
}

}  // namespace

TrainTrace train_il(Params& params, const Topology& topo, const std::vector<Vector>& xs,
                    const std::vector<Vector>* ys, const InferenceConfig& cfg,
                    Optimizer& opt, int epochs, int batch_size, const PrecisionSet& prec) {
    fnn::validate(topo, params);
    validate(topo, prec);
    check_training_inputs(topo, xs, ys, epochs, batch_size);
    TrainTrace trace;
    const std::size_t n = xs.size();
    for (int epoch = 0; epoch < epochs; ++epoch) {
        EpochStats stats;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t stop = std::min(n, start + batch_size);
            std::vector<Matrix> grad_sum = zero_like(params);
            for (std::size_t i = start; i < stop; ++i) {
                NetState state = setup_sample_state(topo, xs[i], ys ? &(*ys)[i] : nullptr);
                feedforward_init(params, topo, state);
                double prev = energy(topo, state, prec).total;
                for (int s = 0; s < cfg.steps; ++s) {
                    run_step(params, topo, state, cfg, prec);
                    const EnergyReport er = energy(topo, state, prec);
                    check_divergence(er, cfg, opt.learning_rate);
                    const bool stop_now = early_stop(prev, er.total, cfg.stop_tol);
                    prev = er.total;
                    if (stop_now) break;
                }
                const EnergyReport er = energy(topo, state, prec);
                stats.energy += er.total;
                stats.output_loss += er.output_loss;
                stats.residual += er.residual;
                accumulate(grad_sum, weight_gradients(state, params, topo, prec));
            }
            scale(grad_sum, 1.0 / static_cast<double>(stop - start));
            fnn::optimizer_step(opt, params, grad_sum);
        }
        stats.energy /= static_cast<double>(n);
        stats.output_loss /= static_cast<double>(n);
        stats.residual /= static_cast<double>(n);
        if (ys && topo.direction == Direction::Discriminative) {
            stats.accuracy = batch_accuracy(params, topo, xs, *ys);
        }
        trace.epochs.push_back(stats);
    }
    return trace;
}

TrainTrace train_incremental_il(Params& params, const Topology& topo,
                                const std::vector<Vector>& xs,
                                const std::vector<Vector>* ys, const InferenceConfig& cfg,
                                Optimizer& opt, int epochs, int batch_size,
                                const PrecisionSet& prec) {
    fnn::validate(topo, params);
    validate(topo, prec);
    check_training_inputs(topo, xs, ys, epochs, batch_size);
    TrainTrace trace;
    const std::size_t n = xs.size();
    for (int epoch = 0; epoch < epochs; ++epoch) {
        EpochStats stats;
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t stop = std::min(n, start + batch_size);
            const std::size_t count = stop - start;
            std::vector<NetState> states;
            states.reserve(count);
            for (std::size_t i = start; i < stop; ++i) {
                states.push_back(setup_sample_state(topo, xs[i], ys ? &(*ys)[i] : nullptr));
                feedforward_init(params, topo, states.back());
            }
            double prev = 0.0;
            for (const NetState& st : states) prev += energy(topo, st, prec).total;
            prev /= static_cast<double>(count);
            double mean_total = prev;
            for (int s = 0; s < cfg.steps; ++s) {
                // Partial E-step: one inference step per state. The step ends
                // with refreshed errors, which the immediate M-step consumes.
                std::vector<Matrix> grad_sum = zero_like(params);
                double total = 0.0;
                double output_loss = 0.0;
                double residual = 0.0;
                for (NetState& st : states) {
                    run_step(params, topo, st, cfg, prec);
                    const EnergyReport er = energy(topo, st, prec);
                    check_divergence(er, cfg, opt.learning_rate);
                    total += er.total;
                    output_loss += er.output_loss;
                    residual += er.residual;
                    accumulate(grad_sum, weight_gradients(st, params, topo, prec));
                }
                scale(grad_sum, 1.0 / static_cast<double>(count));
                fnn::optimizer_step(opt, params, grad_sum);
                mean_total = total / static_cast<double>(count);
                if (s + 1 == cfg.steps) {
                    stats.energy += total;
                    stats.output_loss += output_loss;
                    stats.residual += residual;
                }
                const bool stop_now = early_stop(prev, mean_total, cfg.stop_tol);
                prev = mean_total;
                if (stop_now && s + 1 < cfg.steps) {
                    stats.energy += total;
                    stats.output_loss += output_loss;
                    stats.residual += residual;
                    break;
                }
            }
        }
        stats.energy /= static_cast<double>(n);
        stats.output_loss /= static_cast<double>(n);
        stats.residual /= static_cast<double>(n);
        if (ys && topo.direction == Direction::Discriminative) {
            stats.accuracy = batch_accuracy(params, topo, xs, *ys);
        }
        trace.epochs.push_back(stats);
    }
    return trace;
}

std::vector<Matrix> train_zil(Params& params, const Topology& topo, const Vector& x,
                              const Vector& y, double alpha) {
    fnn::validate(topo, params);
    if (topo.direction != Direction::Discriminative) {
        throw Error("train_zil: topology must be discriminative");
    }
    const std::size_t L = topo.depth();
    NetState state = setup_sample_state(topo, x, &y);
    feedforward_init(params, topo, state);
    std::vector<Matrix> deltas = zero_like(params);
    // Step t updates the transition at depth t below the output while the
    // error front, travelling one layer per step under rate 1, sits exactly
    // on that transition's target layer. Both the weight gradient and the
    // activation step are computed from the same snapshot before either is
    // applied.
    for (std::size_t t = 0; t < L; ++t) {
        const std::size_t trans = L - 1 - t;
        const Matrix g = transition_gradient(state, params, topo, trans);
        std::vector<Vector> grads(topo.widths.size());
        for (std::size_t l = 0; l < topo.widths.size(); ++l) {
            if (state.clamped[l]) continue;
            grads[l] = energy_grad_activation(params, topo, state, {}, l);
        }
        Matrix& w = params.weights[trans];
        Matrix& d = deltas[trans];
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            d.data[i] = -alpha * g.data[i];
            w.data[i] += d.data[i];
        }
        for (std::size_t l = 0; l < topo.widths.size(); ++l) {
            if (grads[l].empty()) continue;
            for (std::size_t i = 0; i < grads[l].size(); ++i) {
                state.a[l][i] -= grads[l][i];  // rate fixed to 1
            }
        }
        predictions(params, topo, state);
    }
    return deltas;
}

Vector test_discriminative(const Params& params, const Topology& topo, const Vector& x) {
    return fnn::forward(params, topo, x).a.back();
}

Vector test_generative(const Params& params, const Topology& topo, GenerativeMode mode,
                       const Vector* label, Rng* rng) {
    fnn::validate(topo, params);
    if (topo.direction != Direction::Generative) {
        throw Error("test_generative: topology must be generative");
    }
    const std::size_t L = topo.depth();
    Vector top;
    if (mode == GenerativeMode::Supervised) {
        if (!label) throw Error("test_generative: supervised mode needs a label");
        if (label->size() != topo.widths[L]) {
            throw ShapeError("label size " + std::to_string(label->size()) +
                             " does not match top layer width " +
                             std::to_string(topo.widths[L]));
        }
        top = *label;
    } else {
        if (!rng) throw Error("test_generative: unsupervised mode needs an rng");
        top.resize(topo.widths[L]);
        for (double& v : top) v = rng->normal();
    }
    Vector current = top;
    for (std::size_t l = L; l-- > 0;) {
        const Vector u = affine_apply(params.weights[l], current);
        Vector mu = apply_activation(topo.acts[l], u);
        if (mode == GenerativeMode::Unsupervised) {
            for (double& v : mu) v += rng->normal();
        }
        current = std::move(mu);
    }
    return current;
}

BoundCheck energy_gradient_bound_check(const NetState& state, const Params& params,
                                       const Topology& topo, const PrecisionSet& prec) {
    fnn::validate(topo, params);
    check_state(topo, state);
    check_refreshed(topo, state, "energy_gradient_bound_check");
    validate(topo, prec);
    const std::size_t L = topo.depth();
    const std::size_t b = boundary_layer(topo);
    BoundCheck result;
    result.min_margin = std::numeric_limits<double>::infinity();
    // Source layer feeding the boundary prediction: the only hidden layer the
    // output loss depends on.
    Wiring bp;
    prediction_of(topo, b, bp);
    for (std::size_t l = 1; l < L; ++l) {
        Vector gl(topo.widths[l], 0.0);
        if (l == bp.other) {
            Vector s = weighted_error(state, prec, b);
            const Vector fp =
                activation_derivative(topo.acts[bp.transition], state.preact[b]);
            for (std::size_t i = 0; i < s.size(); ++i) s[i] *= fp[i];
            const Vector back =
                matvec_transpose(params.weights[bp.transition], s, topo.widths[l]);
            for (std::size_t i = 0; i < gl.size(); ++i) gl[i] = -back[i];
        }
        // Residual gradient: own error term plus pull-back from the predicted
        // target when that target is not the boundary layer.
        Vector gr(topo.widths[l], 0.0);
        if (layer_has_error(topo, l)) gr = weighted_error(state, prec, l);
        Wiring t;
        if (target_of(topo, l, t) && t.other != b) {
            Vector s = weighted_error(state, prec, t.other);
            const Vector fp =
                activation_derivative(topo.acts[t.transition], state.preact[t.other]);
            for (std::size_t i = 0; i < s.size(); ++i) s[i] *= fp[i];
            const Vector back = matvec_transpose(params.weights[t.transition], s,
                                                 topo.widths[l]);
            for (std::size_t i = 0; i < gr.size(); ++i) gr[i] -= back[i];
        }
        double norm_sq = 0.0;
        double dot = 0.0;
        for (std::size_t i = 0; i < gl.size(); ++i) {
            norm_sq += gl[i] * gl[i];
            dot += gl[i] * gr[i];
        }
        const double margin = norm_sq + dot;
        result.min_margin = std::min(result.min_margin, margin);
        if (margin < 0.0) result.holds = false;
    }
    return result;
}

PrecisionSet update_precisions(const Topology& topo, std::span<const NetState> states,
                               double floor) {
    if (states.empty()) throw ConfigError("update_precisions: no states given");
    if (floor <= 0.0) throw NumericError("update_precisions: floor must be positive");
    for (const NetState& st : states) {
        check_state(topo, st);
        check_refreshed(topo, st, "update_precisions");
    }
    PrecisionSet out;
    out.diag.resize(topo.widths.size());
    for (std::size_t l = 0; l < topo.widths.size(); ++l) {
        if (!layer_has_error(topo, l)) continue;
        Vector pi(topo.widths[l], 0.0);
        for (std::size_t i = 0; i < pi.size(); ++i) {
            double mean_sq = 0.0;
            for (const NetState& st : states) {
                mean_sq += st.eps[l][i] * st.eps[l][i];
            }
            mean_sq /= static_cast<double>(states.size());
            const double p = 1.0 / std::max(mean_sq, floor);
            pi[i] = std::min(std::max(p, floor), 1.0 / floor);
        }
        out.diag[l] = std::move(pi);
    }
    return out;
}

}  // namespace pcnet::pcn
