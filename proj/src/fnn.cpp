#include "pcnet/fnn.hpp"

#include <cmath>

namespace pcnet::fnn {

const char* to_string(Direction d) {
    return d == Direction::Discriminative ? "discriminative" : "generative";
}

Direction direction_from_string(const std::string& name) {
    if (name == "discriminative") return Direction::Discriminative;
    if (name == "generative") return Direction::Generative;
    throw ConfigError("unknown direction '" + name + "'");
}

void validate(const Topology& topo) {
    if (topo.widths.size() < 2) {
        throw ShapeError("topology needs at least two layers, got " +
                         std::to_string(topo.widths.size()));
    }
    for (std::size_t w : topo.widths) {
        if (w == 0) throw ShapeError("topology has a zero-width layer");
    }
    if (topo.acts.size() != topo.depth()) {
        throw ShapeError("topology has " + std::to_string(topo.acts.size()) +
                         " activations for " + std::to_string(topo.depth()) +
                         " transitions");
    }
}

std::pair<std::size_t, std::size_t> transition_shape(const Topology& topo, std::size_t t) {
    if (topo.direction == Direction::Discriminative) {
        return {topo.widths[t + 1], topo.widths[t] + 1};
    }
    return {topo.widths[t], topo.widths[t + 1] + 1};
}

Params make_params(const Topology& topo) {
    validate(topo);
    Params p;
    p.weights.reserve(topo.depth());
    for (std::size_t t = 0; t < topo.depth(); ++t) {
        auto [r, c] = transition_shape(topo, t);
        p.weights.emplace_back(r, c);
    }
    return p;
}

void validate(const Topology& topo, const Params& params) {
    validate(topo);
    if (params.weights.size() != topo.depth()) {
        throw ShapeError("params hold " + std::to_string(params.weights.size()) +
                         " matrices for " + std::to_string(topo.depth()) + " transitions");
    }
    for (std::size_t t = 0; t < topo.depth(); ++t) {
        auto [r, c] = transition_shape(topo, t);
        const Matrix& w = params.weights[t];
        if (w.rows != r || w.cols != c) {
            throw ShapeError("transition " + std::to_string(t) + " has shape " +
                             w.shape_str() + ", expected " + std::to_string(r) + "x" +
                             std::to_string(c));
        }
    }
}

void init_weights(Params& params, const Topology& topo, Rng& rng, double scale) {
    validate(topo, params);
    for (Matrix& w : params.weights) {
        for (std::size_t i = 0; i < w.rows; ++i) {
            for (std::size_t j = 0; j + 1 < w.cols; ++j) w(i, j) = rng.uniform(-scale, scale);
            w(i, w.cols - 1) = 0.0;  // bias column
        }
    }
}

BpWorkspace forward(const Params& params, const Topology& topo, const Vector& x) {
    validate(topo, params);
    if (topo.direction != Direction::Discriminative) {
        throw ShapeError("forward: topology must be discriminative");
    }
    if (x.size() != topo.widths[0]) {
        throw ShapeError("forward: input size " + std::to_string(x.size()) +
                         " does not match layer 0 width " + std::to_string(topo.widths[0]));
    }
    const std::size_t L = topo.depth();
    BpWorkspace ws;
    ws.a.resize(L + 1);
    ws.z.resize(L + 1);
    ws.delta.resize(L + 1);
    ws.a[0] = x;
    for (std::size_t t = 0; t < L; ++t) {
        ws.z[t + 1] = affine_apply(params.weights[t], ws.a[t]);
        ws.a[t + 1] = apply_activation(topo.acts[t], ws.z[t + 1]);
    }
    return ws;
}

Vector forward_output(const Params& params, const Topology& topo, const Vector& x) {
    return forward(params, topo, x).a.back();
}

double mse_loss(const Vector& yhat, const Vector& y) {
    if (yhat.size() != y.size()) {
        throw ShapeError("mse_loss: size " + std::to_string(yhat.size()) + " vs " +
                         std::to_string(y.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = yhat[i] - y[i];
        acc += d * d;
    }
    return acc;
}

std::vector<Matrix> bp_gradients(const Params& params, const Topology& topo,
                                 const Vector& x, const Vector& y, BpWorkspace* ws_out) {
    const std::size_t L = topo.depth();
    BpWorkspace ws = forward(params, topo, x);
    if (y.size() != topo.widths[L]) {
        throw ShapeError("bp_gradients: label size " + std::to_string(y.size()) +
                         " does not match output width " + std::to_string(topo.widths[L]));
    }
    // delta[l] = d(0.5 |a_L - y|^2) / d a_l. The output delta is a_L - y;
    // lower deltas pull back through f'(z) and the weight transpose with the
    // bias column excluded.
    ws.delta[L].resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) ws.delta[L][i] = ws.a[L][i] - y[i];
    for (std::size_t l = L; l-- > 1;) {
        Vector scaled = ws.delta[l + 1];
        const Vector fprime = activation_derivative(topo.acts[l], ws.z[l + 1]);
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= fprime[i];
        ws.delta[l] = matvec_transpose(params.weights[l], scaled, topo.widths[l]);
    }
    std::vector<Matrix> grads;
    grads.reserve(L);
    for (std::size_t t = 0; t < L; ++t) {
        Vector scaled = ws.delta[t + 1];
        const Vector fprime = activation_derivative(topo.acts[t], ws.z[t + 1]);
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= fprime[i];
        grads.push_back(outer_bias(scaled, ws.a[t]));
    }
    if (ws_out) *ws_out = std::move(ws);
    return grads;
}

Optimizer Optimizer::sgd(double lr) {
    Optimizer o;
    o.kind = OptimizerKind::Sgd;
    o.learning_rate = lr;
    return o;
}

Optimizer Optimizer::adam(double lr, double b1, double b2, double eps) {
    Optimizer o;
    o.kind = OptimizerKind::Adam;
    o.learning_rate = lr;
    o.beta1 = b1;
    o.beta2 = b2;
    o.epsilon = eps;
    return o;
}

void optimizer_step(Optimizer& opt, std::vector<Matrix>& weights,
                    const std::vector<Matrix>& grads) {
    if (weights.size() != grads.size()) {
        throw ShapeError("optimizer_step: " + std::to_string(weights.size()) +
                         " parameter matrices vs " + std::to_string(grads.size()) +
                         " gradients");
    }
    for (std::size_t t = 0; t < weights.size(); ++t) {
        if (!weights[t].same_shape(grads[t])) {
            throw ShapeError("optimizer_step: gradient shape " + grads[t].shape_str() +
                             " does not match parameter shape " + weights[t].shape_str());
        }
    }
    if (opt.kind == OptimizerKind::Sgd) {
        for (std::size_t t = 0; t < weights.size(); ++t) {
            Matrix& w = weights[t];
            const Matrix& g = grads[t];
            for (std::size_t i = 0; i < w.data.size(); ++i) {
                w.data[i] -= opt.learning_rate * g.data[i];
            }
        }
        ++opt.step_count;
        return;
    }
    if (opt.m.empty()) {
        for (const Matrix& w : weights) {
            opt.m.emplace_back(w.rows, w.cols);
            opt.v.emplace_back(w.rows, w.cols);
        }
    }
    if (opt.m.size() != weights.size()) {
        throw ShapeError("optimizer_step: moment state does not match parameter count");
    }
    ++opt.step_count;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step_count));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step_count));
    for (std::size_t t = 0; t < weights.size(); ++t) {
        Matrix& w = weights[t];
        Matrix& m = opt.m[t];
        Matrix& v = opt.v[t];
        const Matrix& g = grads[t];
        if (!m.same_shape(w)) {
            throw ShapeError("optimizer_step: moment shape " + m.shape_str() +
                             " does not match parameter shape " + w.shape_str());
        }
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            m.data[i] = opt.beta1 * m.data[i] + (1.0 - opt.beta1) * g.data[i];
            v.data[i] = opt.beta2 * v.data[i] + (1.0 - opt.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            w.data[i] -= opt.learning_rate * mhat / (std::sqrt(vhat) + opt.epsilon);
        }
    }
}

void optimizer_step(Optimizer& opt, Params& params, const std::vector<Matrix>& grads) {
    optimizer_step(opt, params.weights, grads);
}

}  // namespace pcnet::fnn
