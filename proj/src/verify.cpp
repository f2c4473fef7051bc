#include "pcnet/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "pcnet/bench.hpp"
#include "pcnet/checkpoint.hpp"
#include "pcnet/config.hpp"
#include "pcnet/dataset.hpp"
#include "pcnet/pcgraph.hpp"
#include "pcnet/pcn.hpp"
#include "pcnet/probmodel.hpp"
#include "pcnet/runner.hpp"

namespace pcnet::verify {

namespace {

using fnn::Direction;
using fnn::Params;
using fnn::Topology;

constexpr Activation kAllActs[4] = {Activation::Linear, Activation::Tanh,
                                    Activation::Sigmoid, Activation::Relu};
constexpr Activation kSmoothActs[3] = {Activation::Linear, Activation::Tanh,
                                       Activation::Sigmoid};

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

// Relative deviation with a unit floor, the comparison used by the gradient
// checks: |a - b| <= rtol * max(1, |a|, |b|).
double rel_dev(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

bool bitwise_equal(const Vector& a, const Vector& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool bitwise_equal(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!bitwise_equal(a[i], b[i])) return false;
    }
    return true;
}

Topology random_topology(Rng& rng, std::size_t index, std::size_t max_depth,
                         std::size_t max_width, bool smooth_only) {
    Topology topo;
    const std::size_t depth = 1 + index % max_depth;
    topo.widths.push_back(1 + static_cast<std::size_t>(rng.uniform(0.0, 1.0) * max_width));
    for (std::size_t t = 0; t < depth; ++t) {
        topo.widths.push_back(1 +
                              static_cast<std::size_t>(rng.uniform(0.0, 1.0) * max_width));
        topo.acts.push_back(smooth_only ? kSmoothActs[(index + t) % 3]
                                        : kAllActs[(index + t) % 4]);
    }
    topo.direction = Direction::Discriminative;
    return topo;
}

Vector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

pcn::NetState supervised_state(const Params& params, const Topology& topo,
                               const Vector& x, const Vector& y) {
    pcn::NetState state = pcn::make_state(topo);
    state.a[0] = x;
    state.clamped[0] = true;
    state.a[topo.widths.size() - 1] = y;
    state.clamped[topo.widths.size() - 1] = true;
    pcn::feedforward_init(params, topo, state);
    return state;
}

std::string time_note(const Stopwatch& sw) { return " [" + fmt(sw.seconds()) + " s]"; }

}  // namespace

CheckResult check_equivalence() {
    Stopwatch sw;
    CheckResult r{"equivalence", true, ""};
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        Rng rng(1000 + i);
        const Topology topo = random_topology(rng, i, 5, 16, false);
        Params params = fnn::make_params(topo);
        fnn::init_weights(params, topo, rng, 0.5);
        const Vector x = random_vector(rng, topo.widths[0]);
        const Vector via_fnn = fnn::forward_output(params, topo, x);
        const Vector via_pcn = pcn::test_discriminative(params, topo, x);
        if (!bitwise_equal(via_fnn, via_pcn)) ++mismatches;
    }
    r.pass = mismatches == 0;
    r.detail = "100 discriminative nets, bitwise forward equality, mismatches=" +
               std::to_string(mismatches) + time_note(sw);
    return r;
}

CheckResult check_zil() {
    Stopwatch sw;
    CheckResult r{"zil", true, ""};
    const double alpha = 0.01;
    double worst = 0.0;
    for (std::size_t i = 0; i < 50; ++i) {
        Rng rng(2000 + i);
        Topology topo = random_topology(rng, i, 4, 8, false);
        if (topo.acts.size() < 2) {  // depth >= 2 so hidden layers exist
            topo.widths.push_back(1 + static_cast<std::size_t>(rng.uniform(0.0, 1.0) * 8));
            topo.acts.push_back(kAllActs[i % 4]);
        }
        Params params = fnn::make_params(topo);
        fnn::init_weights(params, topo, rng, 0.5);
        const Vector x = random_vector(rng, topo.widths[0]);
        const Vector y = random_vector(rng, topo.widths.back());
        const std::vector<Matrix> bp = fnn::bp_gradients(params, topo, x, y);
        Params trained = params;
        const std::vector<Matrix> deltas = pcn::train_zil(trained, topo, x, y, alpha);
        for (std::size_t t = 0; t < bp.size(); ++t) {
            for (std::size_t k = 0; k < bp[t].data.size(); ++k) {
                worst = std::max(worst,
                                 std::abs(deltas[t].data[k] + alpha * bp[t].data[k]));
            }
        }
    }
    r.pass = worst < 1e-10;
    r.detail = "50 nets, max |delta + alpha*grad| = " + fmt(worst) + " (tol 1e-10)" +
               time_note(sw);
    return r;
}

namespace {

struct GradFamily {
    std::string name;
    double worst = 0.0;  // worst relative deviation seen
};

constexpr double kGradRtol = 1e-5;
constexpr double kGradH = 1e-6;

void fd_check(GradFamily& fam, double analytic, const std::function<double(double)>& at) {
    const double fd = (at(kGradH) - at(-kGradH)) / (2.0 * kGradH);
    fam.worst = std::max(fam.worst, rel_dev(analytic, fd));
}

GradFamily grad_bp() {
    GradFamily fam{"bp"};
    for (std::size_t i = 0; i < 50; ++i) {
        Rng rng(3000 + i);
        const Topology topo = random_topology(rng, i, 3, 5, true);
        Params params = fnn::make_params(topo);
        fnn::init_weights(params, topo, rng, 0.5);
        const Vector x = random_vector(rng, topo.widths[0]);
        const Vector y = random_vector(rng, topo.widths.back());
        const std::vector<Matrix> grads = fnn::bp_gradients(params, topo, x, y);
        for (std::size_t t = 0; t < grads.size(); ++t) {
            for (std::size_t k = 0; k < grads[t].data.size(); ++k) {
                fd_check(fam, grads[t].data[k], [&](double h) {
                    Params p = params;
                    p.weights[t].data[k] += h;
                    return 0.5 * fnn::mse_loss(fnn::forward_output(p, topo, x), y);
                });
            }
        }
    }
    return fam;
}

pcn::PrecisionSet random_precisions(const Topology& topo, Rng& rng) {
    pcn::PrecisionSet prec;
    prec.diag.resize(topo.widths.size());
    for (std::size_t l = 0; l < topo.widths.size(); ++l) {
        if (!pcn::layer_has_error(topo, l)) continue;
        prec.diag[l] = random_vector(rng, topo.widths[l], 0.5, 2.0);
    }
    return prec;
}

// Analytic activation gradient, recovered through the public step: a unit
// rate simultaneous step moves each unclamped layer by exactly -gradient.
std::vector<Vector> activation_gradient_probe(const Params& params, const Topology& topo,
                                              const pcn::NetState& state,
                                              const pcn::PrecisionSet& prec) {
    pcn::NetState probe = state;
    pcn::inference_step(params, topo, probe, 1.0, pcn::Schedule::Simultaneous, prec);
    std::vector<Vector> grads(state.a.size());
    for (std::size_t l = 0; l < state.a.size(); ++l) {
        if (state.clamped[l]) continue;
        grads[l].resize(state.a[l].size());
        for (std::size_t k = 0; k < state.a[l].size(); ++k) {
            grads[l][k] = state.a[l][k] - probe.a[l][k];
        }
    }
    return grads;
}

void grad_pcn(GradFamily& act_fam, GradFamily& weight_fam) {
    for (std::size_t i = 0; i < 50; ++i) {
        Rng rng(4000 + i);
        Topology topo = random_topology(rng, i, 3, 5, true);
        if (topo.acts.size() < 2) {
            topo.widths.push_back(2 + static_cast<std::size_t>(rng.uniform(0.0, 1.0) * 4));
            topo.acts.push_back(kSmoothActs[i % 3]);
        }
        Params params = fnn::make_params(topo);
        fnn::init_weights(params, topo, rng, 0.5);
        const Vector x = random_vector(rng, topo.widths[0]);
        const Vector y = random_vector(rng, topo.widths.back());
        pcn::NetState state = supervised_state(params, topo, x, y);
        const pcn::PrecisionSet prec =
            (i % 2 == 0) ? pcn::PrecisionSet{} : random_precisions(topo, rng);
        // Move off the feedforward manifold so the internal errors are
        // non-zero and the gradients are non-trivial.
        for (int s = 0; s < 3; ++s) {
            pcn::inference_step(params, topo, state, 0.1, pcn::Schedule::Simultaneous,
                                prec);
        }
        const std::vector<Vector> agrads =
            activation_gradient_probe(params, topo, state, prec);
        for (std::size_t l = 0; l < state.a.size(); ++l) {
            if (state.clamped[l]) continue;
            for (std::size_t k = 0; k < state.a[l].size(); ++k) {
                fd_check(act_fam, agrads[l][k], [&](double h) {
                    pcn::NetState st = state;
                    st.a[l][k] += h;
                    pcn::predictions(params, topo, st);
                    return pcn::energy(topo, st, prec).total;
                });
            }
        }
        const std::vector<Matrix> wgrads = pcn::weight_gradients(state, params, topo, prec);
        for (std::size_t t = 0; t < wgrads.size(); ++t) {
            for (std::size_t k = 0; k < wgrads[t].data.size(); ++k) {
                fd_check(weight_fam, wgrads[t].data[k], [&](double h) {
                    Params p = params;
                    p.weights[t].data[k] += h;
                    pcn::NetState st = state;
                    pcn::predictions(p, topo, st);
                    return pcn::energy(topo, st, prec).total;
                });
            }
        }
    }
}

graph::AdjacencyMask random_mask(Rng& rng, std::size_t n) {
    graph::AdjacencyMask mask(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j && rng.uniform() < 0.5) mask.set(i, j, true);
        }
    }
    return mask;
}

void grad_graph(GradFamily& fam) {
    for (std::size_t i = 0; i < 50; ++i) {
        Rng rng(4500 + i);
        const std::size_t n = 4 + i % 4;
        const graph::AdjacencyMask mask = random_mask(rng, n);
        graph::GraphParams params = graph::make_graph_params(mask);
        graph::init_graph_weights(params, mask, rng, 0.3);
        for (double& b : params.bias) b = rng.uniform(-0.3, 0.3);
        const Activation act = kSmoothActs[i % 3];
        graph::GraphState state = graph::make_graph_state(n);
        state.a = random_vector(rng, n);
        for (std::size_t k = 0; k < n; ++k) state.clamped[k] = rng.uniform() < 0.4;
        graph::graph_predictions(params, act, state);
        // Activation gradient through a unit-rate step.
        graph::GraphState probe = state;
        graph::graph_inference_step(params, act, probe, 1.0);
        for (std::size_t k = 0; k < n; ++k) {
            if (state.clamped[k]) continue;
            fd_check(fam, state.a[k] - probe.a[k], [&](double h) {
                graph::GraphState st = state;
                st.a[k] += h;
                graph::graph_predictions(params, act, st);
                return graph::graph_energy(st);
            });
        }
        const graph::GraphGradients grads =
            graph::graph_weight_gradients(params, act, state, mask);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                if (!mask.at(a, b)) continue;
                fd_check(fam, grads.weights(a, b), [&](double h) {
                    graph::GraphParams p = params;
                    p.weights(a, b) += h;
                    graph::GraphState st = state;
                    graph::graph_predictions(p, act, st);
                    return graph::graph_energy(st);
                });
            }
            fd_check(fam, grads.bias[a], [&](double h) {
                graph::GraphParams p = params;
                p.bias[a] += h;
                graph::GraphState st = state;
                graph::graph_predictions(p, act, st);
                return graph::graph_energy(st);
            });
        }
    }
}

prob::RaoBallardModel random_prob_model(Rng& rng, bool tanh_act) {
    prob::RaoBallardModel model;
    model.act = tanh_act ? Activation::Tanh : Activation::Linear;
    model.w_x = Matrix(3, 2);
    for (double& v : model.w_x.data) v = rng.uniform(-1.0, 1.0);
    model.w_z = Matrix(2, 2);
    for (double& v : model.w_z.data) v = rng.uniform(-1.0, 1.0);
    model.prior_input = random_vector(rng, 2);
    model.var_x = rng.uniform(0.25, 1.0);
    model.var_z = rng.uniform(0.5, 1.5);
    return model;
}

void grad_prob(GradFamily& fam) {
    for (std::size_t i = 0; i < 50; ++i) {
        Rng rng(5200 + i);
        prob::RaoBallardModel model = random_prob_model(rng, i % 2 == 1);
        const Vector x = random_vector(rng, 3);
        const Vector z = random_vector(rng, 2);
        const Vector gz = prob::rb_energy_grad_z(model, x, z);
        for (std::size_t k = 0; k < z.size(); ++k) {
            fd_check(fam, gz[k], [&](double h) {
                Vector zz = z;
                zz[k] += h;
                return prob::rb_energy(model, x, zz);
            });
        }
        const prob::ParamGradients g = prob::rb_param_gradients(model, x, z);
        for (std::size_t k = 0; k < g.w_x.data.size(); ++k) {
            fd_check(fam, g.w_x.data[k], [&](double h) {
                prob::RaoBallardModel m = model;
                m.w_x.data[k] += h;
                return prob::rb_energy(m, x, z);
            });
        }
        for (std::size_t k = 0; k < g.w_z.data.size(); ++k) {
            fd_check(fam, g.w_z.data[k], [&](double h) {
                prob::RaoBallardModel m = model;
                m.w_z.data[k] += h;
                return prob::rb_energy(m, x, z);
            });
        }
        for (std::size_t k = 0; k < g.prior_input.size(); ++k) {
            fd_check(fam, g.prior_input[k], [&](double h) {
                prob::RaoBallardModel m = model;
                m.prior_input[k] += h;
                return prob::rb_energy(m, x, z);
            });
        }
    }
}

// The precision objective over N states is sum_n (energy - 0.5 log det Pi).
// Its gradient in Pi_i is 0.5 sum_n eps_i^2 - N / (2 Pi_i); the M-step value
// 1 / mean(eps_i^2) zeroes it whenever the clip does not bind.
void grad_precision(GradFamily& fam, double& worst_stationary) {
    worst_stationary = 0.0;
    for (std::size_t i = 0; i < 50; ++i) {
        Rng rng(5600 + i);
        Topology topo = random_topology(rng, i, 3, 4, true);
        Params params = fnn::make_params(topo);
        fnn::init_weights(params, topo, rng, 0.5);
        std::vector<pcn::NetState> states;
        const std::size_t n_states = 4;
        for (std::size_t s = 0; s < n_states; ++s) {
            pcn::NetState st = pcn::make_state(topo);
            for (std::size_t l = 0; l < topo.widths.size(); ++l) {
                st.a[l] = random_vector(rng, topo.widths[l]);
            }
            st.clamped[0] = true;
            st.clamped[topo.widths.size() - 1] = true;
            pcn::predictions(params, topo, st);
            states.push_back(std::move(st));
        }
        auto objective = [&](const pcn::PrecisionSet& prec) {
            double acc = 0.0;
            for (const pcn::NetState& st : states) {
                acc += prob::multilayer_energy_logdet(topo, st, prec);
            }
            return acc;
        };
        pcn::PrecisionSet prec = random_precisions(topo, rng);
        for (std::size_t l = 0; l < prec.diag.size(); ++l) {
            for (std::size_t k = 0; k < prec.diag[l].size(); ++k) {
                double sum_sq = 0.0;
                for (const pcn::NetState& st : states) {
                    sum_sq += st.eps[l][k] * st.eps[l][k];
                }
                const double analytic =
                    0.5 * sum_sq - static_cast<double>(n_states) / (2.0 * prec.diag[l][k]);
                fd_check(fam, analytic, [&](double h) {
                    pcn::PrecisionSet p = prec;
                    p.diag[l][k] += h;
                    return objective(p);
                });
            }
        }
        // Stationarity of the M-step update itself.
        const pcn::PrecisionSet updated = pcn::update_precisions(topo, states);
        for (std::size_t l = 0; l < updated.diag.size(); ++l) {
            for (std::size_t k = 0; k < updated.diag[l].size(); ++k) {
                double sum_sq = 0.0;
                for (const pcn::NetState& st : states) {
                    sum_sq += st.eps[l][k] * st.eps[l][k];
                }
                const double analytic = 0.5 * sum_sq - static_cast<double>(n_states) /
                                                           (2.0 * updated.diag[l][k]);
                worst_stationary = std::max(worst_stationary, std::abs(analytic));
            }
        }
    }
}

}  // namespace

CheckResult check_gradients() {
    Stopwatch sw;
    CheckResult r{"gradients", true, ""};
    GradFamily bp = grad_bp();
    GradFamily pcn_act{"pcn-activation"};
    GradFamily pcn_w{"pcn-weight"};
    grad_pcn(pcn_act, pcn_w);
    GradFamily gg{"graph"};
    grad_graph(gg);
    GradFamily pg{"probmodel"};
    grad_prob(pg);
    GradFamily prec{"precision"};
    double worst_stationary = 0.0;
    grad_precision(prec, worst_stationary);
    const GradFamily* fams[] = {&bp, &pcn_act, &pcn_w, &gg, &pg, &prec};
    std::string detail;
    for (const GradFamily* f : fams) {
        if (f->worst >= kGradRtol) r.pass = false;
        detail += f->name + "=" + fmt(f->worst) + " ";
    }
    if (worst_stationary >= 1e-9) r.pass = false;
    r.detail = "worst relative deviation per family (rtol 1e-5): " + detail +
               "; M-step gradient at update = " + fmt(worst_stationary) + time_note(sw);
    return r;
}

CheckResult check_descent() {
    Stopwatch sw;
    CheckResult r{"descent", true, ""};
    double worst_increase = 0.0;
    std::size_t net_violations = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        Rng rng(6000 + i);
        Topology topo = random_topology(rng, i, 3, 8, true);
        if (topo.acts.size() < 2) {
            topo.widths.push_back(2 + static_cast<std::size_t>(rng.uniform(0.0, 1.0) * 6));
            topo.acts.push_back(kSmoothActs[i % 3]);
        }
        Params params = fnn::make_params(topo);
        fnn::init_weights(params, topo, rng, 0.3);
        pcn::NetState state = pcn::make_state(topo);
        state.a[0] = random_vector(rng, topo.widths[0]);
        state.clamped[0] = true;
        const std::size_t top = topo.widths.size() - 1;
        state.a[top] = random_vector(rng, topo.widths[top]);
        state.clamped[top] = true;
        if (i % 2 == 0) {
            pcn::feedforward_init(params, topo, state);
        } else {
            for (std::size_t l = 1; l < top; ++l) state.a[l] = random_vector(rng, topo.widths[l]);
            pcn::predictions(params, topo, state);
        }
        double prev = pcn::energy(topo, state).total;
        for (int s = 0; s < 100; ++s) {
            pcn::inference_step(params, topo, state, 0.1);
            const double cur = pcn::energy(topo, state).total;
            if (cur > prev + 1e-12) {
                ++net_violations;
                worst_increase = std::max(worst_increase, cur - prev);
                break;
            }
            prev = cur;
        }
    }
    std::size_t graph_violations = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        Rng rng(6500 + i);
        const std::size_t n = 3 + i % 6;
        const graph::AdjacencyMask mask = random_mask(rng, n);
        graph::GraphParams params = graph::make_graph_params(mask);
        graph::init_graph_weights(params, mask, rng, 0.3);
        for (double& b : params.bias) b = rng.uniform(-0.3, 0.3);
        const Activation act = kSmoothActs[i % 3];
        graph::GraphState state = graph::make_graph_state(n);
        state.a = random_vector(rng, n);
        state.clamped[i % n] = true;  // at least one clamped, rest free
        graph::graph_predictions(params, act, state);
        double prev = graph::graph_energy(state);
        for (int s = 0; s < 100; ++s) {
            graph::graph_inference_step(params, act, state, 0.1);
            const double cur = graph::graph_energy(state);
            if (cur > prev + 1e-12) {
                ++graph_violations;
                worst_increase = std::max(worst_increase, cur - prev);
                break;
            }
            prev = cur;
        }
    }
    r.pass = net_violations == 0 && graph_violations == 0;
    r.detail = "100 nets + 100 graphs, 100 steps at rate 0.1; violations: nets=" +
               std::to_string(net_violations) + " graphs=" + std::to_string(graph_violations) +
               (worst_increase > 0.0 ? " worst increase=" + fmt(worst_increase) : "") +
               time_note(sw);
    return r;
}

CheckResult check_counts() {
    Stopwatch sw;
    CheckResult r{"counts", true, ""};
    const int T = 16;
    std::string mismatch;
    for (const std::string algo : {"bp", "il", "incremental_il"}) {
        for (std::size_t L : {2, 4, 8, 16}) {
            const bench::CountRow row = bench::measure_counts(algo, L, T, 77);
            if (row.measured != row.predicted) {
                r.pass = false;
                mismatch += " " + algo + "@L=" + std::to_string(L) + ":" +
                            std::to_string(row.measured) + "!=" +
                            std::to_string(row.predicted);
            }
        }
    }
    const std::vector<std::size_t> depths = {4, 8, 16, 32};
    std::vector<std::uint64_t> bp_counts, il_counts, iil_counts, critical;
    for (std::size_t L : depths) {
        bp_counts.push_back(bench::measure_counts("bp", L, T, 78).measured);
        const bench::CountRow il = bench::measure_counts("il", L, T, 78);
        il_counts.push_back(il.measured);
        critical.push_back(il.critical_path);
        iil_counts.push_back(bench::measure_counts("incremental_il", L, T, 78).measured);
    }
    const double s_bp = bench::loglog_slope(depths, bp_counts);
    const double s_il = bench::loglog_slope(depths, il_counts);
    const double s_iil = bench::loglog_slope(depths, iil_counts);
    const double s_par = bench::loglog_slope(depths, critical);
    auto in = [](double v, double c, double tol) { return std::abs(v - c) <= tol; };
    const bool serial_ok =
        in(s_bp, 1.0, 0.05) && in(s_il, 1.0, 0.05) && in(s_iil, 1.0, 0.05);
    const bool parallel_ok = in(s_par, 0.0, 0.05);
    if (!serial_ok || !parallel_ok) r.pass = false;
    r.detail = std::string("exactness L={2,4,8,16}") +
               (mismatch.empty() ? " ok" : mismatch) + "; slopes(L={4..32}): bp=" +
               fmt(s_bp) + " il(T=16)=" + fmt(s_il) + " iil=" + fmt(s_iil) +
               " (target 1.0±0.05), parallel critical path=" + fmt(s_par) +
               " (target 0.0±0.05)" + time_note(sw);
    return r;
}

namespace {

// Copies layered transition weights into the equivalent graph parameters.
void map_layered_to_graph(const Params& params,
                          const std::vector<std::size_t>& offsets,
                          graph::GraphParams& gp) {
    for (std::size_t t = 0; t < params.weights.size(); ++t) {
        const Matrix& w = params.weights[t];
        const std::size_t src = offsets[t];
        const std::size_t dst = offsets[t + 1];
        for (std::size_t i = 0; i < w.rows; ++i) {
            for (std::size_t j = 0; j + 1 < w.cols; ++j) {
                gp.weights(dst + i, src + j) = w(i, j);
            }
            gp.bias[dst + i] = w(i, w.cols - 1);
        }
    }
}

double layered_graph_dev(const pcn::NetState& ls, const graph::GraphState& gs,
                         const std::vector<std::size_t>& offsets,
                         const Topology& topo) {
    double worst = 0.0;
    for (std::size_t l = 0; l < topo.widths.size(); ++l) {
        for (std::size_t k = 0; k < topo.widths[l]; ++k) {
            worst = std::max(worst, std::abs(ls.a[l][k] - gs.a[offsets[l] + k]));
        }
    }
    return worst;
}

double layered_graph_weight_dev(const Params& params, const graph::GraphParams& gp,
                                const std::vector<std::size_t>& offsets) {
    double worst = 0.0;
    for (std::size_t t = 0; t < params.weights.size(); ++t) {
        const Matrix& w = params.weights[t];
        for (std::size_t i = 0; i < w.rows; ++i) {
            for (std::size_t j = 0; j + 1 < w.cols; ++j) {
                worst = std::max(worst, std::abs(w(i, j) - gp.weights(offsets[t + 1] + i,
                                                                      offsets[t] + j)));
            }
            worst = std::max(worst,
                             std::abs(w(i, w.cols - 1) - gp.bias[offsets[t + 1] + i]));
        }
    }
    return worst;
}

}  // namespace

CheckResult check_reduction() {
    Stopwatch sw;
    CheckResult r{"reduction", true, ""};
    double worst = 0.0;
    const double gamma = 0.1;
    const double alpha = 0.05;
    for (std::size_t seed = 0; seed < 10; ++seed) {
        Rng rng(7000 + seed);
        Topology topo;
        topo.widths = {2 + seed % 2, 3, 2 + (seed + 1) % 2};
        topo.acts = {kSmoothActs[seed % 3], kSmoothActs[(seed + 1) % 3]};
        topo.direction = Direction::Discriminative;
        Params params = fnn::make_params(topo);
        fnn::init_weights(params, topo, rng, 0.4);
        std::vector<std::size_t> offsets;
        const graph::AdjacencyMask mask =
            graph::hierarchical(topo.widths, topo.direction, &offsets);
        graph::GraphParams gp = graph::make_graph_params(mask);
        map_layered_to_graph(params, offsets, gp);
        const Vector x = random_vector(rng, topo.widths[0]);
        const Vector y = random_vector(rng, topo.widths.back());
        pcn::NetState ls = supervised_state(params, topo, x, y);
        graph::ClampingPlan plan;
        for (std::size_t k = 0; k < topo.widths[0]; ++k) plan.x_nodes.push_back(offsets[0] + k);
        for (std::size_t k = 0; k < topo.widths.back(); ++k) {
            plan.y_nodes.push_back(offsets.back() + k);
        }
        plan.init = graph::GraphInit::TopoSweep;
        const Activation act = topo.acts[0];
        // The layered module allows distinct activations per transition; the
        // graph module has one activation for every node, so restrict the
        // comparison to uniform-activation topologies.
        Topology uni = topo;
        uni.acts.assign(topo.acts.size(), act);
        graph::GraphState gs =
            graph::setup_graph_state(gp, act, mask, plan, x, &y);
        pcn::NetState uls = pcn::make_state(uni);
        uls.a[0] = x;
        uls.clamped[0] = true;
        uls.a[uni.widths.size() - 1] = y;
        uls.clamped[uni.widths.size() - 1] = true;
        pcn::feedforward_init(params, uni, uls);
        worst = std::max(worst, layered_graph_dev(uls, gs, offsets, uni));
        for (int update = 0; update < 10; ++update) {
            for (int s = 0; s < 10; ++s) {
                pcn::inference_step(params, uni, uls, gamma);
                graph::graph_inference_step(gp, act, gs, gamma);
                worst = std::max(worst, layered_graph_dev(uls, gs, offsets, uni));
            }
            const std::vector<Matrix> grads = pcn::weight_gradients(uls, params, uni);
            for (std::size_t t = 0; t < params.weights.size(); ++t) {
                for (std::size_t k = 0; k < params.weights[t].data.size(); ++k) {
                    params.weights[t].data[k] -= alpha * grads[t].data[k];
                }
            }
            graph::graph_weight_update(gp, act, gs, mask, alpha);
            worst = std::max(worst, layered_graph_weight_dev(params, gp, offsets));
            // Refresh both sides against the new weights before continuing.
            pcn::predictions(params, uni, uls);
            graph::graph_predictions(gp, act, gs);
        }
    }
    r.pass = worst <= 1e-12;
    r.detail = "10 seeds, 100 inference steps + 10 weight updates each, max |dev| = " +
               fmt(worst) + " (tol 1e-12)" + time_note(sw);
    return r;
}

CheckResult check_em() {
    Stopwatch sw;
    CheckResult r{"em", true, ""};
    // MAP E-step against the normal equations.
    double worst_map = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
        Rng rng(8000 + i);
        prob::RaoBallardModel model = random_prob_model(rng, false);
        const Vector x = random_vector(rng, 3);
        // (W'W/vx + I/vz) z = W'x/vx + Wz zp/vz
        const std::size_t nz = model.w_x.cols;
        Matrix a(nz, nz);
        for (std::size_t p = 0; p < nz; ++p) {
            for (std::size_t q = 0; q < nz; ++q) {
                double acc = 0.0;
                for (std::size_t k = 0; k < model.w_x.rows; ++k) {
                    acc += model.w_x(k, p) * model.w_x(k, q);
                }
                a(p, q) = acc / model.var_x + (p == q ? 1.0 / model.var_z : 0.0);
            }
        }
        Vector rhs(nz, 0.0);
        const Vector zp = matvec(model.w_z, model.prior_input);
        for (std::size_t p = 0; p < nz; ++p) {
            double acc = 0.0;
            for (std::size_t k = 0; k < model.w_x.rows; ++k) {
                acc += model.w_x(k, p) * x[k];
            }
            rhs[p] = acc / model.var_x + zp[p] / model.var_z;
        }
        const Vector z_star = solve(a, rhs);
        double frob = 0.0;
        for (double v : model.w_x.data) frob += v * v;
        const double lip = 2.0 * (frob / model.var_x + 1.0 / model.var_z);
        const Vector z =
            prob::map_estep(model, x, Vector(nz, 0.0), 0.9 / lip, 4000);
        for (std::size_t k = 0; k < nz; ++k) {
            worst_map = std::max(worst_map, std::abs(z[k] - z_star[k]));
        }
    }
    if (worst_map >= 1e-6) r.pass = false;
    // Monotone marginal NLL under full-E / partial-M alternation. The M-step
    // size is kept small: alternating a mode E-step with large parameter
    // jumps can overshoot and wiggle the marginal likelihood.
    std::size_t violations = 0;
    double worst_increase = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        const prob::RaoBallardModel truth = prob::make_linear_latent_model(8100 + i);
        Rng rng(8200 + i);
        std::vector<Vector> xs = prob::sample_linear_latent(truth, 20, rng);
        prob::RaoBallardModel model = prob::make_linear_latent_model(8300 + i);
        prob::EmConfig cfg;
        cfg.iterations = 200;
        cfg.estep_rate = 0.004;
        cfg.estep_steps = 800;
        cfg.mstep_alpha = 0.001;
        const prob::EmTrace trace = prob::run_em(model, xs, cfg);
        for (std::size_t k = 0; k + 1 < trace.nll.size(); ++k) {
            const double inc = trace.nll[k + 1] - trace.nll[k];
            worst_increase = std::max(worst_increase, inc);
            if (inc > 1e-8) ++violations;
        }
    }
    if (violations > 0) r.pass = false;
    r.detail = "MAP vs normal equations max dev = " + fmt(worst_map) +
               " (tol 1e-6); NLL increases > 1e-8 over 10x200 iterations: " +
               std::to_string(violations) + ", max step change = " + fmt(worst_increase) +
               time_note(sw);
    return r;
}

CheckResult check_vfe() {
    Stopwatch sw;
    CheckResult r{"vfe", true, ""};
    double worst_fd = 0.0;
    std::size_t degenerate = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        Rng rng(8500 + i);
        prob::RaoBallardModel model = random_prob_model(rng, i % 2 == 1);
        const Vector x = random_vector(rng, 3);
        double frob = 0.0;
        for (double v : model.w_x.data) frob += v * v;
        const double lip = 2.0 * (frob / model.var_x + 1.0 / model.var_z);
        const Vector z =
            prob::map_estep(model, x, Vector(2, 0.0), 0.9 / lip, 3000);
        const prob::VfeReport report = prob::gaussian_vfe(model, x, z);
        if (report.degenerate) {
            ++degenerate;
            continue;
        }
        const double scale = std::max(1.0, std::abs(report.vfe));
        for (std::size_t a = 0; a < report.covariance.rows; ++a) {
            for (std::size_t b = 0; b < report.covariance.cols; ++b) {
                const double h = 1e-6;
                Matrix sp = report.covariance;
                Matrix sm = report.covariance;
                sp(a, b) += h;
                sm(a, b) -= h;
                const double fd = (prob::vfe_with_covariance(model, x, z, sp) -
                                   prob::vfe_with_covariance(model, x, z, sm)) /
                                  (2.0 * h);
                worst_fd = std::max(worst_fd, std::abs(fd) / scale);
            }
        }
    }
    if (worst_fd >= 1e-4 || degenerate > 0) r.pass = false;
    // Closed-form corner: n_z = 1, H = 1, E = 0.
    prob::RaoBallardModel unit;
    unit.act = Activation::Linear;
    unit.w_x = Matrix(1, 1);
    unit.w_x(0, 0) = 1.0;
    unit.w_z = Matrix(1, 1);
    unit.w_z(0, 0) = 1.0;
    unit.prior_input = {0.7};
    unit.var_x = 4.0;
    unit.var_z = 4.0;
    const prob::VfeReport unit_report = prob::gaussian_vfe(unit, {0.7}, {0.7});
    const double expected = -0.5 * std::log(2.0 * 3.141592653589793238462643);
    const double unit_dev = std::abs(unit_report.vfe - expected);
    if (unit_dev >= 1e-12) r.pass = false;
    r.detail = "20 instances, max |dF/dS| at S=H^-1 (scaled) = " + fmt(worst_fd) +
               " (tol 1e-4), degenerate=" + std::to_string(degenerate) +
               "; unit case |F + ln(2*pi)/2| = " + fmt(unit_dev) + " (tol 1e-12)" +
               time_note(sw);
    return r;
}

CheckResult check_learning() {
    Stopwatch sw;
    CheckResult r{"learning", true, ""};
    const data::Dataset xs = data::make_xor();
    auto train_until = [&](bool incremental, std::uint64_t seed, int steps,
                           int max_epochs) -> int {
        Topology topo;
        topo.widths = {2, 8, 1};
        topo.acts = {Activation::Tanh, Activation::Sigmoid};
        topo.direction = Direction::Discriminative;
        Params params = fnn::make_params(topo);
        Rng rng(seed);
        fnn::init_weights(params, topo, rng);
        pcn::InferenceConfig icfg;
        icfg.rate = 0.1;
        icfg.steps = steps;
        fnn::Optimizer opt = fnn::Optimizer::adam(0.01);
        for (int e = 1; e <= max_epochs; ++e) {
            const pcn::TrainTrace t =
                incremental
                    ? pcn::train_incremental_il(params, topo, xs.xs, &xs.ys, icfg, opt, 1)
                    : pcn::train_il(params, topo, xs.xs, &xs.ys, icfg, opt, 1);
            if (t.epochs.at(0).accuracy == 1.0) return e;
        }
        return -1;
    };
    const int il_epochs = train_until(false, 10, 20, 2000);
    const int iil_epochs = train_until(true, 10, 3, 4000);
    if (il_epochs < 0 || iil_epochs < 0) r.pass = false;
    r.detail = "XOR 100% accuracy: il(T=20) at epoch " +
               (il_epochs > 0 ? std::to_string(il_epochs) : std::string("never")) +
               " (limit 2000), incremental il(T=3) at epoch " +
               (iil_epochs > 0 ? std::to_string(iil_epochs) : std::string("never")) +
               " (limit 4000)" + time_note(sw);
    return r;
}

CheckResult check_determinism() {
    Stopwatch sw;
    CheckResult r{"determinism", true, ""};
    // Worker-count invariance of the simultaneous schedule.
    Rng rng(9000);
    Topology topo;
    topo.widths = {3, 6, 6, 5, 2};
    topo.acts = {Activation::Tanh, Activation::Sigmoid, Activation::Tanh,
                 Activation::Linear};
    topo.direction = Direction::Discriminative;
    Params params = fnn::make_params(topo);
    fnn::init_weights(params, topo, rng, 0.4);
    const Vector x = random_vector(rng, 3);
    const Vector y = random_vector(rng, 2);
    const pcn::NetState start = supervised_state(params, topo, x, y);
    pcn::NetState reference = start;
    for (int s = 0; s < 20; ++s) {
        pcn::inference_step_parallel(params, topo, reference, 0.1, {}, 1);
    }
    std::string worker_fail;
    for (int k : {2, 4, 8}) {
        pcn::NetState st = start;
        for (int s = 0; s < 20; ++s) {
            pcn::inference_step_parallel(params, topo, st, 0.1, {}, k);
        }
        if (!bitwise_equal(st.a, reference.a) || !bitwise_equal(st.eps, reference.eps) ||
            !bitwise_equal(st.mu, reference.mu)) {
            worker_fail += " k=" + std::to_string(k);
        }
    }
    if (!worker_fail.empty()) r.pass = false;
    // Byte-identical metrics for identical configs; a different worker count
    // must not change the bytes either.
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "pcnet_verify_determinism";
    fs::create_directories(dir);
    const fs::path data_path = dir / "xor.csv";
    data::save_csv(data_path.string(), data::make_xor());
    auto run_with = [&](const std::string& tag, int workers) {
        const fs::path metrics = dir / ("metrics_" + tag + ".csv");
        std::ostringstream cfg_text;
        cfg_text << "{\n"
                 << "  \"schema_version\": 1,\n"
                 << "  \"algorithm\": \"il\",\n"
                 << "  \"model\": {\"widths\": [2, 4, 1], \"activations\": [\"tanh\", "
                    "\"sigmoid\"]},\n"
                 << "  \"training\": {\"gamma\": 0.1, \"alpha\": 0.05, \"T\": 8, "
                    "\"epochs\": 5, \"seed\": 42, \"workers\": "
                 << workers << "},\n"
                 << "  \"dataset\": \"" << data_path.string() << "\",\n"
                 << "  \"output\": {\"metrics\": \"" << metrics.string() << "\"}\n"
                 << "}\n";
        const cfg::RunConfig rc = cfg::parse_run_config(cfg_text.str(), "determinism");
        std::ostringstream sink;
        run::run_training(rc, sink);
        std::ifstream in(metrics, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    const std::string run_a = run_with("a", 1);
    const std::string run_b = run_with("b", 1);
    const std::string run_c = run_with("c", 4);
    const bool repeat_ok = run_a == run_b && !run_a.empty();
    const bool workers_ok = run_a == run_c;
    fs::remove_all(dir);
    if (!repeat_ok || !workers_ok) r.pass = false;
    r.detail = std::string("inference bitwise equal for k={2,4,8}") +
               (worker_fail.empty() ? " ok" : worker_fail) +
               "; metrics bytes: repeat " + (repeat_ok ? "identical" : "DIFFER") +
               ", 4-worker run " + (workers_ok ? "identical" : "DIFFER") + time_note(sw);
    return r;
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names = {
        "equivalence", "zil",       "gradients", "descent", "counts",
        "reduction",   "em",        "vfe",       "learning", "determinism"};
    return names;
}

std::vector<CheckResult> run_suite(const std::string& name) {
    std::vector<CheckResult> results;
    auto run_one = [&](const std::string& n) {
        if (n == "equivalence") return check_equivalence();
        if (n == "zil") return check_zil();
        if (n == "gradients") return check_gradients();
        if (n == "descent") return check_descent();
        if (n == "counts") return check_counts();
        if (n == "reduction") return check_reduction();
        if (n == "em") return check_em();
        if (n == "vfe") return check_vfe();
        if (n == "learning") return check_learning();
        if (n == "determinism") return check_determinism();
        throw ConfigError("unknown verification suite \"" + n + "\"");
    };
    if (name == "all") {
        for (const std::string& n : suite_names()) results.push_back(run_one(n));
    } else {
        results.push_back(run_one(name));
    }
    return results;
}

}  // namespace pcnet::verify
