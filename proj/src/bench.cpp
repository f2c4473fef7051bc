#include "pcnet/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "pcnet/fnn.hpp"

namespace pcnet::bench {

namespace {

using fnn::Params;
using fnn::Topology;

struct Fixture {
    Topology topo;
    Params params;
    Vector x;
    Vector y;
};

// A narrow constant-width column: only the depth matters for the counts.
Fixture make_fixture(std::size_t depth, std::uint64_t seed) {
    Fixture f;
    f.topo.widths.assign(depth + 1, 3);
    f.topo.acts.assign(depth, Activation::Tanh);
    f.topo.direction = fnn::Direction::Discriminative;
    f.params = fnn::make_params(f.topo);
    Rng rng(seed);
    fnn::init_weights(f.params, f.topo, rng);
    f.x.resize(3);
    f.y.resize(3);
    for (double& v : f.x) v = rng.uniform(-1.0, 1.0);
    for (double& v : f.y) v = rng.uniform(-1.0, 1.0);
    return f;
}

pcn::NetState clamped_state(const Fixture& f) {
    pcn::NetState state = pcn::make_state(f.topo);
    state.a[0] = f.x;
    state.clamped[0] = true;
    const std::size_t top = f.topo.widths.size() - 1;
    state.a[top] = f.y;
    state.clamped[top] = true;
    pcn::feedforward_init(f.params, f.topo, state);
    return state;
}

std::uint64_t gradient_phase(const Fixture& f, const pcn::NetState& state, int workers,
                             std::uint64_t* max_task_events) {
    const std::size_t n_trans = f.params.weights.size();
    std::vector<Matrix> grads(n_trans);
    std::vector<std::uint64_t> per_task;
    const std::uint64_t before = OpCounter::events();
    parallel_for(
        n_trans, workers,
        [&](std::size_t t) {
            grads[t] = pcn::transition_gradient(state, f.params, f.topo, t);
        },
        max_task_events ? &per_task : nullptr);
    if (max_task_events) {
        *max_task_events = 0;
        for (std::uint64_t e : per_task) *max_task_events = std::max(*max_task_events, e);
    }
    return OpCounter::events() - before;
}

bool bitwise_equal_vectors(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size()) return false;
        if (!a[i].empty() &&
            std::memcmp(a[i].data(), b[i].data(), a[i].size() * sizeof(double)) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace

std::uint64_t bp_events_per_update(std::size_t depth) { return 3 * depth - 1; }

std::uint64_t il_events_per_update(std::size_t depth, int steps) {
    return static_cast<std::uint64_t>(steps) * (3 * depth - 2) + depth;
}

std::uint64_t incremental_il_events_per_update(std::size_t depth) { return 4 * depth - 2; }

std::uint64_t il_critical_path_per_update(int steps) {
    return 3 * static_cast<std::uint64_t>(steps) + 1;
}

CountRow measure_counts(const std::string& algorithm, std::size_t depth, int steps,
                        std::uint64_t seed) {
    if (depth < 2) throw ConfigError("measure_counts: depth must be at least 2");
    CountRow row;
    row.algorithm = algorithm;
    row.depth = depth;
    const Fixture f = make_fixture(depth, seed);
    if (algorithm == "bp") {
        row.steps = 0;
        row.predicted = bp_events_per_update(depth);
        const std::uint64_t before = OpCounter::events();
        (void)fnn::bp_gradients(f.params, f.topo, f.x, f.y);
        row.measured = OpCounter::events() - before;
        return row;
    }
    if (algorithm == "il") {
        row.steps = steps;
        row.predicted = il_events_per_update(depth, steps);
        pcn::NetState state = clamped_state(f);
        const std::uint64_t before = OpCounter::events();
        std::uint64_t critical = 0;
        for (int s = 0; s < steps; ++s) {
            pcn::StepTaskCounts counts;
            pcn::inference_step_parallel(f.params, f.topo, state, 0.1, {}, 1, &counts);
            critical += counts.update_max + counts.refresh_max;
        }
        std::uint64_t grad_max = 0;
        gradient_phase(f, state, 1, &grad_max);
        row.measured = OpCounter::events() - before;
        row.critical_path = critical + grad_max;
        return row;
    }
    if (algorithm == "incremental_il") {
        row.steps = 1;
        row.predicted = incremental_il_events_per_update(depth);
        pcn::NetState state = clamped_state(f);
        const std::uint64_t before = OpCounter::events();
        pcn::inference_step(f.params, f.topo, state, 0.1);
        (void)pcn::weight_gradients(state, f.params, f.topo);
        row.measured = OpCounter::events() - before;
        return row;
    }
    throw ConfigError("measure_counts: unknown algorithm \"" + algorithm +
                      "\" (expected bp, il, or incremental_il)");
}

ParallelReport bench_parallel_inference(std::size_t depth, int steps,
                                        const std::vector<int>& worker_counts,
                                        std::uint64_t seed) {
    if (depth < 2) throw ConfigError("bench_parallel_inference: depth must be at least 2");
    ParallelReport report;
    report.depth = depth;
    report.steps = steps;
    const Fixture f = make_fixture(depth, seed);
    std::vector<Vector> reference;
    std::vector<int> workers = worker_counts;
    if (workers.empty() || workers.front() != 1) workers.insert(workers.begin(), 1);
    for (int k : workers) {
        if (k < 1) throw ConfigError("bench_parallel_inference: worker counts must be >= 1");
        pcn::NetState state = clamped_state(f);
        ParallelRow row;
        row.workers = k;
        const std::uint64_t before = OpCounter::events();
        const auto t0 = std::chrono::steady_clock::now();
        for (int s = 0; s < steps; ++s) {
            pcn::StepTaskCounts counts;
            pcn::inference_step_parallel(f.params, f.topo, state, 0.1, {}, k, &counts);
            row.critical_path += counts.update_max + counts.refresh_max;
        }
        const auto t1 = std::chrono::steady_clock::now();
        std::uint64_t grad_max = 0;
        gradient_phase(f, state, k, &grad_max);
        row.critical_path += grad_max;
        row.serial_events = OpCounter::events() - before;
        row.wall_seconds_per_step =
            std::chrono::duration<double>(t1 - t0).count() / std::max(steps, 1);
        if (k == 1) {
            reference = state.a;
            row.bitwise_equal = true;
        } else {
            row.bitwise_equal = bitwise_equal_vectors(state.a, reference);
        }
        report.rows.push_back(row);
    }
    return report;
}

double loglog_slope(const std::vector<std::size_t>& depths,
                    const std::vector<std::uint64_t>& counts) {
    if (depths.size() != counts.size() || depths.size() < 2) {
        throw ConfigError("loglog_slope: need at least two (depth, count) pairs");
    }
    const double n = static_cast<double>(depths.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < depths.size(); ++i) {
        const double lx = std::log(static_cast<double>(depths[i]));
        const double ly = std::log(static_cast<double>(counts[i]));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw NumericError("loglog_slope: degenerate depth set");
    return (n * sxy - sx * sy) / denom;
}

}  // namespace pcnet::bench
