#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcnet/pcn.hpp"

namespace pcnet::bench {

// Closed-form matmul-event counts per weight update, derived by hand from
// the update equations and fixed before the instrumentation existed.
//
// One transition holds one weight matrix; depth L means L transitions.
//
//   bp:  forward pass L affine products, backward pass L-1 transpose
//        products, then L gradient outer products:      (2L-1) + L = 3L-1.
//   il:  each inference step recomputes, for every one of the L-1 hidden
//        layers, the forward product into its target and the transpose
//        pull-back (2(L-1) products), then refreshes all L predictions
//        (L products): 3L-2 per step. After T steps, L gradient outer
//        products:                                       T(3L-2) + L.
//   incremental il: one inference step plus gradients per update:
//                                                        (3L-2) + L = 4L-2.
//   il critical path: within a step the per-layer updates are independent
//        (2 products each) and the per-layer refreshes are independent
//        (1 product each); the gradient outer products are independent
//        (1 each). Max per task summed over phases:      3T + 1.
std::uint64_t bp_events_per_update(std::size_t depth);
std::uint64_t il_events_per_update(std::size_t depth, int steps);
std::uint64_t incremental_il_events_per_update(std::size_t depth);
std::uint64_t il_critical_path_per_update(int steps);

struct CountRow {
    std::string algorithm;
    std::size_t depth = 0;
    int steps = 0;
    std::uint64_t measured = 0;
    std::uint64_t predicted = 0;
    std::uint64_t critical_path = 0;  // measured; 0 when not applicable
};

// Builds a small network with `depth` transitions and instruments one weight
// update of the given algorithm ("bp", "il", or "incremental_il"). The
// feedforward initialisation is excluded: the counters are read after it.
CountRow measure_counts(const std::string& algorithm, std::size_t depth, int steps,
                        std::uint64_t seed);

struct ParallelRow {
    int workers = 0;
    std::uint64_t critical_path = 0;  // sum over phases of the max per-task events
    std::uint64_t serial_events = 0;  // total events, for comparison
    double wall_seconds_per_step = 0.0;
    bool bitwise_equal = true;  // activations match the 1-worker run exactly
};

struct ParallelReport {
    std::size_t depth = 0;
    int steps = 0;
    std::vector<ParallelRow> rows;
};

// Runs T inference steps of the snapshot schedule with each worker count and
// checks every run is bitwise identical to the single-worker one.
ParallelReport bench_parallel_inference(std::size_t depth, int steps,
                                        const std::vector<int>& worker_counts,
                                        std::uint64_t seed);

// Least-squares slope of log(count) against log(depth).
double loglog_slope(const std::vector<std::size_t>& depths,
                    const std::vector<std::uint64_t>& counts);

}  // namespace pcnet::bench
