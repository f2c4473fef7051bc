#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcnet/fnn.hpp"
#include "pcnet/pcgraph.hpp"
#include "pcnet/pcn.hpp"

namespace pcnet::cfg {

enum class AlgorithmKind { Il, Bp, IncrementalIl, Zil, GraphIl };

std::string to_string(AlgorithmKind k);
AlgorithmKind algorithm_from_string(const std::string& s);

struct ModelConfig {
    bool is_graph = false;
    // Layered models.
    std::vector<std::size_t> widths;
    std::vector<Activation> activations;
    fnn::Direction direction = fnn::Direction::Discriminative;
    // Graph models.
    std::string mask_file;
    Activation graph_activation = Activation::Tanh;
};

struct TrainingConfig {
    double gamma = 0.1;         // inference step size
    double alpha = 0.01;        // weight learning rate
    int inference_steps = 20;   // steps per sample ("T" in the config file)
    int epochs = 1;
    fnn::OptimizerKind optimizer = fnn::OptimizerKind::Sgd;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::size_t batch_size = 1;
    double stop_tol = 1e-8;
    pcn::Schedule schedule = pcn::Schedule::Simultaneous;
    int workers = 1;
    bool record_timings = false;
    // Graph clamping plan.
    std::vector<std::size_t> x_nodes;
    std::vector<std::size_t> y_nodes;
    graph::GraphInit init = graph::GraphInit::TopoSweep;
};

struct OutputConfig {
    std::string metrics;     // CSV path, empty to skip
    std::string checkpoint;  // JSON path, empty to skip
};

struct RunConfig {
    AlgorithmKind algorithm = AlgorithmKind::Il;
    ModelConfig model;
    TrainingConfig training;
    std::string dataset;
    OutputConfig output;
};

// Parses and validates a run config. Unknown keys are rejected with their
// full path (for example "training.gama") so typos never pass silently.
// The PCNET_SEED environment variable, when set, overrides training.seed.
RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& text, const std::string& origin);

}  // namespace pcnet::cfg
