#include "pcnet/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace pcnet::cfg {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::string& prefix,
                         std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw ConfigError("unknown config key \"" + prefix + item.key() + "\"");
        }
    }
}

template <typename T>
T require(const json& obj, const std::string& prefix, const char* key) {
    if (!obj.contains(key)) {
        throw ConfigError("missing config key \"" + prefix + key + "\"");
    }
    try {
        return obj[key].get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key \"" + prefix + key + "\" has the wrong type");
    }
}

template <typename T>
T optional(const json& obj, const std::string& prefix, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj[key].get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key \"" + prefix + key + "\" has the wrong type");
    }
}

ModelConfig parse_model(const json& obj, AlgorithmKind algorithm) {
    if (!obj.is_object()) throw ConfigError("\"model\" must be an object");
    ModelConfig model;
    model.is_graph = algorithm == AlgorithmKind::GraphIl;
    if (model.is_graph) {
        reject_unknown_keys(obj, "model.", {"mask_file", "activation"});
        model.mask_file = require<std::string>(obj, "model.", "mask_file");
        model.graph_activation =
            activation_from_string(optional<std::string>(obj, "model.", "activation", "tanh"));
        return model;
    }
    reject_unknown_keys(obj, "model.", {"widths", "activations", "direction"});
    model.widths = require<std::vector<std::size_t>>(obj, "model.", "widths");
    for (const std::string& name :
         require<std::vector<std::string>>(obj, "model.", "activations")) {
        model.activations.push_back(activation_from_string(name));
    }
    model.direction = fnn::direction_from_string(
        optional<std::string>(obj, "model.", "direction", "discriminative"));
    fnn::Topology topo{model.widths, model.activations, model.direction};
    fnn::validate(topo);
    return model;
}

TrainingConfig parse_training(const json& obj) {
    if (!obj.is_object()) throw ConfigError("\"training\" must be an object");
    reject_unknown_keys(obj, "training.",
                        {"gamma", "alpha", "T", "epochs", "optimizer", "beta1", "beta2",
                         "eps", "seed", "batch_size", "stop_tol", "schedule", "workers",
                         "record_timings", "x_nodes", "y_nodes", "init"});
    TrainingConfig t;
    t.gamma = optional(obj, "training.", "gamma", t.gamma);
    t.alpha = optional(obj, "training.", "alpha", t.alpha);
    t.inference_steps = optional(obj, "training.", "T", t.inference_steps);
    t.epochs = optional(obj, "training.", "epochs", t.epochs);
    const std::string opt = optional<std::string>(obj, "training.", "optimizer", "sgd");
    if (opt == "sgd") {
        t.optimizer = fnn::OptimizerKind::Sgd;
    } else if (opt == "adam") {
        t.optimizer = fnn::OptimizerKind::Adam;
    } else {
        throw ConfigError("training.optimizer must be \"sgd\" or \"adam\", got \"" + opt +
                          "\"");
    }
    t.beta1 = optional(obj, "training.", "beta1", t.beta1);
    t.beta2 = optional(obj, "training.", "beta2", t.beta2);
    t.epsilon = optional(obj, "training.", "eps", t.epsilon);
    t.seed = optional<std::uint64_t>(obj, "training.", "seed", t.seed);
    t.batch_size = optional<std::size_t>(obj, "training.", "batch_size", t.batch_size);
    t.stop_tol = optional(obj, "training.", "stop_tol", t.stop_tol);
    const std::string sched =
        optional<std::string>(obj, "training.", "schedule", "simultaneous");
    if (sched == "simultaneous") {
        t.schedule = pcn::Schedule::Simultaneous;
    } else if (sched == "sequential_top_down") {
        t.schedule = pcn::Schedule::SequentialTopDown;
    } else {
        throw ConfigError(
            "training.schedule must be \"simultaneous\" or \"sequential_top_down\", got \"" +
            sched + "\"");
    }
    t.workers = optional(obj, "training.", "workers", t.workers);
    t.record_timings = optional(obj, "training.", "record_timings", t.record_timings);
    t.x_nodes = optional<std::vector<std::size_t>>(obj, "training.", "x_nodes", {});
    t.y_nodes = optional<std::vector<std::size_t>>(obj, "training.", "y_nodes", {});
    const std::string init = optional<std::string>(obj, "training.", "init", "topo_sweep");
    if (init == "zeros") {
        t.init = graph::GraphInit::Zeros;
    } else if (init == "topo_sweep") {
        t.init = graph::GraphInit::TopoSweep;
    } else {
        throw ConfigError("training.init must be \"zeros\" or \"topo_sweep\", got \"" + init +
                          "\"");
    }
    if (t.inference_steps < 1) throw ConfigError("training.T must be at least 1");
    if (t.epochs < 1) throw ConfigError("training.epochs must be at least 1");
    if (t.batch_size < 1) throw ConfigError("training.batch_size must be at least 1");
    if (t.workers < 1) throw ConfigError("training.workers must be at least 1");
    if (!(t.gamma > 0.0)) throw ConfigError("training.gamma must be positive");
    if (!(t.alpha > 0.0)) throw ConfigError("training.alpha must be positive");
    return t;
}

}  // namespace

std::string to_string(AlgorithmKind k) {
    switch (k) {
        case AlgorithmKind::Il: return "il";
        case AlgorithmKind::Bp: return "bp";
        case AlgorithmKind::IncrementalIl: return "incremental_il";
        case AlgorithmKind::Zil: return "zil";
        case AlgorithmKind::GraphIl: return "graph_il";
    }
    throw Error("invalid algorithm kind");
}

AlgorithmKind algorithm_from_string(const std::string& s) {
    if (s == "il") return AlgorithmKind::Il;
    if (s == "bp") return AlgorithmKind::Bp;
    if (s == "incremental_il") return AlgorithmKind::IncrementalIl;
    if (s == "zil") return AlgorithmKind::Zil;
    if (s == "graph_il") return AlgorithmKind::GraphIl;
    throw ConfigError("unknown algorithm \"" + s +
                      "\" (expected il, bp, incremental_il, zil, or graph_il)");
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    if (!doc.is_object()) throw ConfigError(origin + ": config must be a JSON object");
    reject_unknown_keys(doc, "",
                        {"schema_version", "algorithm", "model", "training", "dataset",
                         "output"});
    if (require<int>(doc, "", "schema_version") != 1) {
        throw ConfigError(origin + ": unsupported schema_version (expected 1)");
    }
    RunConfig rc;
    rc.algorithm = algorithm_from_string(require<std::string>(doc, "", "algorithm"));
    if (!doc.contains("model")) throw ConfigError("missing config key \"model\"");
    rc.model = parse_model(doc["model"], rc.algorithm);
    if (doc.contains("training")) rc.training = parse_training(doc["training"]);
    rc.dataset = require<std::string>(doc, "", "dataset");
    if (doc.contains("output")) {
        const json& out = doc["output"];
        if (!out.is_object()) throw ConfigError("\"output\" must be an object");
        reject_unknown_keys(out, "output.", {"metrics", "checkpoint"});
        rc.output.metrics = optional<std::string>(out, "output.", "metrics", "");
        rc.output.checkpoint = optional<std::string>(out, "output.", "checkpoint", "");
    }
    if (rc.algorithm == AlgorithmKind::GraphIl) {
        if (rc.training.x_nodes.empty()) {
            throw ConfigError("graph_il requires training.x_nodes");
        }
        if (rc.training.y_nodes.empty()) {
            throw ConfigError("graph_il requires training.y_nodes");
        }
    }
    if (const char* env = std::getenv("PCNET_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') {
            throw ConfigError("PCNET_SEED is set but not a non-negative integer: \"" +
                              std::string(env) + "\"");
        }
        rc.training.seed = static_cast<std::uint64_t>(v);
    }
    return rc;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_run_config(buffer.str(), path);
}

}  // namespace pcnet::cfg
