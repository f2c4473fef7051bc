#include "pcnet/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace pcnet::ckpt {

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return doc;
}

void write_json_file(const std::string& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << doc.dump(2) << '\n';
    if (!out) throw ConfigError("failed writing " + path);
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols; ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows, const std::string& what) {
    if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
        throw ConfigError(what + ": expected a non-empty array of rows");
    }
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < m.rows; ++i) {
        const json& row = rows[i];
        if (!row.is_array() || row.size() != m.cols) {
            throw ConfigError(what + ": row " + std::to_string(i) + " has " +
                              std::to_string(row.size()) + " entries, expected " +
                              std::to_string(m.cols));
        }
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (!row[j].is_number()) {
                throw ConfigError(what + ": entry (" + std::to_string(i) + ", " +
                                  std::to_string(j) + ") is not a number");
            }
            m(i, j) = row[j].get<double>();
        }
    }
    return m;
}

void check_schema(const json& doc, const std::string& path) {
    if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer() ||
        doc["schema_version"].get<int>() != 1) {
        throw ConfigError(path + ": missing or unsupported schema_version (expected 1)");
    }
}

}  // namespace

std::string checkpoint_kind(const std::string& path) {
    const json doc = read_json_file(path);
    check_schema(doc, path);
    if (!doc.contains("kind") || !doc["kind"].is_string()) {
        throw ConfigError(path + ": missing \"kind\"");
    }
    const std::string kind = doc["kind"].get<std::string>();
    if (kind != "hierarchical" && kind != "graph") {
        throw ConfigError(path + ": unknown checkpoint kind \"" + kind + "\"");
    }
    return kind;
}

void save_checkpoint(const std::string& path, const HierarchicalCheckpoint& ckpt) {
    fnn::validate(ckpt.topology, ckpt.params);
    json doc;
    doc["schema_version"] = 1;
    doc["kind"] = "hierarchical";
    doc["direction"] = fnn::to_string(ckpt.topology.direction);
    doc["widths"] = ckpt.topology.widths;
    json acts = json::array();
    for (Activation a : ckpt.topology.acts) acts.push_back(to_string(a));
    doc["activations"] = acts;
    json weights = json::array();
    for (const Matrix& w : ckpt.params.weights) weights.push_back(matrix_to_json(w));
    doc["weights"] = weights;
    write_json_file(path, doc);
}

void save_checkpoint(const std::string& path, const GraphCheckpoint& ckpt) {
    graph::validate(ckpt.mask, ckpt.params);
    json doc;
    doc["schema_version"] = 1;
    doc["kind"] = "graph";
    doc["n"] = ckpt.mask.n;
    doc["activation"] = to_string(ckpt.act);
    json edges = json::array();
    for (std::size_t i = 0; i < ckpt.mask.n; ++i) {
        for (std::size_t j = 0; j < ckpt.mask.n; ++j) {
            if (ckpt.mask.at(i, j)) edges.push_back(json::array({i, j}));
        }
    }
    doc["edges"] = edges;
    doc["weights"] = matrix_to_json(ckpt.params.weights);
    doc["bias"] = ckpt.params.bias;
    write_json_file(path, doc);
}

HierarchicalCheckpoint load_hierarchical(const std::string& path) {
    const json doc = read_json_file(path);
    check_schema(doc, path);
    if (doc.value("kind", "") != "hierarchical") {
        throw ConfigError(path + ": not a hierarchical checkpoint");
    }
    HierarchicalCheckpoint ckpt;
    if (!doc.contains("widths") || !doc["widths"].is_array()) {
        throw ConfigError(path + ": missing \"widths\"");
    }
    ckpt.topology.widths = doc["widths"].get<std::vector<std::size_t>>();
    if (!doc.contains("direction") || !doc["direction"].is_string()) {
        throw ConfigError(path + ": missing \"direction\"");
    }
    ckpt.topology.direction = fnn::direction_from_string(doc["direction"].get<std::string>());
    if (!doc.contains("activations") || !doc["activations"].is_array()) {
        throw ConfigError(path + ": missing \"activations\"");
    }
    for (const json& a : doc["activations"]) {
        ckpt.topology.acts.push_back(activation_from_string(a.get<std::string>()));
    }
    fnn::validate(ckpt.topology);
    if (!doc.contains("weights") || !doc["weights"].is_array()) {
        throw ConfigError(path + ": missing \"weights\"");
    }
    for (std::size_t t = 0; t < doc["weights"].size(); ++t) {
        ckpt.params.weights.push_back(
            matrix_from_json(doc["weights"][t], path + ": weights[" + std::to_string(t) + "]"));
    }
    fnn::validate(ckpt.topology, ckpt.params);
    return ckpt;
}

GraphCheckpoint load_graph(const std::string& path) {
    const json doc = read_json_file(path);
    check_schema(doc, path);
    if (doc.value("kind", "") != "graph") {
        throw ConfigError(path + ": not a graph checkpoint");
    }
    GraphCheckpoint ckpt;
    if (!doc.contains("n") || !doc["n"].is_number_unsigned()) {
        throw ConfigError(path + ": missing \"n\"");
    }
    const std::size_t n = doc["n"].get<std::size_t>();
    ckpt.mask = graph::AdjacencyMask(n);
    if (!doc.contains("edges") || !doc["edges"].is_array()) {
        throw ConfigError(path + ": missing \"edges\"");
    }
    for (const json& e : doc["edges"]) {
        if (!e.is_array() || e.size() != 2) {
            throw ConfigError(path + ": each edge must be a pair [i, j]");
        }
        ckpt.mask.set(e[0].get<std::size_t>(), e[1].get<std::size_t>(), true);
    }
    ckpt.act = activation_from_string(doc.value("activation", "tanh"));
    if (!doc.contains("weights")) throw ConfigError(path + ": missing \"weights\"");
    ckpt.params.weights = matrix_from_json(doc["weights"], path + ": weights");
    if (!doc.contains("bias") || !doc["bias"].is_array()) {
        throw ConfigError(path + ": missing \"bias\"");
    }
    ckpt.params.bias = doc["bias"].get<Vector>();
    graph::validate(ckpt.mask, ckpt.params);
    return ckpt;
}

void save_mask(const std::string& path, const graph::AdjacencyMask& mask) {
    json doc;
    doc["n"] = mask.n;
    json edges = json::array();
    for (std::size_t i = 0; i < mask.n; ++i) {
        for (std::size_t j = 0; j < mask.n; ++j) {
            if (mask.at(i, j)) edges.push_back(json::array({i, j}));
        }
    }
    doc["edges"] = edges;
    write_json_file(path, doc);
}

graph::AdjacencyMask load_mask(const std::string& path) {
    const json doc = read_json_file(path);
    if (!doc.contains("n") || !doc["n"].is_number_unsigned()) {
        throw ConfigError(path + ": missing \"n\"");
    }
    graph::AdjacencyMask mask(doc["n"].get<std::size_t>());
    if (!doc.contains("edges") || !doc["edges"].is_array()) {
        throw ConfigError(path + ": missing \"edges\"");
    }
    for (const json& e : doc["edges"]) {
        if (!e.is_array() || e.size() != 2) {
            throw ConfigError(path + ": each edge must be a pair [i, j]");
        }
        mask.set(e[0].get<std::size_t>(), e[1].get<std::size_t>(), true);
    }
    return mask;
}

}  // namespace pcnet::ckpt
