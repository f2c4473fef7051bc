#pragma once

#include <string>

#include "pcnet/fnn.hpp"
#include "pcnet/pcgraph.hpp"

namespace pcnet::ckpt {

// Layered-network checkpoints carry the topology next to the weights so a
// file is loadable without the config that produced it.
struct HierarchicalCheckpoint {
    fnn::Topology topology;
    fnn::Params params;
};

struct GraphCheckpoint {
    graph::AdjacencyMask mask;
    Activation act = Activation::Tanh;
    graph::GraphParams params;
};

// Returns "hierarchical" or "graph" without parsing the whole file.
std::string checkpoint_kind(const std::string& path);

void save_checkpoint(const std::string& path, const HierarchicalCheckpoint& ckpt);
void save_checkpoint(const std::string& path, const GraphCheckpoint& ckpt);
HierarchicalCheckpoint load_hierarchical(const std::string& path);
GraphCheckpoint load_graph(const std::string& path);

// Adjacency masks are stored as an edge list: {"n": 4, "edges": [[i, j], ...]}
// where an edge [i, j] means node j predicts node i.
void save_mask(const std::string& path, const graph::AdjacencyMask& mask);
graph::AdjacencyMask load_mask(const std::string& path);

}  // namespace pcnet::ckpt
