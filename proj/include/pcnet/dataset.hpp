#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcnet/numerics.hpp"

namespace pcnet::data {

struct Dataset {
    std::vector<Vector> xs;
    std::vector<Vector> ys;  // empty for unlabeled data
    bool labeled() const { return !ys.empty(); }
    std::size_t size() const { return xs.size(); }
};

// CSV layout: header "x0,..,x{d-1}" optionally followed by "y0,..,y{m-1}",
// then one row per sample. Floats are written with 17 significant digits so
// a save/load round trip reproduces the doubles exactly.
Dataset load_csv(const std::string& path);
void save_csv(const std::string& path, const Dataset& ds);

// The four XOR points with inputs in {0,1}^2 and a single 0/1 label.
Dataset make_xor();

// Two Gaussian clusters centred at (1.5, 1.5) and (-1.5, -1.5), labels 0/1.
Dataset make_two_gaussians(std::size_t n_per_class, std::uint64_t seed);

// A tight blob at the origin (label 0) versus a noisy ring of radius 2
// around it (label 1); not linearly separable.
Dataset make_ring_vs_blob(std::size_t n_per_class, std::uint64_t seed);

// Unlabeled draws from a fixed linear two-stage latent-variable model.
Dataset make_linear_latent(std::size_t n, std::uint64_t seed);

Dataset generate(const std::string& kind, std::size_t n, std::uint64_t seed);

}  // namespace pcnet::data
