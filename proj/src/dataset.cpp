#include "pcnet/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pcnet/probmodel.hpp"

namespace pcnet::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_double(const std::string& s, const std::string& where) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw ConfigError(where + ": cannot parse \"" + s + "\" as a number");
    }
    return v;
}

void append_formatted(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

Dataset load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::vector<std::string> header = split_csv_line(line);
    std::size_t d = 0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string expect_x = "x" + std::to_string(i);
        const std::string expect_y = "y" + std::to_string(i - d);
        if (m == 0 && header[i] == expect_x) {
            ++d;
        } else if (i >= d && header[i] == expect_y) {
            ++m;
        } else {
            throw ConfigError(path + ": unexpected header column \"" + header[i] + "\"");
        }
    }
    if (d == 0) throw ConfigError(path + ": header has no x columns");
    Dataset ds;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != d + m) {
            throw ConfigError(path + ": row " + std::to_string(row) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(d + m));
        }
        const std::string where = path + ": row " + std::to_string(row);
        Vector x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = parse_double(fields[i], where);
        ds.xs.push_back(std::move(x));
        if (m > 0) {
            Vector y(m);
            for (std::size_t i = 0; i < m; ++i) y[i] = parse_double(fields[d + i], where);
            ds.ys.push_back(std::move(y));
        }
    }
    if (ds.xs.empty()) throw ConfigError(path + ": no data rows");
    return ds;
}

void save_csv(const std::string& path, const Dataset& ds) {
    if (ds.xs.empty()) throw ConfigError("save_csv: dataset is empty");
    if (ds.labeled() && ds.ys.size() != ds.xs.size()) {
        throw ConfigError("save_csv: label count does not match sample count");
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    std::string line;
    const std::size_t d = ds.xs[0].size();
    for (std::size_t i = 0; i < d; ++i) {
        if (i) line += ',';
        line += "x" + std::to_string(i);
    }
    const std::size_t m = ds.labeled() ? ds.ys[0].size() : 0;
    for (std::size_t i = 0; i < m; ++i) line += ",y" + std::to_string(i);
    out << line << '\n';
    for (std::size_t r = 0; r < ds.xs.size(); ++r) {
        line.clear();
        if (ds.xs[r].size() != d || (m > 0 && ds.ys[r].size() != m)) {
            throw ShapeError("save_csv: ragged row " + std::to_string(r));
        }
        for (std::size_t i = 0; i < d; ++i) {
            if (i) line += ',';
            append_formatted(line, ds.xs[r][i]);
        }
        for (std::size_t i = 0; i < m; ++i) {
            line += ',';
            append_formatted(line, ds.ys[r][i]);
        }
        out << line << '\n';
    }
    if (!out) throw ConfigError("failed writing " + path);
}

Dataset make_xor() {
    Dataset ds;
    ds.xs = {{0.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {1.0, 1.0}};
    ds.ys = {{0.0}, {1.0}, {1.0}, {0.0}};
    return ds;
}

Dataset make_two_gaussians(std::size_t n_per_class, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    for (std::size_t c = 0; c < 2; ++c) {
        const double cx = c == 0 ? 1.5 : -1.5;
        for (std::size_t i = 0; i < n_per_class; ++i) {
            ds.xs.push_back({cx + 0.5 * rng.normal(), cx + 0.5 * rng.normal()});
            ds.ys.push_back({static_cast<double>(c)});
        }
    }
    return ds;
}

Dataset make_ring_vs_blob(std::size_t n_per_class, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    for (std::size_t i = 0; i < n_per_class; ++i) {
        ds.xs.push_back({0.3 * rng.normal(), 0.3 * rng.normal()});
        ds.ys.push_back({0.0});
    }
    for (std::size_t i = 0; i < n_per_class; ++i) {
        const double theta = rng.uniform(0.0, 2.0 * 3.141592653589793);
        const double r = 2.0 + 0.2 * rng.normal();
        ds.xs.push_back({r * std::cos(theta), r * std::sin(theta)});
        ds.ys.push_back({1.0});
    }
    return ds;
}

Dataset make_linear_latent(std::size_t n, std::uint64_t seed) {
    const prob::RaoBallardModel model = prob::make_linear_latent_model(seed);
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    Dataset ds;
    ds.xs = prob::sample_linear_latent(model, n, rng);
    return ds;
}

Dataset generate(const std::string& kind, std::size_t n, std::uint64_t seed) {
    if (kind == "xor") return make_xor();
    if (kind == "two-gaussians") return make_two_gaussians(n, seed);
    if (kind == "ring-vs-blob") return make_ring_vs_blob(n, seed);
    if (kind == "linear-latent") return make_linear_latent(n, seed);
    throw ConfigError("unknown dataset kind \"" + kind +
                      "\" (expected xor, two-gaussians, ring-vs-blob, or linear-latent)");
}

}  // namespace pcnet::data
