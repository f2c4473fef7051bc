#pragma once

#include <cstdint>
#include <fstream>
#include <string>

namespace pcnet::metrics {

// One row per training epoch. accuracy < 0 means "not applicable" and is
// written as an empty field. wall_ns stays 0 unless timing was requested,
// which keeps metrics files byte-identical across repeated runs.
struct Row {
    int epoch = 0;
    int batches = 0;
    double energy = 0.0;
    double output_loss = 0.0;
    double residual = 0.0;
    double accuracy = -1.0;
    std::uint64_t wall_ns = 0;
    std::uint64_t matmuls = 0;
    std::uint64_t matmul_flops = 0;
};

extern const char* const kHeader;

std::string to_csv_line(const Row& row);

class Writer {
public:
    explicit Writer(const std::string& path);
    void write(const Row& row);

private:
    std::ofstream out_;
    std::string path_;
};

}  // namespace pcnet::metrics
