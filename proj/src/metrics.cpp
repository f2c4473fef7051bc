#include "pcnet/metrics.hpp"

#include <cstdio>

#include "pcnet/numerics.hpp"

namespace pcnet::metrics {

const char* const kHeader =
    "epoch,batch,energy,output_loss,residual,accuracy,wall_ns,matmuls,matmul_flops";

std::string to_csv_line(const Row& row) {
    char buf[256];
    std::string line = std::to_string(row.epoch) + ',' + std::to_string(row.batches) + ',';
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", row.energy, row.output_loss,
                  row.residual);
    line += buf;
    line += ',';
    if (row.accuracy >= 0.0) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.accuracy);
        line += buf;
    }
    line += ',' + std::to_string(row.wall_ns) + ',' + std::to_string(row.matmuls) + ',' +
            std::to_string(row.matmul_flops);
    return line;
}

Writer::Writer(const std::string& path) : out_(path), path_(path) {
    if (!out_) throw ConfigError("cannot write " + path);
    out_ << kHeader << '\n';
}

void Writer::write(const Row& row) {
    out_ << to_csv_line(row) << '\n';
    out_.flush();
    if (!out_) throw ConfigError("failed writing " + path_);
}

}  // namespace pcnet::metrics
