#include "pcnet/cli.hpp"

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pcnet/bench.hpp"
#include "pcnet/config.hpp"
#include "pcnet/dataset.hpp"
#include "pcnet/runner.hpp"
#include "pcnet/verify.hpp"

namespace pcnet::cli {

namespace {

int cmd_train(const std::string& config_path) {
    const cfg::RunConfig rc = cfg::load_run_config(config_path);
    const pcn::TrainTrace trace = run::run_training(rc, std::cout);
    if (!trace.epochs.empty()) {
        const pcn::EpochStats& last = trace.epochs.back();
        std::printf("epochs=%zu energy=%.6g output_loss=%.6g residual=%.6g",
                    trace.epochs.size(), last.energy, last.output_loss, last.residual);
        if (last.accuracy >= 0.0) std::printf(" accuracy=%.4g", last.accuracy);
        std::printf("\n");
    }
    return 0;
}

int cmd_test(const std::string& checkpoint, const std::string& dataset,
             const std::vector<std::size_t>& x_nodes,
             const std::vector<std::size_t>& y_nodes, int steps, double rate) {
    const run::TestReport report =
        run::run_test(checkpoint, dataset, x_nodes, y_nodes, steps, rate);
    std::printf("samples=%zu mse=%.6g accuracy=%.4g\n", report.samples, report.mse,
                report.accuracy);
    return 0;
}

int cmd_bench(const std::string& algo, const std::vector<std::size_t>& depths, int steps,
              const std::vector<int>& workers, const std::string& out_path) {
    std::FILE* out = stdout;
    if (!out_path.empty()) {
        out = std::fopen(out_path.c_str(), "w");
        if (!out) throw ConfigError("cannot write " + out_path);
    }
    if (algo == "parallel") {
        std::fprintf(out, "L,T,workers,critical_path,total_events,wall_s_per_step,bitwise\n");
        for (std::size_t depth : depths) {
            const bench::ParallelReport report =
                bench::bench_parallel_inference(depth, steps, workers, 99);
            for (const bench::ParallelRow& row : report.rows) {
                std::fprintf(out, "%zu,%d,%d,%llu,%llu,%.3e,%s\n", depth, steps,
                             row.workers,
                             static_cast<unsigned long long>(row.critical_path),
                             static_cast<unsigned long long>(row.serial_events),
                             row.wall_seconds_per_step,
                             row.bitwise_equal ? "yes" : "no");
            }
        }
    } else {
        std::fprintf(out, "algorithm,L,T,measured,predicted,critical_path\n");
        for (std::size_t depth : depths) {
            const bench::CountRow row = bench::measure_counts(algo, depth, steps, 99);
            std::fprintf(out, "%s,%zu,%d,%llu,%llu,%llu\n", row.algorithm.c_str(),
                         row.depth, row.steps,
                         static_cast<unsigned long long>(row.measured),
                         static_cast<unsigned long long>(row.predicted),
                         static_cast<unsigned long long>(row.critical_path));
        }
    }
    if (out != stdout) std::fclose(out);
    return 0;
}

int cmd_verify(const std::string& suite) {
    const std::vector<verify::CheckResult> results = verify::run_suite(suite);
    bool all_pass = true;
    for (const verify::CheckResult& r : results) {
        std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.detail.c_str());
        all_pass = all_pass && r.pass;
    }
    return all_pass ? 0 : 3;
}

int cmd_gen_data(const std::string& kind, std::size_t n, std::uint64_t seed,
                 const std::string& out) {
    const data::Dataset ds = data::generate(kind, n, seed);
    data::save_csv(out, ds);
    std::printf("wrote %zu samples to %s\n", ds.size(), out.c_str());
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Predictive coding network trainer and verification harness"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* train = app.add_subcommand("train", "Train a model from a JSON config");
    train->add_option("--config", config_path, "Run configuration file")->required();

    std::string checkpoint, dataset;
    std::vector<std::size_t> x_nodes, y_nodes;
    int settle_steps = 100;
    double settle_rate = 0.1;
    CLI::App* test = app.add_subcommand("test", "Evaluate a checkpoint on a dataset");
    test->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    test->add_option("--data", dataset, "Dataset CSV")->required();
    test->add_option("--x-nodes", x_nodes, "Graph nodes receiving the data columns");
    test->add_option("--y-nodes", y_nodes, "Graph nodes read out as the prediction");
    test->add_option("--steps", settle_steps, "Inference steps for graph read-out");
    test->add_option("--rate", settle_rate, "Inference rate for graph read-out");

    std::string algo = "il";
    std::vector<std::size_t> depths = {2, 4, 8};
    int bench_T = 16;
    std::vector<int> workers = {1, 2, 4, 8};
    std::string bench_out;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "Measure operation counts per weight update");
    bench_cmd->add_option("--algo", algo, "bp, il, incremental_il, or parallel");
    bench_cmd->add_option("--depths", depths, "Transition counts to measure")
        ->delimiter(',');
    bench_cmd->add_option("--T", bench_T, "Inference steps per update");
    bench_cmd->add_option("--workers", workers, "Worker counts (parallel bench)")
        ->delimiter(',');
    bench_cmd->add_option("--out", bench_out, "Write CSV here instead of stdout");

    std::string suite = "all";
    CLI::App* verify_cmd = app.add_subcommand("verify", "Run the verification suite");
    verify_cmd->add_option("--suite", suite, "Suite name or \"all\"");

    std::string kind = "xor", gen_out;
    std::size_t gen_n = 50;
    std::uint64_t gen_seed = 1;
    CLI::App* gen = app.add_subcommand("gen-data", "Write a toy dataset CSV");
    gen->add_option("--kind", kind, "xor, two-gaussians, ring-vs-blob, linear-latent");
    gen->add_option("--n", gen_n, "Samples (per class where applicable)");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output CSV path")->required();

    try {
        app.parse(argc, argv);
        if (train->parsed()) return cmd_train(config_path);
        if (test->parsed()) {
            return cmd_test(checkpoint, dataset, x_nodes, y_nodes, settle_steps,
                            settle_rate);
        }
        if (bench_cmd->parsed()) return cmd_bench(algo, depths, bench_T, workers, bench_out);
        if (verify_cmd->parsed()) return cmd_verify(suite);
        if (gen->parsed()) return cmd_gen_data(kind, gen_n, gen_seed, gen_out);
        return 1;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "divergence: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace pcnet::cli
