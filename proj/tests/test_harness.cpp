#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pcnet/bench.hpp"
#include "pcnet/checkpoint.hpp"
#include "pcnet/cli.hpp"
#include "pcnet/config.hpp"
#include "pcnet/dataset.hpp"
#include "pcnet/metrics.hpp"
#include "pcnet/runner.hpp"

using namespace pcnet;
namespace fs = std::filesystem;

namespace {

// Per-test scratch directory, removed on destruction.
struct TempDir {
    fs::path path;

    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("pcnet_harness_" + std::to_string(++counter) + "_" +
                std::to_string(static_cast<unsigned>(::getpid())));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"pcnet"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    return cli::cli_main(static_cast<int>(argv.size()), argv.data());
}

std::string xor_config(const TempDir& dir, const std::string& data_path,
                       const std::string& metrics, const std::string& checkpoint,
                       const std::string& algorithm = "il") {
    std::ostringstream ss;
    ss << "{\n"
       << "  \"schema_version\": 1,\n"
       << "  \"algorithm\": \"" << algorithm << "\",\n"
       << "  \"model\": {\"widths\": [2, 4, 1], \"activations\": [\"tanh\", \"sigmoid\"]},\n"
       << "  \"training\": {\"gamma\": 0.1, \"alpha\": 0.05, \"T\": 8, \"epochs\": 4,\n"
       << "                 \"seed\": 42, \"optimizer\": \"adam\"},\n"
       << "  \"dataset\": \"" << data_path << "\",\n"
       << "  \"output\": {\"metrics\": \"" << metrics << "\", \"checkpoint\": \""
       << checkpoint << "\"}\n"
       << "}\n";
    const std::string path = dir.file("config.json");
    write_text(path, ss.str());
    return path;
}

}  // namespace

TEST_CASE("hierarchical checkpoints round-trip bitwise") {
    TempDir dir;
    ckpt::HierarchicalCheckpoint saved;
    saved.topology.widths = {2, 3, 1};
    saved.topology.acts = {Activation::Tanh, Activation::Sigmoid};
    saved.topology.direction = fnn::Direction::Discriminative;
    saved.params = fnn::make_params(saved.topology);
    Rng rng(200);
    fnn::init_weights(saved.params, saved.topology, rng, 0.7);
    // Values with no short decimal representation must survive the trip.
    saved.params.weights[0](0, 0) = 1.0 / 3.0;
    saved.params.weights[1](0, 1) = 1e-17;

    const std::string path = dir.file("model.json");
    ckpt::save_checkpoint(path, saved);
    CHECK(ckpt::checkpoint_kind(path) == "hierarchical");

    const ckpt::HierarchicalCheckpoint loaded = ckpt::load_hierarchical(path);
    CHECK(loaded.topology.widths == saved.topology.widths);
    CHECK(loaded.topology.acts == saved.topology.acts);
    CHECK(loaded.topology.direction == saved.topology.direction);
    REQUIRE(loaded.params.weights.size() == 2);
    for (std::size_t t = 0; t < 2; ++t)
        CHECK(loaded.params.weights[t].data == saved.params.weights[t].data);
}

TEST_CASE("graph checkpoints carry mask, activation and parameters") {
    TempDir dir;
    ckpt::GraphCheckpoint saved;
    saved.mask = graph::fully_connected(4);
    saved.act = Activation::Sigmoid;
    saved.params = graph::make_graph_params(saved.mask);
    Rng rng(201);
    graph::init_graph_weights(saved.params, saved.mask, rng, 0.5);
    saved.params.bias = {0.1, -0.2, 1.0 / 7.0, 0.0};

    const std::string path = dir.file("graph.json");
    ckpt::save_checkpoint(path, saved);
    CHECK(ckpt::checkpoint_kind(path) == "graph");

    const ckpt::GraphCheckpoint loaded = ckpt::load_graph(path);
    CHECK(loaded.mask.n == 4);
    CHECK(loaded.mask.entries == saved.mask.entries);
    CHECK(loaded.act == Activation::Sigmoid);
    CHECK(loaded.params.weights.data == saved.params.weights.data);
    CHECK(loaded.params.bias == saved.params.bias);
}

TEST_CASE("masks save as edge lists and load back") {
    TempDir dir;
    graph::AdjacencyMask mask(3);
    mask.set(1, 0, true);
    mask.set(2, 1, true);
    const std::string path = dir.file("mask.json");
    ckpt::save_mask(path, mask);
    const graph::AdjacencyMask loaded = ckpt::load_mask(path);
    CHECK(loaded.n == 3);
    CHECK(loaded.entries == mask.entries);
}

TEST_CASE("checkpoint loading fails loudly on malformed input") {
    TempDir dir;
    const std::string path = dir.file("bad.json");

    write_text(path, "not json at all");
    CHECK_THROWS_AS(ckpt::load_hierarchical(path), ConfigError);
    CHECK_THROWS_AS(ckpt::checkpoint_kind(path), ConfigError);

    write_text(path, "{\"schema_version\": 2, \"kind\": \"hierarchical\"}");
    CHECK_THROWS_AS(ckpt::load_hierarchical(path), ConfigError);

    CHECK_THROWS_AS(ckpt::load_hierarchical(dir.file("missing.json")), ConfigError);
    CHECK_THROWS_AS(ckpt::load_mask(dir.file("missing.json")), ConfigError);
}

TEST_CASE("dataset CSV round trips reproduce every double exactly") {
    TempDir dir;
    data::Dataset ds;
    Rng rng(202);
    for (int i = 0; i < 8; ++i) {
        ds.xs.push_back({rng.uniform(-1e3, 1e3), rng.normal(), 1.0 / 3.0});
        ds.ys.push_back({rng.uniform(), i % 2 == 0 ? 0.0 : 1e-17});
    }
    const std::string path = dir.file("data.csv");
    data::save_csv(path, ds);
    const data::Dataset loaded = data::load_csv(path);
    REQUIRE(loaded.size() == 8);
    REQUIRE(loaded.labeled());
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(loaded.xs[i] == ds.xs[i]);
        CHECK(loaded.ys[i] == ds.ys[i]);
    }

    // Unlabeled datasets omit the y columns entirely.
    data::Dataset plain;
    plain.xs = {{1.5, 2.5}, {-0.5, 0.25}};
    const std::string path2 = dir.file("plain.csv");
    data::save_csv(path2, plain);
    const data::Dataset loaded2 = data::load_csv(path2);
    CHECK_FALSE(loaded2.labeled());
    CHECK(loaded2.xs == plain.xs);
}

TEST_CASE("dataset CSV validation names the offending row") {
    TempDir dir;
    const std::string path = dir.file("bad.csv");

    write_text(path, "a0,x1\n1,2\n");
    CHECK_THROWS_AS(data::load_csv(path), ConfigError);

    write_text(path, "x0,x1\n1,2\n3\n");
    CHECK_THROWS_AS(data::load_csv(path), ConfigError);

    write_text(path, "x0,x1\n1,two\n");
    CHECK_THROWS_AS(data::load_csv(path), ConfigError);

    CHECK_THROWS_AS(data::load_csv(dir.file("missing.csv")), ConfigError);
}

TEST_CASE("the XOR set is the fixed four-point truth table") {
    const data::Dataset ds = data::make_xor();
    REQUIRE(ds.size() == 4);
    REQUIRE(ds.labeled());
    CHECK(ds.xs[0] == Vector{0.0, 0.0});
    CHECK(ds.ys[0] == Vector{0.0});
    CHECK(ds.xs[1] == Vector{0.0, 1.0});
    CHECK(ds.ys[1] == Vector{1.0});
    CHECK(ds.xs[2] == Vector{1.0, 0.0});
    CHECK(ds.ys[2] == Vector{1.0});
    CHECK(ds.xs[3] == Vector{1.0, 1.0});
    CHECK(ds.ys[3] == Vector{0.0});
}

TEST_CASE("toy generators are deterministic per seed and kind") {
    const data::Dataset a = data::generate("two-gaussians", 50, 9);
    const data::Dataset b = data::generate("two-gaussians", 50, 9);
    REQUIRE(a.size() == 100);  // n per class
    CHECK(a.xs == b.xs);
    CHECK(a.ys == b.ys);

    const data::Dataset ring = data::generate("ring-vs-blob", 30, 9);
    REQUIRE(ring.size() == 60);
    for (const Vector& y : ring.ys) {
        REQUIRE(y.size() == 1);
        CHECK((y[0] == 0.0 || y[0] == 1.0));
    }

    const data::Dataset latent = data::generate("linear-latent", 25, 9);
    CHECK(latent.size() == 25);
    CHECK_FALSE(latent.labeled());

    CHECK_THROWS_AS(data::generate("spirals", 10, 1), ConfigError);
}

TEST_CASE("run configs parse with defaults and validate themselves") {
    const std::string text = R"({
        "schema_version": 1,
        "algorithm": "il",
        "model": {"widths": [2, 3, 1], "activations": ["tanh", "sigmoid"]},
        "dataset": "xor.csv"
    })";
    const cfg::RunConfig rc = cfg::parse_run_config(text, "test");
    CHECK(rc.algorithm == cfg::AlgorithmKind::Il);
    CHECK(rc.model.widths == std::vector<std::size_t>{2, 3, 1});
    CHECK(rc.training.gamma == 0.1);
    CHECK(rc.training.inference_steps == 20);
    CHECK(rc.training.optimizer == fnn::OptimizerKind::Sgd);
    CHECK(rc.dataset == "xor.csv");
    CHECK(rc.output.metrics.empty());
}

TEST_CASE("unknown config keys are rejected with their full path") {
    const std::string text = R"({
        "schema_version": 1,
        "algorithm": "il",
        "model": {"widths": [2, 1], "activations": ["tanh"]},
        "training": {"gama": 0.1},
        "dataset": "d.csv"
    })";
    try {
        cfg::parse_run_config(text, "test");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("training.gama") != std::string::npos);
    }
}

TEST_CASE("config validation catches structural mistakes") {
    CHECK_THROWS_AS(cfg::parse_run_config("{", "test"), ConfigError);
    CHECK_THROWS_AS(cfg::parse_run_config("[1, 2]", "test"), ConfigError);

    const std::string wrong_version = R"({
        "schema_version": 3,
        "algorithm": "il",
        "model": {"widths": [2, 1], "activations": ["tanh"]},
        "dataset": "d.csv"
    })";
    CHECK_THROWS_AS(cfg::parse_run_config(wrong_version, "test"), ConfigError);

    const std::string bad_algo = R"({
        "schema_version": 1,
        "algorithm": "annealing",
        "model": {"widths": [2, 1], "activations": ["tanh"]},
        "dataset": "d.csv"
    })";
    CHECK_THROWS_AS(cfg::parse_run_config(bad_algo, "test"), ConfigError);

    const std::string graph_without_nodes = R"({
        "schema_version": 1,
        "algorithm": "graph_il",
        "model": {"mask_file": "mask.json"},
        "dataset": "d.csv"
    })";
    CHECK_THROWS_AS(cfg::parse_run_config(graph_without_nodes, "test"), ConfigError);

    const std::string zero_epochs = R"({
        "schema_version": 1,
        "algorithm": "il",
        "model": {"widths": [2, 1], "activations": ["tanh"]},
        "training": {"epochs": 0},
        "dataset": "d.csv"
    })";
    CHECK_THROWS_AS(cfg::parse_run_config(zero_epochs, "test"), ConfigError);
}

TEST_CASE("PCNET_SEED overrides the configured seed") {
    const std::string text = R"({
        "schema_version": 1,
        "algorithm": "il",
        "model": {"widths": [2, 1], "activations": ["tanh"]},
        "training": {"seed": 7},
        "dataset": "d.csv"
    })";
    CHECK(cfg::parse_run_config(text, "test").training.seed == 7);

    ::setenv("PCNET_SEED", "12345", 1);
    CHECK(cfg::parse_run_config(text, "test").training.seed == 12345);

    ::setenv("PCNET_SEED", "not-a-number", 1);
    CHECK_THROWS_AS(cfg::parse_run_config(text, "test"), ConfigError);
    ::unsetenv("PCNET_SEED");
}

TEST_CASE("metrics rows print the fixed header and exact doubles") {
    CHECK(std::string(metrics::kHeader) ==
          "epoch,batch,energy,output_loss,residual,accuracy,wall_ns,matmuls,matmul_flops");

    metrics::Row row;
    row.epoch = 3;
    row.batches = 4;
    row.energy = 1.0 / 3.0;
    row.output_loss = 0.25;
    row.residual = row.energy - 0.25;
    row.accuracy = -1.0;  // not applicable: empty field
    row.matmuls = 77;
    row.matmul_flops = 1234;
    const std::string line = metrics::to_csv_line(row);
    CHECK(line.find(",,") != std::string::npos);

    // The energy column parses back to the identical double.
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');  // epoch
    std::getline(ss, field, ',');  // batch
    std::getline(ss, field, ',');  // energy
    CHECK(std::strtod(field.c_str(), nullptr) == row.energy);

    row.accuracy = 0.75;
    CHECK(metrics::to_csv_line(row).find("0.75") != std::string::npos);
}

TEST_CASE("the metrics writer emits a header and one line per row") {
    TempDir dir;
    const std::string path = dir.file("metrics.csv");
    {
        metrics::Writer writer(path);
        metrics::Row row;
        row.epoch = 1;
        writer.write(row);
        row.epoch = 2;
        writer.write(row);
    }
    std::istringstream in(read_bytes(path));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == metrics::kHeader);
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 2);
}

TEST_CASE("closed-form operation counts match the instrumented kernels") {
    CHECK(bench::bp_events_per_update(4) == 11);          // (2L-1) + L
    CHECK(bench::il_events_per_update(4, 16) == 164);     // T(3L-2) + L
    CHECK(bench::incremental_il_events_per_update(4) == 14);  // 4L-2
    CHECK(bench::il_critical_path_per_update(16) == 49);  // 3T+1

    for (std::size_t depth : {2, 3, 5}) {
        const bench::CountRow bp = bench::measure_counts("bp", depth, 1, 7);
        CHECK(bp.measured == bp.predicted);
        const bench::CountRow il = bench::measure_counts("il", depth, 6, 7);
        CHECK(il.measured == il.predicted);
        CHECK(il.critical_path == bench::il_critical_path_per_update(6));
        const bench::CountRow iil = bench::measure_counts("incremental_il", depth, 1, 7);
        CHECK(iil.measured == iil.predicted);
    }

    CHECK_THROWS_AS(bench::measure_counts("zil", 2, 1, 7), ConfigError);
}

TEST_CASE("the log-log slope of an exact power law is its exponent") {
    const std::vector<std::size_t> depths{2, 4, 8, 16};
    const std::vector<std::uint64_t> squares{4, 16, 64, 256};
    CHECK(bench::loglog_slope(depths, squares) == doctest::Approx(2.0).epsilon(1e-12));
    const std::vector<std::uint64_t> flat{9, 9, 9, 9};
    CHECK(bench::loglog_slope(depths, flat) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("parallel inference benchmarks assert bitwise equality") {
    const bench::ParallelReport report =
        bench::bench_parallel_inference(6, 5, {2, 4}, 11);
    CHECK(report.depth == 6);
    REQUIRE(report.rows.size() == 3);  // the 1-worker reference is added
    CHECK(report.rows[0].workers == 1);
    for (const bench::ParallelRow& row : report.rows) {
        CHECK(row.bitwise_equal);
        CHECK(row.critical_path == bench::il_critical_path_per_update(5));
        CHECK(row.serial_events > row.critical_path);
    }
}

TEST_CASE("backprop training lowers the loss on a separable problem") {
    const data::Dataset ds = data::make_two_gaussians(10, 3);
    fnn::Topology topo;
    topo.widths = {2, 4, 1};
    topo.acts = {Activation::Tanh, Activation::Sigmoid};
    fnn::Params params = fnn::make_params(topo);
    Rng rng(203);
    fnn::init_weights(params, topo, rng, 0.5);
    fnn::Optimizer opt = fnn::Optimizer::adam(0.02);
    const pcn::TrainTrace trace = run::train_bp(params, topo, ds.xs, ds.ys, opt, 30, 1);
    REQUIRE(trace.epochs.size() == 30);
    CHECK(trace.epochs.back().output_loss < trace.epochs.front().output_loss);
    CHECK(trace.epochs.back().accuracy >= 0.9);
    CHECK(trace.epochs.back().residual == 0.0);
}

TEST_CASE("zero-divergence epochs track plain per-sample backprop") {
    const data::Dataset ds = data::make_xor();
    fnn::Topology topo;
    topo.widths = {2, 3, 1};
    topo.acts = {Activation::Tanh, Activation::Sigmoid};
    fnn::Params zil_params = fnn::make_params(topo);
    Rng rng(204);
    fnn::init_weights(zil_params, topo, rng, 0.5);
    fnn::Params bp_params = zil_params;

    run::train_zil_epochs(zil_params, topo, ds.xs, ds.ys, 0.05, 3);
    fnn::Optimizer opt = fnn::Optimizer::sgd(0.05);
    run::train_bp(bp_params, topo, ds.xs, ds.ys, opt, 3, 1);

    for (std::size_t t = 0; t < zil_params.weights.size(); ++t)
        for (std::size_t i = 0; i < zil_params.weights[t].data.size(); ++i)
            CHECK(zil_params.weights[t].data[i] ==
                  doctest::Approx(bp_params.weights[t].data[i]).epsilon(1e-9));
}

TEST_CASE("run_training writes metrics rows and a loadable checkpoint") {
    TempDir dir;
    const std::string data_path = dir.file("xor.csv");
    data::save_csv(data_path, data::make_xor());
    const std::string metrics_path = dir.file("metrics.csv");
    const std::string ckpt_path = dir.file("model.json");
    const std::string config_path = xor_config(dir, data_path, metrics_path, ckpt_path);

    const cfg::RunConfig rc = cfg::load_run_config(config_path);
    std::ostringstream log;
    const pcn::TrainTrace trace = run::run_training(rc, log);
    REQUIRE(trace.epochs.size() == 4);

    std::istringstream in(read_bytes(metrics_path));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == metrics::kHeader);
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 4);

    const ckpt::HierarchicalCheckpoint loaded = ckpt::load_hierarchical(ckpt_path);
    CHECK(loaded.topology.widths == std::vector<std::size_t>{2, 4, 1});

    const run::TestReport report = run::run_test(ckpt_path, data_path, {}, {}, 0, 0.0);
    CHECK(report.samples == 4);
    CHECK(report.mse >= 0.0);
    CHECK(report.accuracy >= 0.0);
    CHECK(report.accuracy <= 1.0);
}

TEST_CASE("identical run configs write byte-identical outputs") {
    TempDir dir;
    const std::string data_path = dir.file("xor.csv");
    data::save_csv(data_path, data::make_xor());

    auto run_once = [&](const std::string& tag) {
        const std::string metrics_path = dir.file("metrics_" + tag + ".csv");
        const std::string ckpt_path = dir.file("model_" + tag + ".json");
        const std::string config_path = xor_config(dir, data_path, metrics_path, ckpt_path);
        const cfg::RunConfig rc = cfg::load_run_config(config_path);
        std::ostringstream log;
        run::run_training(rc, log);
        return std::pair{read_bytes(metrics_path), read_bytes(ckpt_path)};
    };

    const auto first = run_once("a");
    const auto second = run_once("b");
    CHECK(first.first == second.first);
    CHECK(first.second == second.second);
}

TEST_CASE("the CLI generates datasets, trains, tests and benches") {
    TempDir dir;
    const std::string data_path = dir.file("xor.csv");
    CHECK(run_cli({"gen-data", "--kind", "xor", "--out", data_path}) == 0);
    const data::Dataset ds = data::load_csv(data_path);
    CHECK(ds.size() == 4);

    // Generation is deterministic: a second write produces identical bytes.
    const std::string data_path2 = dir.file("xor2.csv");
    CHECK(run_cli({"gen-data", "--kind", "xor", "--out", data_path2}) == 0);
    CHECK(read_bytes(data_path) == read_bytes(data_path2));

    const std::string metrics_path = dir.file("metrics.csv");
    const std::string ckpt_path = dir.file("model.json");
    const std::string config_path = xor_config(dir, data_path, metrics_path, ckpt_path);
    CHECK(run_cli({"train", "--config", config_path}) == 0);
    CHECK(fs::exists(metrics_path));
    CHECK(fs::exists(ckpt_path));

    CHECK(run_cli({"test", "--checkpoint", ckpt_path, "--data", data_path}) == 0);

    const std::string bench_path = dir.file("bench.csv");
    CHECK(run_cli({"bench", "--algo", "bp", "--depths", "2,4", "--out", bench_path}) == 0);
    std::istringstream in(read_bytes(bench_path));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "algorithm,L,T,measured,predicted,critical_path");
    REQUIRE(std::getline(in, line));
    CHECK(line.find("bp,2,") == 0);
    CHECK(line.find(",5,5,") != std::string::npos);  // measured == predicted == 3L-1
}

TEST_CASE("CLI exit codes distinguish usage, config and numeric failures") {
    TempDir dir;
    CHECK(run_cli({"no-such-command"}) == 1);
    CHECK(run_cli({"train"}) == 1);  // --config is required
    CHECK(run_cli({"train", "--config", dir.file("missing.json")}) == 1);
    CHECK(run_cli({"gen-data", "--kind", "spirals", "--out", dir.file("d.csv")}) == 1);
    CHECK(run_cli({"test", "--checkpoint", dir.file("missing.json"), "--data",
                   dir.file("missing.csv")}) == 1);

    // A bad config key reports exit 1 before any training starts.
    const std::string bad_config = dir.file("bad.json");
    write_text(bad_config, R"({
        "schema_version": 1,
        "algorithm": "il",
        "model": {"widths": [2, 1], "activations": ["tanh"]},
        "training": {"gama": 0.1},
        "dataset": "d.csv"
    })");
    CHECK(run_cli({"train", "--config", bad_config}) == 1);

    // A run whose inference step size explodes exits with the numeric code.
    const std::string data_path = dir.file("xor.csv");
    data::save_csv(data_path, data::make_xor());
    const std::string diverging = dir.file("diverge.json");
    write_text(diverging, std::string(R"({
        "schema_version": 1,
        "algorithm": "il",
        "model": {"widths": [2, 4, 1], "activations": ["linear", "linear"]},
        "training": {"gamma": 1e8, "T": 50, "epochs": 1, "seed": 1},
        "dataset": ")") + data_path + "\"\n}");
    CHECK(run_cli({"train", "--config", diverging}) == 2);
}

TEST_CASE("the CLI verify subcommand reports per-check verdicts") {
    CHECK(run_cli({"verify", "--suite", "equivalence"}) == 0);
    CHECK(run_cli({"verify", "--suite", "no-such-suite"}) == 1);
}
