#include "pcnet/runner.hpp"

#include <chrono>
#include <cmath>
#include <memory>

#include "pcnet/checkpoint.hpp"
#include "pcnet/metrics.hpp"
#include "pcnet/pcgraph.hpp"

namespace pcnet::run {

namespace {

double sample_sq_error(const Vector& yhat, const Vector& y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double d = yhat[i] - y[i];
        acc += d * d;
    }
    return acc;
}

bool sample_correct(const Vector& yhat, const Vector& y) {
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (!(std::abs(yhat[i] - y[i]) < 0.5)) return false;
    }
    return true;
}

void check_loss(double loss) {
    if (!std::isfinite(loss) || loss > pcn::kDivergenceThreshold) {
        throw DivergenceError("training loss diverged (" + std::to_string(loss) + ")");
    }
}

pcn::EpochStats dataset_stats(const fnn::Params& params, const fnn::Topology& topo,
                              const std::vector<Vector>& xs,
                              const std::vector<Vector>& ys) {
    pcn::EpochStats stats;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const Vector yhat = fnn::forward_output(params, topo, xs[i]);
        stats.output_loss += sample_sq_error(yhat, ys[i]);
        if (sample_correct(yhat, ys[i])) ++correct;
    }
    stats.output_loss /= static_cast<double>(xs.size());
    stats.energy = stats.output_loss;
    stats.residual = 0.0;
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(xs.size());
    return stats;
}

}  // namespace

pcn::TrainTrace train_bp(fnn::Params& params, const fnn::Topology& topo,
                         const std::vector<Vector>& xs, const std::vector<Vector>& ys,
                         fnn::Optimizer& opt, int epochs, int batch_size) {
    if (xs.empty() || xs.size() != ys.size()) {
        throw ConfigError("train_bp: needs a labeled, non-empty dataset");
    }
    if (batch_size < 1) throw ConfigError("train_bp: batch_size must be at least 1");
    pcn::TrainTrace trace;
    const std::size_t n = xs.size();
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
            std::vector<Matrix> sum;
            for (std::size_t i = start; i < end; ++i) {
                std::vector<Matrix> g = fnn::bp_gradients(params, topo, xs[i], ys[i]);
                if (sum.empty()) {
                    sum = std::move(g);
                } else {
                    for (std::size_t t = 0; t < sum.size(); ++t) {
                        for (std::size_t k = 0; k < sum[t].data.size(); ++k) {
                            sum[t].data[k] += g[t].data[k];
                        }
                    }
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            for (Matrix& g : sum) {
                for (double& v : g.data) v *= inv;
            }
            fnn::optimizer_step(opt, params, sum);
        }
        const pcn::EpochStats stats = dataset_stats(params, topo, xs, ys);
        check_loss(stats.output_loss);
        trace.epochs.push_back(stats);
    }
    return trace;
}

pcn::TrainTrace train_zil_epochs(fnn::Params& params, const fnn::Topology& topo,
                                 const std::vector<Vector>& xs,
                                 const std::vector<Vector>& ys, double alpha, int epochs) {
    if (xs.empty() || xs.size() != ys.size()) {
        throw ConfigError("train_zil_epochs: needs a labeled, non-empty dataset");
    }
    pcn::TrainTrace trace;
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = 0; i < xs.size(); ++i) {
            (void)pcn::train_zil(params, topo, xs[i], ys[i], alpha);
        }
        const pcn::EpochStats stats = dataset_stats(params, topo, xs, ys);
        check_loss(stats.output_loss);
        trace.epochs.push_back(stats);
    }
    return trace;
}

pcn::TrainTrace run_training(const cfg::RunConfig& rc, std::ostream& log) {
    OpCounter::reset();
    const data::Dataset ds = data::load_csv(rc.dataset);
    const cfg::TrainingConfig& tc = rc.training;
    const bool needs_labels = rc.algorithm == cfg::AlgorithmKind::Bp ||
                              rc.algorithm == cfg::AlgorithmKind::Zil ||
                              (rc.algorithm != cfg::AlgorithmKind::GraphIl &&
                               rc.model.direction == fnn::Direction::Discriminative);
    if (needs_labels && !ds.labeled()) {
        throw ConfigError(rc.dataset + ": this algorithm needs labeled data");
    }

    pcn::InferenceConfig icfg;
    icfg.rate = tc.gamma;
    icfg.steps = tc.inference_steps;
    icfg.stop_tol = tc.stop_tol;
    icfg.schedule = tc.schedule;
    icfg.workers = tc.workers;
    fnn::Optimizer opt = tc.optimizer == fnn::OptimizerKind::Adam
                             ? fnn::Optimizer::adam(tc.alpha, tc.beta1, tc.beta2, tc.epsilon)
                             : fnn::Optimizer::sgd(tc.alpha);
    Rng rng(tc.seed);

    std::unique_ptr<metrics::Writer> writer;
    if (!rc.output.metrics.empty()) {
        writer = std::make_unique<metrics::Writer>(rc.output.metrics);
    }
    pcn::TrainTrace trace;
    int batches_per_epoch = 0;
    auto emit = [&](int epoch, const pcn::EpochStats& stats, std::uint64_t wall_ns) {
        trace.epochs.push_back(stats);
        if (!writer) return;
        metrics::Row row;
        row.epoch = epoch;
        row.batches = batches_per_epoch;
        row.energy = stats.energy;
        row.output_loss = stats.output_loss;
        row.residual = stats.residual;
        row.accuracy = stats.accuracy;
        row.wall_ns = tc.record_timings ? wall_ns : 0;
        row.matmuls = OpCounter::events();
        row.matmul_flops = OpCounter::flops();
        writer->write(row);
    };
    auto run_epochs = [&](auto&& one_epoch) {
        for (int e = 0; e < tc.epochs; ++e) {
            const auto t0 = std::chrono::steady_clock::now();
            const pcn::EpochStats stats = one_epoch();
            const auto t1 = std::chrono::steady_clock::now();
            emit(e, stats,
                 static_cast<std::uint64_t>(
                     std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
        }
    };

    if (rc.algorithm == cfg::AlgorithmKind::GraphIl) {
        graph::AdjacencyMask mask = ckpt::load_mask(rc.model.mask_file);
        graph::GraphParams params = graph::make_graph_params(mask);
        graph::init_graph_weights(params, mask, rng);
        graph::ClampingPlan plan{tc.x_nodes, tc.y_nodes, tc.init};
        graph::validate(plan, mask.n);
        const std::vector<Vector>* ys = ds.labeled() ? &ds.ys : nullptr;
        batches_per_epoch = static_cast<int>(
            (ds.size() + tc.batch_size - 1) / tc.batch_size);
        run_epochs([&]() {
            return graph::train_graph(params, mask, rc.model.graph_activation, ds.xs, ys,
                                      plan, icfg, opt, 1, static_cast<int>(tc.batch_size))
                .epochs.at(0);
        });
        if (!rc.output.checkpoint.empty()) {
            ckpt::save_checkpoint(rc.output.checkpoint,
                                  {mask, rc.model.graph_activation, params});
            log << "checkpoint written to " << rc.output.checkpoint << "\n";
        }
        return trace;
    }

    fnn::Topology topo{rc.model.widths, rc.model.activations, rc.model.direction};
    fnn::validate(topo);
    fnn::Params params = fnn::make_params(topo);
    fnn::init_weights(params, topo, rng);
    const std::vector<Vector>* ys = ds.labeled() ? &ds.ys : nullptr;
    batches_per_epoch =
        static_cast<int>((ds.size() + tc.batch_size - 1) / tc.batch_size);

    switch (rc.algorithm) {
        case cfg::AlgorithmKind::Il:
            run_epochs([&]() {
                return pcn::train_il(params, topo, ds.xs, ys, icfg, opt, 1,
                                     static_cast<int>(tc.batch_size))
                    .epochs.at(0);
            });
            break;
        case cfg::AlgorithmKind::IncrementalIl:
            run_epochs([&]() {
                return pcn::train_incremental_il(params, topo, ds.xs, ys, icfg, opt, 1,
                                                 static_cast<int>(tc.batch_size))
                    .epochs.at(0);
            });
            break;
        case cfg::AlgorithmKind::Bp:
            batches_per_epoch =
                static_cast<int>((ds.size() + tc.batch_size - 1) / tc.batch_size);
            run_epochs([&]() {
                return train_bp(params, topo, ds.xs, ds.ys, opt, 1,
                                static_cast<int>(tc.batch_size))
                    .epochs.at(0);
            });
            break;
        case cfg::AlgorithmKind::Zil:
            batches_per_epoch = static_cast<int>(ds.size());
            run_epochs([&]() {
                return train_zil_epochs(params, topo, ds.xs, ds.ys, tc.alpha, 1)
                    .epochs.at(0);
            });
            break;
        case cfg::AlgorithmKind::GraphIl:
            break;  // handled above
    }
    if (!rc.output.checkpoint.empty()) {
        ckpt::save_checkpoint(rc.output.checkpoint, {topo, params});
        log << "checkpoint written to " << rc.output.checkpoint << "\n";
    }
    return trace;
}

TestReport run_test(const std::string& checkpoint_path, const std::string& dataset_path,
                    const std::vector<std::size_t>& x_nodes,
                    const std::vector<std::size_t>& y_nodes, int settle_steps,
                    double settle_rate) {
    const data::Dataset ds = data::load_csv(dataset_path);
    if (!ds.labeled()) throw ConfigError(dataset_path + ": test needs labeled data");
    TestReport report;
    report.samples = ds.size();
    std::size_t correct = 0;
    const std::string kind = ckpt::checkpoint_kind(checkpoint_path);
    if (kind == "hierarchical") {
        const ckpt::HierarchicalCheckpoint ckpt = ckpt::load_hierarchical(checkpoint_path);
        if (ckpt.topology.direction != fnn::Direction::Discriminative) {
            throw ConfigError("test expects a discriminative checkpoint");
        }
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const Vector yhat =
                pcn::test_discriminative(ckpt.params, ckpt.topology, ds.xs[i]);
            report.mse += sample_sq_error(yhat, ds.ys[i]);
            if (sample_correct(yhat, ds.ys[i])) ++correct;
        }
    } else {
        const ckpt::GraphCheckpoint ckpt = ckpt::load_graph(checkpoint_path);
        graph::ClampingPlan plan{x_nodes, y_nodes, graph::GraphInit::Zeros};
        graph::validate(plan, ckpt.mask.n);
        if (plan.y_nodes.empty()) {
            throw ConfigError("graph test needs --y-nodes");
        }
        pcn::InferenceConfig icfg;
        icfg.steps = settle_steps;
        icfg.rate = settle_rate;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const Vector yhat =
                graph::graph_settle(ckpt.params, ckpt.act, ckpt.mask, plan, ds.xs[i], icfg);
            report.mse += sample_sq_error(yhat, ds.ys[i]);
            if (sample_correct(yhat, ds.ys[i])) ++correct;
        }
    }
    report.mse /= static_cast<double>(report.samples);
    report.accuracy = static_cast<double>(correct) / static_cast<double>(report.samples);
    return report;
}

}  // namespace pcnet::run
