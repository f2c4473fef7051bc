#pragma once

#include <ostream>
#include <string>

#include "pcnet/config.hpp"
#include "pcnet/dataset.hpp"
#include "pcnet/pcn.hpp"

namespace pcnet::run {

// Plain backprop training loop, the baseline the predictive-coding schedules
// are compared against. Per batch: average the gradients of 0.5|yhat - y|^2,
// take one optimizer step. Trace rows carry the epoch-mean unscaled squared
// error in both the energy and output_loss columns (residual is zero for a
// pure feedforward pass).
pcn::TrainTrace train_bp(fnn::Params& params, const fnn::Topology& topo,
                         const std::vector<Vector>& xs, const std::vector<Vector>& ys,
                         fnn::Optimizer& opt, int epochs, int batch_size);

// Zero-divergence schedule over a dataset: one exactly-backprop-equivalent
// update per sample per epoch (learning rate alpha, plain SGD by definition).
pcn::TrainTrace train_zil_epochs(fnn::Params& params, const fnn::Topology& topo,
                                 const std::vector<Vector>& xs,
                                 const std::vector<Vector>& ys, double alpha, int epochs);

// Runs a full training job: loads the dataset, builds the model from the
// config, trains epoch by epoch, appends one metrics row per epoch, and
// saves a checkpoint when requested. Resets the operation counters at entry
// so identical configs produce byte-identical metrics files.
pcn::TrainTrace run_training(const cfg::RunConfig& rc, std::ostream& log);

struct TestReport {
    std::size_t samples = 0;
    double mse = 0.0;       // mean unscaled squared error over samples
    double accuracy = -1.0; // fraction with every output within 0.5 of the label
};

// Evaluates a hierarchical (discriminative) or graph checkpoint on a labeled
// dataset. Graph checkpoints need the node assignment for the data columns.
TestReport run_test(const std::string& checkpoint_path, const std::string& dataset_path,
                    const std::vector<std::size_t>& x_nodes,
                    const std::vector<std::size_t>& y_nodes, int settle_steps,
                    double settle_rate);

}  // namespace pcnet::run
