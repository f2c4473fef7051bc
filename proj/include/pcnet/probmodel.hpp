// Probabilistic reading of the predictive coding energy: a two-layer latent
// variable model with Gaussian noise, its EM loops, the closed-form marginal
// likelihood in the linear case, and the Gaussian variational free energy
// around a mode. The model is
//   eps_x = x - f(W_x z),   eps_z = z - f(W_z z_p),
//   E(x, z) = |eps_x|^2 / var_x + |eps_z|^2 / var_z,
// i.e. twice the joint Gaussian negative log density up to constants.
#pragma once

#include <cstdint>
#include <vector>

#include "pcnet/numerics.hpp"
#include "pcnet/pcn.hpp"

namespace pcnet::prob {

struct RaoBallardModel {
    Matrix w_x;          // n_x x n_z
    Matrix w_z;          // n_z x n_p
    Vector prior_input;  // z_p, length n_p
    double var_x = 1.0;
    double var_z = 1.0;
    Activation act = Activation::Linear;
};

void validate(const RaoBallardModel& model);

double rb_energy(const RaoBallardModel& model, const Vector& x, const Vector& z);

// dE/dz, analytic.
Vector rb_energy_grad_z(const RaoBallardModel& model, const Vector& x, const Vector& z);

// MAP estimate of z by gradient descent on the energy from z_init.
// Throws DivergenceError when the energy blows past the training threshold.
Vector map_estep(const RaoBallardModel& model, const Vector& x, const Vector& z_init,
                 double rate, int steps);

struct ParamGradients {
    Matrix w_x;
    Matrix w_z;
    Vector prior_input;
};

// dE/dW_x, dE/dW_z, dE/dz_p at (x, z).
ParamGradients rb_param_gradients(const RaoBallardModel& model, const Vector& x,
                                  const Vector& z);

// One gradient step of size alpha on W_x and W_z (and z_p when learn_prior).
void mstep(RaoBallardModel& model, const Vector& x, const Vector& z, double alpha,
           bool learn_prior = false);

// Exact marginal negative log likelihood for the linear model:
// x ~ N(W_x W_z z_p, var_x I + var_z W_x W_x^T). Linear activation only.
double nll_oracle_linear(const RaoBallardModel& model, const Vector& x);

// Hessian of the energy with respect to z: analytic for Linear and Tanh,
// central finite differences (h = 1e-4) for other activations.
Matrix rb_hessian(const RaoBallardModel& model, const Vector& x, const Vector& z);

// Gaussian variational free energy around a mode z with covariance S:
//   F(S) = E(x, z) + 0.5 sum_ij H_ij S_ij - 0.5 log det S - 0.5 n_z (log 2pi + 1).
// Exposed with an arbitrary covariance so tests can probe dF/dS directly.
double vfe_with_covariance(const RaoBallardModel& model, const Vector& x,
                           const Vector& z, const Matrix& cov);

struct VfeReport {
    double energy_at_mode = 0.0;
    Matrix hessian;
    Matrix covariance;       // H^{-1} when not degenerate
    double vfe = 0.0;        // E + 0.5 log det H - 0.5 n_z log 2pi
    double entropy_term = 0.0;  // differential entropy of the Gaussian posterior
    bool degenerate = false;    // Hessian not positive definite; no F reported
};

// Optimal-covariance free energy at a mode: plugs S = H^{-1} into the form
// above. Flags (rather than throws on) an indefinite Hessian.
VfeReport gaussian_vfe(const RaoBallardModel& model, const Vector& x, const Vector& z);

// Layered energy with precision log-determinant terms:
//   0.5 sum_l (eps_l^T Pi_l eps_l - log det Pi_l).
// Matches pcn::energy().total for identity precisions.
double multilayer_energy_logdet(const pcn::Topology& topo, const pcn::NetState& state,
                                const pcn::PrecisionSet& prec);

// Deterministic synthetic ground truth for the linear-Gaussian experiments.
RaoBallardModel make_linear_latent_model(std::uint64_t seed);
std::vector<Vector> sample_linear_latent(const RaoBallardModel& model, std::size_t n,
                                         Rng& rng);

struct EmTrace {
    std::vector<double> energy;  // mean joint energy after each E-step
    std::vector<double> nll;     // dataset NLL after each M-step (linear models)
};

struct EmConfig {
    int iterations = 50;
    double estep_rate = 0.1;
    int estep_steps = 200;
    double mstep_alpha = 0.02;
};

// Alternates a full E-step (map_estep per sample, warm-started) with one
// partial M-step on the batch-averaged parameter gradients. For linear
// models the trace records the exact marginal NLL after every iteration,
// with nll[0] holding the pre-training value.
EmTrace run_em(RaoBallardModel& model, const std::vector<Vector>& xs,
               const EmConfig& cfg);

}  // namespace pcnet::prob
