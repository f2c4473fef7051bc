#include "pcnet/probmodel.hpp"

#include <cmath>

namespace pcnet::prob {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559005768;

struct Residuals {
    Vector u_x;    // W_x z
    Vector eps_x;  // x - f(W_x z)
    Vector u_z;    // W_z z_p
    Vector eps_z;  // z - f(W_z z_p)
};

Residuals residuals(const RaoBallardModel& model, const Vector& x, const Vector& z) {
    Residuals r;
    r.u_x = matvec(model.w_x, z);
    const Vector fx = apply_activation(model.act, r.u_x);
    r.eps_x.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r.eps_x[i] = x[i] - fx[i];
    r.u_z = matvec(model.w_z, model.prior_input);
    const Vector fz = apply_activation(model.act, r.u_z);
    r.eps_z.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) r.eps_z[i] = z[i] - fz[i];
    return r;
}

double tanh_second_deriv(double u) {
    const double t = std::tanh(u);
    return -2.0 * t * (1.0 - t * t);
}

}  // namespace

void validate(const RaoBallardModel& model) {
    if (model.w_x.rows == 0 || model.w_x.cols == 0) {
        throw ShapeError("model has an empty observation matrix");
    }
    if (model.w_z.rows != model.w_x.cols) {
        throw ShapeError("prior matrix rows " + std::to_string(model.w_z.rows) +
                         " do not match latent size " + std::to_string(model.w_x.cols));
    }
    if (model.prior_input.size() != model.w_z.cols) {
        throw ShapeError("prior input length " + std::to_string(model.prior_input.size()) +
                         " does not match prior matrix " + model.w_z.shape_str());
    }
    if (!(model.var_x > 0.0) || !(model.var_z > 0.0)) {
        throw NumericError("model variances must be positive");
    }
}

double rb_energy(const RaoBallardModel& model, const Vector& x, const Vector& z) {
    validate(model);
    if (x.size() != model.w_x.rows || z.size() != model.w_x.cols) {
        throw ShapeError("rb_energy: x size " + std::to_string(x.size()) + ", z size " +
                         std::to_string(z.size()) + " vs model " + model.w_x.shape_str());
    }
    const Residuals r = residuals(model, x, z);
    double ex = 0.0;
    for (double e : r.eps_x) ex += e * e;
    double ez = 0.0;
    for (double e : r.eps_z) ez += e * e;
    return ex / model.var_x + ez / model.var_z;
}

Vector rb_energy_grad_z(const RaoBallardModel& model, const Vector& x, const Vector& z) {
    validate(model);
    const Residuals r = residuals(model, x, z);
    Vector s = r.eps_x;
    const Vector fp = activation_derivative(model.act, r.u_x);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] *= fp[i];
    const Vector back = matvec_transpose(model.w_x, s, model.w_x.cols);
    Vector g(z.size(), 0.0);
    for (std::size_t i = 0; i < z.size(); ++i) {
        g[i] = -2.0 / model.var_x * back[i] + 2.0 / model.var_z * r.eps_z[i];
    }
    return g;
}

Vector map_estep(const RaoBallardModel& model, const Vector& x, const Vector& z_init,
                 double rate, int steps) {
    validate(model);
    Vector z = z_init;
    for (int s = 0; s < steps; ++s) {
        const Vector g = rb_energy_grad_z(model, x, z);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] -= rate * g[i];
        const double e = rb_energy(model, x, z);
        if (!std::isfinite(e) || e > pcn::kDivergenceThreshold) {
            throw DivergenceError("map_estep diverged (energy " + std::to_string(e) +
                                  ", rate " + std::to_string(rate) + ")");
        }
    }
    return z;
}

ParamGradients rb_param_gradients(const RaoBallardModel& model, const Vector& x,
                                  const Vector& z) {
    validate(model);
    const Residuals r = residuals(model, x, z);
    ParamGradients g;
    Vector sx = r.eps_x;
    const Vector fpx = activation_derivative(model.act, r.u_x);
    for (std::size_t i = 0; i < sx.size(); ++i) sx[i] = -2.0 / model.var_x * sx[i] * fpx[i];
    g.w_x = outer(sx, z);
    Vector sz = r.eps_z;
    const Vector fpz = activation_derivative(model.act, r.u_z);
    for (std::size_t i = 0; i < sz.size(); ++i) sz[i] = -2.0 / model.var_z * sz[i] * fpz[i];
    g.w_z = outer(sz, model.prior_input);
    g.prior_input = matvec_transpose(model.w_z, sz, model.w_z.cols);
    return g;
}

void mstep(RaoBallardModel& model, const Vector& x, const Vector& z, double alpha,
           bool learn_prior) {
    const ParamGradients g = rb_param_gradients(model, x, z);
    for (std::size_t i = 0; i < model.w_x.data.size(); ++i) {
        model.w_x.data[i] -= alpha * g.w_x.data[i];
    }
    for (std::size_t i = 0; i < model.w_z.data.size(); ++i) {
        model.w_z.data[i] -= alpha * g.w_z.data[i];
    }
    if (learn_prior) {
        for (std::size_t i = 0; i < model.prior_input.size(); ++i) {
            model.prior_input[i] -= alpha * g.prior_input[i];
        }
    }
}

double nll_oracle_linear(const RaoBallardModel& model, const Vector& x) {
    validate(model);
    if (model.act != Activation::Linear) {
        throw Error("nll_oracle_linear: model must have a linear activation");
    }
    if (x.size() != model.w_x.rows) {
        throw ShapeError("nll_oracle_linear: x size does not match model");
    }
    const std::size_t n = x.size();
    const Vector z_mean = matvec(model.w_z, model.prior_input);
    const Vector mean = matvec(model.w_x, z_mean);
    // C = var_x I + var_z W_x W_x^T
    Matrix c(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < model.w_x.cols; ++k) {
                acc += model.w_x(i, k) * model.w_x(j, k);
            }
            c(i, j) = model.var_z * acc + (i == j ? model.var_x : 0.0);
        }
    }
    Vector d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) d[i] = x[i] - mean[i];
    const Vector cd = solve(c, d);
    double quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) quad += d[i] * cd[i];
    return 0.5 * (quad + logdet_pd(c) + static_cast<double>(n) * std::log(kTwoPi));
}

Matrix rb_hessian(const RaoBallardModel& model, const Vector& x, const Vector& z) {
    validate(model);
    const std::size_t n_z = z.size();
    if (model.act == Activation::Linear || model.act == Activation::Tanh) {
        const Residuals r = residuals(model, x, z);
        const Vector fp = activation_derivative(model.act, r.u_x);
        Matrix h(n_z, n_z);
        for (std::size_t k = 0; k < n_z; ++k) {
            for (std::size_t l = 0; l < n_z; ++l) {
                double acc = 0.0;
                for (std::size_t i = 0; i < model.w_x.rows; ++i) {
                    double curl = fp[i] * fp[i];
                    if (model.act == Activation::Tanh) {
                        curl -= r.eps_x[i] * tanh_second_deriv(r.u_x[i]);
                    }
                    acc += model.w_x(i, k) * model.w_x(i, l) * curl;
                }
                h(k, l) = 2.0 / model.var_x * acc;
                if (k == l) h(k, l) += 2.0 / model.var_z;
            }
        }
        return h;
    }
    // Finite-difference Hessian for activations without an analytic form here.
    const double h = 1e-4;
    Matrix out(n_z, n_z);
    for (std::size_t i = 0; i < n_z; ++i) {
        for (std::size_t j = 0; j < n_z; ++j) {
            auto eval = [&](double di, double dj) {
                Vector probe = z;
                probe[i] += di;
                probe[j] += dj;
                return rb_energy(model, x, probe);
            };
            const double fpp = eval(h, h);
            const double fpm = eval(h, -h);
            const double fmp = eval(-h, h);
            const double fmm = eval(-h, -h);
            out(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        }
    }
    // Symmetrise to kill finite-difference noise.
    for (std::size_t i = 0; i < n_z; ++i) {
        for (std::size_t j = i + 1; j < n_z; ++j) {
            const double v = 0.5 * (out(i, j) + out(j, i));
            out(i, j) = v;
            out(j, i) = v;
        }
    }
    return out;
}

double vfe_with_covariance(const RaoBallardModel& model, const Vector& x, const Vector& z,
                           const Matrix& cov) {
    const std::size_t n_z = z.size();
    if (cov.rows != n_z || cov.cols != n_z) {
        throw ShapeError("vfe_with_covariance: covariance " + cov.shape_str() +
                         " does not match latent size " + std::to_string(n_z));
    }
    const double det = determinant(cov);
    if (!(det > 0.0)) {
        throw NumericError("vfe_with_covariance: covariance determinant not positive");
    }
    const Matrix h = rb_hessian(model, x, z);
    double trace_term = 0.0;
    for (std::size_t i = 0; i < n_z; ++i) {
        for (std::size_t j = 0; j < n_z; ++j) trace_term += h(i, j) * cov(i, j);
    }
    return rb_energy(model, x, z) + 0.5 * trace_term - 0.5 * std::log(det) -
           0.5 * static_cast<double>(n_z) * (std::log(kTwoPi) + 1.0);
}

VfeReport gaussian_vfe(const RaoBallardModel& model, const Vector& x, const Vector& z) {
    VfeReport report;
    report.energy_at_mode = rb_energy(model, x, z);
    report.hessian = rb_hessian(model, x, z);
    Matrix lower;
    if (!cholesky(report.hessian, lower)) {
        report.degenerate = true;
        return report;
    }
    report.covariance = inverse(report.hessian);
    const double logdet_h = logdet_pd(report.hessian);
    const std::size_t n_z = z.size();
    report.vfe = report.energy_at_mode + 0.5 * logdet_h -
                 0.5 * static_cast<double>(n_z) * std::log(kTwoPi);
    report.entropy_term = 0.5 * static_cast<double>(n_z) * (std::log(kTwoPi) + 1.0) -
                          0.5 * logdet_h;
    return report;
}

double multilayer_energy_logdet(const pcn::Topology& topo, const pcn::NetState& state,
                                const pcn::PrecisionSet& prec) {
    const pcn::EnergyReport er = pcn::energy(topo, state, prec);
    double logdet = 0.0;
    for (std::size_t l = 0; l < topo.widths.size(); ++l) {
        const Vector* pi = prec.layer(l);
        if (!pi) continue;
        for (double p : *pi) logdet += std::log(p);
    }
    return er.total - 0.5 * logdet;
}

RaoBallardModel make_linear_latent_model(std::uint64_t seed) {
    Rng rng(seed);
    RaoBallardModel model;
    model.act = Activation::Linear;
    model.w_x = Matrix(3, 2);
    for (double& v : model.w_x.data) v = rng.uniform(-1.0, 1.0);
    model.w_z = Matrix(2, 2);
    for (double& v : model.w_z.data) v = rng.uniform(-1.0, 1.0);
    model.prior_input.resize(2);
    for (double& v : model.prior_input) v = rng.uniform(-1.0, 1.0);
    // A small observation variance keeps the latent posterior sharp, so the
    // mode-based E-step tracks the exact posterior closely.
    model.var_x = 0.1;
    model.var_z = 1.0;
    return model;
}

std::vector<Vector> sample_linear_latent(const RaoBallardModel& model, std::size_t n,
                                         Rng& rng) {
    validate(model);
    if (model.act != Activation::Linear) {
        throw Error("sample_linear_latent: model must have a linear activation");
    }
    const double sd_x = std::sqrt(model.var_x);
    const double sd_z = std::sqrt(model.var_z);
    const Vector z_mean = matvec(model.w_z, model.prior_input);
    std::vector<Vector> xs;
    xs.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        Vector z = z_mean;
        for (double& v : z) v += sd_z * rng.normal();
        Vector x = matvec(model.w_x, z);
        for (double& v : x) v += sd_x * rng.normal();
        xs.push_back(std::move(x));
    }
    return xs;
}

EmTrace run_em(RaoBallardModel& model, const std::vector<Vector>& xs, const EmConfig& cfg) {
    validate(model);
    if (xs.empty()) throw ConfigError("run_em: no samples");
    const std::size_t n = xs.size();
    const bool linear = model.act == Activation::Linear;
    EmTrace trace;
    auto dataset_nll = [&]() {
        double acc = 0.0;
        for (const Vector& x : xs) acc += nll_oracle_linear(model, x);
        return acc;
    };
    if (linear) trace.nll.push_back(dataset_nll());
    std::vector<Vector> zs(n, Vector(model.w_x.cols, 0.0));
    for (int it = 0; it < cfg.iterations; ++it) {
        double mean_energy = 0.0;
        Matrix gx_sum(model.w_x.rows, model.w_x.cols);
        Matrix gz_sum(model.w_z.rows, model.w_z.cols);
        for (std::size_t i = 0; i < n; ++i) {
            zs[i] = map_estep(model, xs[i], zs[i], cfg.estep_rate, cfg.estep_steps);
            mean_energy += rb_energy(model, xs[i], zs[i]);
            const ParamGradients g = rb_param_gradients(model, xs[i], zs[i]);
            for (std::size_t k = 0; k < gx_sum.data.size(); ++k) {
                gx_sum.data[k] += g.w_x.data[k];
            }
            for (std::size_t k = 0; k < gz_sum.data.size(); ++k) {
                gz_sum.data[k] += g.w_z.data[k];
            }
        }
        trace.energy.push_back(mean_energy / static_cast<double>(n));
        const double inv = 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < gx_sum.data.size(); ++k) {
            model.w_x.data[k] -= cfg.mstep_alpha * inv * gx_sum.data[k];
        }
        for (std::size_t k = 0; k < gz_sum.data.size(); ++k) {
            model.w_z.data[k] -= cfg.mstep_alpha * inv * gz_sum.data[k];
        }
        if (linear) trace.nll.push_back(dataset_nll());
    }
    return trace;
}

}  // namespace pcnet::prob
