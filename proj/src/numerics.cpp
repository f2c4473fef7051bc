#include "pcnet/numerics.hpp"

#include <cmath>
#include <thread>

namespace pcnet {

std::string Matrix::shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

std::atomic<std::uint64_t> OpCounter::events_{0};
std::atomic<std::uint64_t> OpCounter::flops_{0};
thread_local std::uint64_t OpCounter::thread_events_ = 0;

void OpCounter::record(std::size_t rows, std::size_t inner, std::size_t cols) {
    events_.fetch_add(1, std::memory_order_relaxed);
    flops_.fetch_add(static_cast<std::uint64_t>(rows) * inner * cols,
                     std::memory_order_relaxed);
    ++thread_events_;
}

std::uint64_t OpCounter::events() { return events_.load(std::memory_order_relaxed); }
std::uint64_t OpCounter::flops() { return flops_.load(std::memory_order_relaxed); }
std::uint64_t OpCounter::thread_events() { return thread_events_; }

void OpCounter::reset() {
    events_.store(0, std::memory_order_relaxed);
    flops_.store(0, std::memory_order_relaxed);
    thread_events_ = 0;
}

bool all_finite(const Vector& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) { return all_finite(m.data); }

namespace {

void check_finite(const Vector& v, const char* op) {
    if (!all_finite(v)) throw NumericError(std::string(op) + ": non-finite result");
}

void check_finite(const Matrix& m, const char* op) {
    if (!all_finite(m.data)) throw NumericError(std::string(op) + ": non-finite result");
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " * " +
                         b.shape_str());
    }
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < b.cols; ++j) {
            double sum = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) sum += a(i, k) * b(k, j);
            c(i, j) = sum;
        }
    }
    OpCounter::record(a.rows, a.cols, b.cols);
    check_finite(c, "matmul");
    return c;
}

Vector matvec(const Matrix& w, const Vector& v) {
    if (w.cols != v.size()) {
        throw ShapeError("matvec: incompatible shapes " + w.shape_str() + " * " +
                         std::to_string(v.size()) + "x1");
    }
    Vector out(w.rows, 0.0);
    for (std::size_t i = 0; i < w.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) sum += w(i, j) * v[j];
        out[i] = sum;
    }
    OpCounter::record(w.rows, w.cols, 1);
    check_finite(out, "matvec");
    return out;
}

Vector affine_apply(const Matrix& w, const Vector& a) {
    if (w.cols != a.size() + 1) {
        throw ShapeError("affine_apply: weight " + w.shape_str() +
                         " does not accept input of size " + std::to_string(a.size()) +
                         " plus bias");
    }
    Vector out(w.rows, 0.0);
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < w.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += w(i, j) * a[j];
        sum += w(i, n);  // bias column times the implicit 1
        out[i] = sum;
    }
    OpCounter::record(w.rows, w.cols, 1);
    check_finite(out, "affine_apply");
    return out;
}

Vector matvec_transpose(const Matrix& w, const Vector& v, std::size_t ncols) {
    if (w.rows != v.size() || ncols > w.cols) {
        throw ShapeError("matvec_transpose: incompatible shapes " + w.shape_str() +
                         "^T * " + std::to_string(v.size()) + "x1 over " +
                         std::to_string(ncols) + " columns");
    }
    Vector out(ncols, 0.0);
    for (std::size_t j = 0; j < ncols; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < w.rows; ++i) sum += w(i, j) * v[i];
        out[j] = sum;
    }
    OpCounter::record(ncols, w.rows, 1);
    check_finite(out, "matvec_transpose");
    return out;
}

Matrix outer(const Vector& u, const Vector& v) {
    Matrix c(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = 0; j < v.size(); ++j) c(i, j) = u[i] * v[j];
    }
    OpCounter::record(u.size(), 1, v.size());
    check_finite(c, "outer");
    return c;
}

Matrix outer_bias(const Vector& u, const Vector& a) {
    Matrix c(u.size(), a.size() + 1);
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < u.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) c(i, j) = u[i] * a[j];
        c(i, n) = u[i];
    }
    OpCounter::record(u.size(), 1, a.size() + 1);
    check_finite(c, "outer_bias");
    return c;
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::Linear: return "linear";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Relu: return "relu";
    }
    return "linear";
}

Activation activation_from_string(const std::string& name) {
    if (name == "linear") return Activation::Linear;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    if (name == "relu") return Activation::Relu;
    throw ConfigError("unknown activation '" + name + "'");
}

double act_eval(Activation a, double x) {
    switch (a) {
        case Activation::Linear: return x;
        case Activation::Tanh: return std::tanh(x);
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
        case Activation::Relu: return x > 0.0 ? x : 0.0;
    }
    return x;
}

double act_deriv(Activation a, double x) {
    switch (a) {
        case Activation::Linear: return 1.0;
        case Activation::Tanh: {
            double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Sigmoid: {
            double s = 1.0 / (1.0 + std::exp(-x));
            return s * (1.0 - s);
        }
        case Activation::Relu:
            return x > 0.0 ? 1.0 : 0.0;  // subgradient 0 at the kink
    }
    return 1.0;
}

Vector apply_activation(Activation a, const Vector& x) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = act_eval(a, x[i]);
    check_finite(out, "apply_activation");
    return out;
}

Vector activation_derivative(Activation a, const Vector& x) {
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = act_deriv(a, x[i]);
    check_finite(out, "activation_derivative");
    return out;
}

Vector finite_diff_gradient(const std::function<double(const Vector&)>& fn,
                            const Vector& at, double h) {
    if (h <= 0.0) throw NumericError("finite_diff_gradient: step must be positive");
    Vector grad(at.size(), 0.0);
    Vector probe = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = fn(probe);
        probe[i] = orig - h;
        const double fm = fn(probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    check_finite(grad, "finite_diff_gradient");
    return grad;
}

double Rng::uniform() {
    // 53 random mantissa bits -> [0, 1). Fixed construction, not the
    // implementation-defined std::uniform_real_distribution.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 shifted into (0, 1] so log is defined.
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

namespace {

// LU factorisation with partial pivoting. Returns false on (numerical)
// singularity. perm holds the row permutation, sign its parity.
bool lu_factor(Matrix& a, std::vector<std::size_t>& perm, int& sign) {
    if (a.rows != a.cols) {
        throw ShapeError("lu_factor: matrix must be square, got " + a.shape_str());
    }
    const std::size_t n = a.rows;
    perm.resize(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    sign = 1;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        double best = std::fabs(a(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double cand = std::fabs(a(i, k));
            if (cand > best) {
                best = cand;
                pivot = i;
            }
        }
        if (best == 0.0 || !std::isfinite(best)) return false;
        if (pivot != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(pivot, j));
            std::swap(perm[k], perm[pivot]);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            a(i, k) /= a(k, k);
            const double f = a(i, k);
            for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
        }
    }
    return true;
}

Vector lu_solve(const Matrix& lu, const std::vector<std::size_t>& perm, const Vector& b) {
    const std::size_t n = lu.rows;
    Vector x(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = b[perm[i]];
        for (std::size_t j = 0; j < i; ++j) sum -= lu(i, j) * x[j];
        x[i] = sum;
    }
    for (std::size_t i = n; i-- > 0;) {
        double sum = x[i];
        for (std::size_t j = i + 1; j < n; ++j) sum -= lu(i, j) * x[j];
        x[i] = sum / lu(i, i);
    }
    return x;
}

}  // namespace

Vector solve(Matrix a, Vector b) {
    if (a.rows != b.size()) {
        throw ShapeError("solve: matrix " + a.shape_str() + " vs rhs of size " +
                         std::to_string(b.size()));
    }
    std::vector<std::size_t> perm;
    int sign = 0;
    if (!lu_factor(a, perm, sign)) throw NumericError("solve: singular matrix");
    Vector x = lu_solve(a, perm, b);
    check_finite(x, "solve");
    return x;
}

Matrix inverse(Matrix a) {
    const std::size_t n = a.rows;
    std::vector<std::size_t> perm;
    int sign = 0;
    if (!lu_factor(a, perm, sign)) throw NumericError("inverse: singular matrix");
    Matrix inv(n, n);
    Vector e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        Vector col = lu_solve(a, perm, e);
        for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
    }
    check_finite(inv, "inverse");
    return inv;
}

double determinant(Matrix a) {
    std::vector<std::size_t> perm;
    int sign = 0;
    if (!lu_factor(a, perm, sign)) return 0.0;
    double det = sign;
    for (std::size_t i = 0; i < a.rows; ++i) det *= a(i, i);
    return det;
}

bool cholesky(const Matrix& a, Matrix& lower) {
    if (a.rows != a.cols) {
        throw ShapeError("cholesky: matrix must be square, got " + a.shape_str());
    }
    const std::size_t n = a.rows;
    lower = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = a(i, j);
            for (std::size_t k = 0; k < j; ++k) sum -= lower(i, k) * lower(j, k);
            if (i == j) {
                if (sum <= 0.0 || !std::isfinite(sum)) return false;
                lower(i, i) = std::sqrt(sum);
            } else {
                lower(i, j) = sum / lower(j, j);
            }
        }
    }
    return true;
}

double logdet_pd(const Matrix& a) {
    Matrix lower;
    if (!cholesky(a, lower)) throw NumericError("logdet_pd: matrix is not positive definite");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) acc += std::log(lower(i, i));
    return 2.0 * acc;
}

void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn,
                  std::vector<std::uint64_t>* per_task_events) {
    if (per_task_events) per_task_events->assign(n, 0);
    auto run_task = [&](std::size_t i) {
        const std::uint64_t before = OpCounter::thread_events();
        fn(i);
        if (per_task_events) (*per_task_events)[i] = OpCounter::thread_events() - before;
    };
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) run_task(i);
        return;
    }
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    std::vector<std::thread> pool;
    pool.reserve(k);
    for (std::size_t t = 0; t < k; ++t) {
        pool.emplace_back([&, t]() {
            for (std::size_t i = t; i < n; i += k) run_task(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace pcnet
