// Dense linear algebra, activations and seeded RNG used by every other module.
// All floating point state is double precision. Every matrix product goes
// through one of the counted kernels below so that operation counts reported
// by the bench tooling are exact.
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcnet {

using Vector = std::vector<double>;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Shape or dimension mismatch between operands; message names both shapes.
struct ShapeError : Error {
    using Error::Error;
};
// A public operation produced or encountered a non-finite value.
struct NumericError : Error {
    using Error::Error;
};
// Training energy crossed the divergence threshold or blew up.
struct DivergenceError : Error {
    using Error::Error;
};
// Bad run configuration, dataset or checkpoint input.
struct ConfigError : Error {
    using Error::Error;
};

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, data.size() == rows * cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const;
};

// Global matmul accounting. Each counted kernel adds one event annotated with
// its (rows, inner, cols) shape; the flop accumulator weighs the event by
// rows * inner * cols. Counters are atomic, so counts stay exact when layer
// updates run on worker threads. A thread-local mirror supports per-task
// critical-path measurements in the bench tooling.
class OpCounter {
  public:
    static void record(std::size_t rows, std::size_t inner, std::size_t cols);
    static std::uint64_t events();
    static std::uint64_t flops();
    static std::uint64_t thread_events();
    static void reset();

  private:
    static std::atomic<std::uint64_t> events_;
    static std::atomic<std::uint64_t> flops_;
    static thread_local std::uint64_t thread_events_;
};

// Counted product kernels. All throw ShapeError on mismatched operands and
// NumericError if the result contains NaN or Inf.
Matrix matmul(const Matrix& a, const Matrix& b);
// w * v with w.cols == v.size().
Vector matvec(const Matrix& w, const Vector& v);
// w * [a; 1] for a weight matrix whose last column is an absorbed bias.
Vector affine_apply(const Matrix& w, const Vector& a);
// (w[:, 0:ncols])^T * v; used for error propagation where the bias column
// of an absorbed-bias matrix must not participate.
Vector matvec_transpose(const Matrix& w, const Vector& v, std::size_t ncols);
// u * v^T.
Matrix outer(const Vector& u, const Vector& v);
// u * [a; 1]^T, the gradient shape partner of affine_apply.
Matrix outer_bias(const Vector& u, const Vector& a);

enum class Activation { Linear, Tanh, Sigmoid, Relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Scalar activation and first derivative. Relu uses the f'(0) = 0 convention.
double act_eval(Activation a, double x);
double act_deriv(Activation a, double x);

Vector apply_activation(Activation a, const Vector& x);
Vector activation_derivative(Activation a, const Vector& x);

// Central finite difference of a scalar function, (f(x+h) - f(x-h)) / 2h per
// coordinate. Used as the gradient oracle throughout the test suite; it never
// calls any analytic gradient path.
Vector finite_diff_gradient(const std::function<double(const Vector&)>& fn,
                            const Vector& at, double h);

// Deterministic PRNG with a fixed algorithm (mt19937_64) and hand-rolled
// distributions so that a given seed yields the same stream on every
// platform. normal() is Box-Muller with a cached spare.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // standard normal

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Small dense solvers used by the probabilistic module and test oracles.
// Plain LU with partial pivoting; no external BLAS/LAPACK.
Vector solve(Matrix a, Vector b);       // throws NumericError if singular
Matrix inverse(Matrix a);               // throws NumericError if singular
double determinant(Matrix a);
// Cholesky factor of a symmetric positive definite matrix; returns false if
// the matrix is not positive definite.
bool cholesky(const Matrix& a, Matrix& lower);
// log(det(a)) for symmetric positive definite a; throws NumericError if not PD.
double logdet_pd(const Matrix& a);

bool all_finite(const Vector& v);
bool all_finite(const Matrix& m);

// Runs fn(i) for i in [0, n) on `workers` threads with a fixed strided task
// assignment. Each task index is processed exactly once and writes only its
// own outputs, so results are bitwise identical for every worker count.
// When per_task_events is non-null it receives the number of counted matmul
// events each task performed (the basis for critical-path measurements).
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn,
                  std::vector<std::uint64_t>* per_task_events = nullptr);

}  // namespace pcnet
