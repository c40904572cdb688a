#include "actlearn/kernels.hpp"

#include <cmath>

// Reference implementations. Plain loops, kept free of manual unrolling so
// they double as the readable statement of each kernel's contract.

namespace actlearn::kernels {
namespace {

void sq_dist(const double* xs, std::size_t n, double q, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double d = xs[i] - q;
        out[i] = d * d;
    }
}

void sq_dist_acc(const double* xs, std::size_t n, double q, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double d = xs[i] - q;
        out[i] += d * d;
    }
}

void exp_neg_scale(const double* a, std::size_t n, double k, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(-k * a[i]);
    }
}

double sum(const double* a, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double centered_dot(const double* w, const double* a, double mu_a,
                    const double* b, double mu_b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * (a[i] - mu_a) * (b[i] - mu_b);
    return s;
}

double sum_sq(const double* w, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * w[i];
    return s;
}

double dot_sq(const double* w, const double* v, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * w[i] * v[i];
    return s;
}

double dot_sq2(const double* w, const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += w[i] * w[i] * a[i] * b[i];
    return s;
}

} // namespace

const Backend& scalar_backend() {
    static const Backend backend{
        "scalar",  sq_dist, sq_dist_acc, exp_neg_scale, sum,
        dot,       centered_dot, sum_sq, dot_sq, dot_sq2,
    };
    return backend;
}

} // namespace actlearn::kernels
