#pragma once

#include <cstddef>
#include <string>

namespace actlearn::kernels {

// Data-parallel primitives behind the weighted-moment inner loops.
// Every entry point has a scalar reference implementation and, on x86-64
// hosts with AVX2+FMA, a vectorized variant selected at runtime. The
// variants are equivalence-tested against the scalar reference; summation
// order may differ, so agreement is to tight tolerance, not bit-exact.
struct Backend {
    const char* name;

    // out[i] = (xs[i] - q)^2
    void (*sq_dist)(const double* xs, std::size_t n, double q, double* out);
    // out[i] += (xs[i] - q)^2
    void (*sq_dist_acc)(const double* xs, std::size_t n, double q, double* out);
    // out[i] = exp(-k * a[i])
    void (*exp_neg_scale)(const double* a, std::size_t n, double k, double* out);
    // sum a[i]
    double (*sum)(const double* a, std::size_t n);
    // sum a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // sum w[i] * (a[i] - mu_a) * (b[i] - mu_b)
    double (*centered_dot)(const double* w, const double* a, double mu_a,
                           const double* b, double mu_b, std::size_t n);
    // sum w[i]^2
    double (*sum_sq)(const double* w, std::size_t n);
    // sum w[i]^2 * v[i]
    double (*dot_sq)(const double* w, const double* v, std::size_t n);
    // sum w[i]^2 * a[i] * b[i]
    double (*dot_sq2)(const double* w, const double* a, const double* b, std::size_t n);
};

const Backend& scalar_backend();

// nullptr when this build/CPU cannot run AVX2.
const Backend* avx2_backend();

bool avx2_supported();

// Runtime-selected backend: AVX2 when supported, else scalar. The
// ACTLEARN_KERNELS environment variable ("scalar" / "avx2") pins the initial
// choice; set_active() overrides it programmatically (used by the
// equivalence tests).
const Backend& active();
void set_active(const std::string& name); // throws ConfigError on unknown/unsupported

} // namespace actlearn::kernels
