// AVX2+FMA variants of the kernel primitives. This translation unit is
// compiled with -mavx2 -mfma; nothing here may run unless the dispatcher has
// verified CPU support. Reductions use one vector accumulator plus a scalar
// tail, so totals differ from the scalar backend only by summation order.

#include "actlearn/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define ACTLEARN_AVX2_BUILD 1
#endif

#ifdef ACTLEARN_AVX2_BUILD

#include <immintrin.h>

#include <cmath>
#include <limits>

namespace actlearn::kernels {
namespace {

// exp() for 4 doubles: Cody-Waite range reduction, rational approximation
// on |r| <= ln2/2, exponent reassembly in two steps so 2^n never overflows.
inline __m256d exp_pd(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
    const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
    const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
    const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
    const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
    const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
    const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
    const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
    const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d two = _mm256_set1_pd(2.0);
    const __m256d max_x = _mm256_set1_pd(709.78271289338399684);
    const __m256d min_x = _mm256_set1_pd(-708.39641853226410622);

    const __m256d too_small = _mm256_cmp_pd(x, min_x, _CMP_LT_OQ);
    const __m256d too_big = _mm256_cmp_pd(x, max_x, _CMP_GT_OQ);
    x = _mm256_max_pd(_mm256_min_pd(x, max_x), min_x);

    const __m256d nf = _mm256_round_pd(
        _mm256_fmadd_pd(x, log2e, _mm256_set1_pd(0.5)),
        _MM_FROUND_TO_NEG_INF | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(nf, c1, x);
    r = _mm256_fnmadd_pd(nf, c2, r);

    const __m256d r2 = _mm256_mul_pd(r, r);
    const __m256d p = _mm256_fmadd_pd(_mm256_fmadd_pd(p0, r2, p1), r2, p2);
    const __m256d px = _mm256_mul_pd(r, p);
    const __m256d q =
        _mm256_fmadd_pd(_mm256_fmadd_pd(_mm256_fmadd_pd(q0, r2, q1), r2, q2), r2, q3);
    __m256d y = _mm256_div_pd(px, _mm256_sub_pd(q, px));
    y = _mm256_fmadd_pd(two, y, one);

    const __m128i n32 = _mm256_cvtpd_epi32(nf);
    const __m128i n1 = _mm_srai_epi32(n32, 1);
    const __m128i n2 = _mm_sub_epi32(n32, n1);
    const auto pow2 = [](__m128i nn) {
        __m256i e = _mm256_cvtepi32_epi64(nn);
        e = _mm256_add_epi64(e, _mm256_set1_epi64x(1023));
        e = _mm256_slli_epi64(e, 52);
        return _mm256_castsi256_pd(e);
    };
    y = _mm256_mul_pd(_mm256_mul_pd(y, pow2(n1)), pow2(n2));

    y = _mm256_andnot_pd(too_small, y);
    y = _mm256_blendv_pd(y, _mm256_set1_pd(std::numeric_limits<double>::infinity()),
                         too_big);
    return y;
}

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s2 = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s2, _mm_unpackhi_pd(s2, s2)));
}

void sq_dist(const double* xs, std::size_t n, double q, double* out) {
    const __m256d qv = _mm256_set1_pd(q);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(xs + i), qv);
        _mm256_storeu_pd(out + i, _mm256_mul_pd(d, d));
    }
    for (; i < n; ++i) {
        const double d = xs[i] - q;
        out[i] = d * d;
    }
}

void sq_dist_acc(const double* xs, std::size_t n, double q, double* out) {
    const __m256d qv = _mm256_set1_pd(q);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(xs + i), qv);
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(d, d, _mm256_loadu_pd(out + i)));
    }
    for (; i < n; ++i) {
        const double d = xs[i] - q;
        out[i] += d * d;
    }
}

void exp_neg_scale(const double* a, std::size_t n, double k, double* out) {
    const __m256d nk = _mm256_set1_pd(-k);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, exp_pd(_mm256_mul_pd(nk, _mm256_loadu_pd(a + i))));
    }
    if (i < n) {
        // run the tail through the same approximation
        double buf[4] = {0, 0, 0, 0};
        double res[4];
        for (std::size_t j = i; j < n; ++j) buf[j - i] = a[j];
        _mm256_storeu_pd(res, exp_pd(_mm256_mul_pd(nk, _mm256_loadu_pd(buf))));
        for (std::size_t j = i; j < n; ++j) out[j] = res[j - i];
    }
}

double sum(const double* a, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i];
    return s;
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double centered_dot(const double* w, const double* a, double mu_a,
                    const double* b, double mu_b, std::size_t n) {
    const __m256d ma = _mm256_set1_pd(mu_a);
    const __m256d mb = _mm256_set1_pd(mu_b);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d da = _mm256_sub_pd(_mm256_loadu_pd(a + i), ma);
        const __m256d db = _mm256_sub_pd(_mm256_loadu_pd(b + i), mb);
        acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), da), db, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += w[i] * (a[i] - mu_a) * (b[i] - mu_b);
    return s;
}

double sum_sq(const double* w, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(w + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += w[i] * w[i];
    return s;
}

double dot_sq(const double* w, const double* v, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d wv = _mm256_loadu_pd(w + i);
        acc = _mm256_fmadd_pd(_mm256_mul_pd(wv, wv), _mm256_loadu_pd(v + i), acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += w[i] * w[i] * v[i];
    return s;
}

double dot_sq2(const double* w, const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d wv = _mm256_loadu_pd(w + i);
        const __m256d ab = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_fmadd_pd(_mm256_mul_pd(wv, wv), ab, acc);
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += w[i] * w[i] * a[i] * b[i];
    return s;
}

constexpr Backend kAvx2Backend{
    "avx2",    sq_dist, sq_dist_acc, exp_neg_scale, sum,
    dot,       centered_dot, sum_sq, dot_sq, dot_sq2,
};

} // namespace

const Backend* avx2_backend_raw() { return &kAvx2Backend; }

} // namespace actlearn::kernels

#else // !ACTLEARN_AVX2_BUILD

namespace actlearn::kernels {
const Backend* avx2_backend_raw() { return nullptr; }
} // namespace actlearn::kernels

#endif
