#include <doctest.h>

#include <cmath>
#include <vector>

#include "actlearn/kernels.hpp"
#include "actlearn/random.hpp"

using namespace actlearn;

namespace {

// relative-plus-absolute tolerance; the absolute floor absorbs values that
// underflow differently across backends
bool close(double a, double b, double rel, double abs_floor = 1e-300) {
    return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

std::vector<double> random_array(RandomStream& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

} // namespace

TEST_SUITE("kernels") {

TEST_CASE("dispatch exposes a working backend") {
    const auto& b = kernels::active();
    CHECK((std::string(b.name) == "scalar" || std::string(b.name) == "avx2"));
    kernels::set_active("scalar");
    CHECK(std::string(kernels::active().name) == "scalar");
    if (kernels::avx2_supported()) {
        kernels::set_active("avx2");
        CHECK(std::string(kernels::active().name) == "avx2");
    } else {
        CHECK_THROWS(kernels::set_active("avx2"));
    }
    CHECK_THROWS(kernels::set_active("sse9"));
    kernels::set_active(b.name); // restore
}

TEST_CASE("avx2 backend matches the scalar reference") {
    if (!kernels::avx2_supported()) return;
    const auto& sc = kernels::scalar_backend();
    const auto& vx = *kernels::avx2_backend();
    RandomStream rng(31337);

    for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{4},
                          std::size_t{5}, std::size_t{17}, std::size_t{1000}}) {
        const auto xs = random_array(rng, n, -5.0, 5.0);
        const auto ys = random_array(rng, n, -2.0, 2.0);
        const auto ws = random_array(rng, n, 0.0, 1.0);
        const double q = rng.uniform(-3.0, 3.0);

        std::vector<double> out_s(n), out_v(n);
        sc.sq_dist(xs.data(), n, q, out_s.data());
        vx.sq_dist(xs.data(), n, q, out_v.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(out_s[i] == out_v[i]); // pure per-lane ops

        auto acc_s = ys, acc_v = ys;
        sc.sq_dist_acc(xs.data(), n, q, acc_s.data());
        vx.sq_dist_acc(xs.data(), n, q, acc_v.data());
        // fused multiply-add rounds once, the reference twice; differences can
        // be magnified by cancellation, so bound them by the operand scale
        for (std::size_t i = 0; i < n; ++i) CHECK(close(acc_s[i], acc_v[i], 1e-15, 1e-12));

        CHECK(close(sc.sum(ws.data(), n), vx.sum(ws.data(), n), 1e-13));
        CHECK(close(sc.dot(xs.data(), ys.data(), n), vx.dot(xs.data(), ys.data(), n), 1e-13));
        CHECK(close(sc.centered_dot(ws.data(), xs.data(), 0.3, ys.data(), -0.2, n),
                    vx.centered_dot(ws.data(), xs.data(), 0.3, ys.data(), -0.2, n), 1e-12));
        CHECK(close(sc.sum_sq(ws.data(), n), vx.sum_sq(ws.data(), n), 1e-13));
        CHECK(close(sc.dot_sq(ws.data(), xs.data(), n), vx.dot_sq(ws.data(), xs.data(), n),
                    1e-12));
        CHECK(close(sc.dot_sq2(ws.data(), xs.data(), ys.data(), n),
                    vx.dot_sq2(ws.data(), xs.data(), ys.data(), n), 1e-12));
    }
}

TEST_CASE("vectorized exp matches std::exp across the full range") {
    if (!kernels::avx2_supported()) return;
    const auto& vx = *kernels::avx2_backend();
    RandomStream rng(99);

    std::vector<double> args;
    for (int i = 0; i < 4000; ++i) args.push_back(rng.uniform(0.0, 80.0)); // typical kernel range
    for (int i = 0; i < 1000; ++i) args.push_back(rng.uniform(0.0, 800.0)); // down to underflow
    args.insert(args.end(), {0.0, 1e-300, 700.0, 708.0, 710.0, 745.0, 800.0, 1e6});

    std::vector<double> out(args.size());
    vx.exp_neg_scale(args.data(), args.size(), 1.0, out.data());
    for (std::size_t i = 0; i < args.size(); ++i) {
        const double expect = std::exp(-args[i]);
        CHECK(close(out[i], expect, 1e-14, 1e-305));
    }

    // negative scaled arguments exercise the growth side
    std::vector<double> neg = {-1.0, -10.0, -100.0, -700.0, -709.0};
    std::vector<double> out2(neg.size());
    vx.exp_neg_scale(neg.data(), neg.size(), 1.0, out2.data());
    for (std::size_t i = 0; i < neg.size(); ++i) {
        const double expect = std::exp(-neg[i]);
        if (std::isinf(expect)) {
            CHECK(std::isinf(out2[i]));
        } else {
            CHECK(close(out2[i], expect, 1e-14));
        }
    }
}

TEST_CASE("exp_neg_scale applies the scale factor") {
    const auto& b = kernels::active();
    const double sq = 1.0;
    double out;
    b.exp_neg_scale(&sq, 1, 2.5, &out);
    CHECK(out == doctest::Approx(std::exp(-2.5)).epsilon(1e-13));
}

} // TEST_SUITE
