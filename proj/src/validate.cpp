#include "actlearn/validate.hpp"

#include <cmath>

#include "actlearn/lwr.hpp"
#include "actlearn/mog.hpp"
#include "actlearn/parallel.hpp"

namespace actlearn::validate {

namespace {

Vec scalar_vec(double v) {
    Vec x(1);
    x[0] = v;
    return x;
}

mog::MixtureModel random_mog_model(RandomStream& rng) {
    mog::MixtureModel model;
    model.d_x = 1;
    model.d_y = 1;
    const int n_comp = 1 + static_cast<int>(rng.uniform(0.0, 3.0));
    for (int i = 0; i < n_comp; ++i) {
        const double var_x = rng.uniform(0.3, 2.0);
        const double var_y = rng.uniform(0.3, 2.0);
        const double rho = rng.uniform(-0.8, 0.8);
        mog::GaussianComponent c;
        c.mean = Vec(2);
        c.mean << rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0);
        c.cov = Mat(2, 2);
        const double cov_xy = rho * std::sqrt(var_x * var_y);
        c.cov << var_x, cov_xy, cov_xy, var_y;
        c.support = rng.uniform(3.0, 30.0);
        model.components.push_back(std::move(c));
    }
    return model;
}

lwr::LwrState random_lwr_state(RandomStream& rng) {
    const int m = 8 + static_cast<int>(rng.uniform(0.0, 18.0));
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    const double c = rng.uniform(-0.5, 0.5);
    Dataset data(1, 1);
    for (int i = 0; i < m; ++i) {
        const double x = rng.uniform(0.0, 4.0);
        const double y = a + b * x + c * x * x + rng.normal(0.0, 0.2);
        data.add(Sample{scalar_vec(x), scalar_vec(y)});
    }
    const double k = rng.uniform(0.3, 3.0);
    return lwr::LwrState(std::move(data), k);
}

std::vector<Vec> random_refs(RandomStream& rng, int count, double lo, double hi) {
    std::vector<Vec> refs;
    refs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) refs.push_back(scalar_vec(rng.uniform(lo, hi)));
    return refs;
}

TrialResult score_trial(double closed, const McEstimate& mc) {
    TrialResult t;
    t.closed_form = closed;
    t.mc_estimate = mc.value;
    t.mc_std_error = mc.std_error;
    t.pass = std::abs(closed - mc.value) <= 3.0 * mc.std_error;
    return t;
}

SuiteResult run_suite(int trials, int threads,
                      const std::function<TrialResult(RandomStream&)>& one_trial,
                      std::uint64_t seed) {
    SuiteResult result;
    result.trials.resize(static_cast<std::size_t>(trials));
    const RandomStream root(seed);
    parallel_for(
        static_cast<std::size_t>(trials),
        [&](std::size_t i) {
            RandomStream rs = root.substream(i);
            result.trials[i] = one_trial(rs);
        },
        threads);
    for (const TrialResult& t : result.trials) {
        if (t.pass) ++result.n_pass;
    }
    return result;
}

} // namespace

SuiteResult mog_suite(int trials, int draws, std::uint64_t seed, int threads) {
    return run_suite(
        trials, threads,
        [draws](RandomStream& rs) {
            const mog::MixtureModel model = random_mog_model(rs);
            const mog::Evaluator ev(model);
            const Vec query = scalar_vec(rs.uniform(-3.0, 3.0));
            const std::vector<Vec> refs = random_refs(rs, 6, -3.0, 3.0);
            const double closed = ev.expected_posterior_variance(query, refs);
            const McEstimate mc = ev.mc_expected_variance(query, refs, draws, rs);
            return score_trial(closed, mc);
        },
        seed);
}

SuiteResult lwr_suite(int trials, int draws, std::uint64_t seed, int threads) {
    return run_suite(
        trials, threads,
        [draws](RandomStream& rs) {
            const lwr::LwrState state = random_lwr_state(rs);
            const Vec query = scalar_vec(rs.uniform(0.0, 4.0));
            const std::vector<Vec> refs = random_refs(rs, 6, 0.0, 4.0);
            const double closed = lwr::expected_posterior_variance(state, query, refs);
            const McEstimate mc = lwr::mc_expected_variance(state, query, refs, draws, rs);
            return score_trial(closed, mc);
        },
        seed);
}

} // namespace actlearn::validate
