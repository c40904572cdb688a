#pragma once

#include <vector>

#include "actlearn/types.hpp"

namespace actlearn::lwr {

enum class BandwidthMethod { FixedSupport, CrossValidation, VarianceMin };

// Kernel weights and weighted moments around one evaluation point, computed
// in a single call over the stored columns. The h^2 sums are kept raw
// (uncentered) so they can be re-centered algebraically around the shifted
// mean a candidate query induces, instead of rescanning the data.
struct LocalFit {
    Vec center;
    std::vector<double> weights; // h_i = exp(-k ||x - x_i||^2)
    double n = 0.0;              // sum h_i
    bool empty = false;          // all weights underflowed

    Vec mu_x, mu_y;
    Mat cov_x;  // d_x x d_x
    Mat cov_xy; // d_x x d_y
    Mat cov_y;  // d_y x d_y

    double s2 = 0.0; // sum h_i^2
    Vec s2x;         // sum h_i^2 x_i
    Mat s2xx;        // sum h_i^2 x_i x_i^T
};

// Memory-based learner state: the retained samples plus the smoothing
// parameter k. Immutable; adding a sample produces a new state.
class LwrState {
public:
    LwrState(Dataset data, double k);

    double k() const { return k_; }
    const Dataset& data() const { return data_; }
    int m() const { return data_.m(); }
    int d_x() const { return data_.d_x(); }
    int d_y() const { return data_.d_y(); }

    const std::vector<double>& x_col(int d) const { return x_cols_[static_cast<std::size_t>(d)]; }
    const std::vector<double>& y_col(int t) const { return y_cols_[static_cast<std::size_t>(t)]; }

    // unweighted output statistics; the variance scale of last resort when a
    // local fit has too little support to estimate its own
    const Vec& global_y_mean() const { return global_y_mean_; }
    const Vec& global_y_var() const { return global_y_var_; }

    LwrState with_k(double k) const;

private:
    friend LwrState add_sample(const LwrState& state, const Sample& sample);
    friend McEstimate mc_expected_variance(const LwrState& state, const Vec& query,
                                           const std::vector<Vec>& refs, int n_draws,
                                           RandomStream& rng);
    void refresh_global_stats();

    Dataset data_;
    double k_;
    std::vector<std::vector<double>> x_cols_, y_cols_; // column layout for the kernels
    Vec global_y_mean_, global_y_var_;
};

LwrState add_sample(const LwrState& state, const Sample& sample);

// Weights and moments for the kernel centered at x. `skip` (if >= 0) zeroes
// one sample's weight; used by leave-one-out cross-validation.
LocalFit kernel_weights(const LwrState& state, const Vec& x, int skip = -1);

PredictiveDistribution predict(const LwrState& state, const Vec& x);
PredictiveDistribution predict(const LwrState& state, const LocalFit& fit);

// Log-spaced k grid spanning [1e-2, 1e4] divided by the mean squared
// pairwise input distance.
std::vector<double> default_bandwidth_grid(const Dataset& data, int points = 30);

// Same grid, but scaled by the mean squared distance of inputs drawn from
// the region (2 * sum of per-dimension variances). Stable across training
// sets, so actively clustered designs cannot drag the grid toward locality.
std::vector<double> region_bandwidth_grid(const InputRegion& region, int points = 30);

// Grid search for k. VarianceMin minimizes the mean estimated prediction
// variance over `refs`; FixedSupport matches the mean total weight to
// `fixed_support_target`; CrossValidation minimizes leave-one-out squared
// error on the training set. Ties resolve to the smallest k.
double select_bandwidth(const Dataset& data, const std::vector<Vec>& refs,
                        BandwidthMethod method, const std::vector<double>& grid,
                        double fixed_support_target = 20.0);

// Average over `refs` of the closed-form expected learner variance after
// querying at `query`. For each reference the kernel (and hence every
// moment) is centered at that reference; the predictive distribution of the
// query label comes from predict(state, query).
double expected_posterior_variance(const LwrState& state, const Vec& query,
                                   const std::vector<Vec>& refs);

// Scores many candidates against a shared reference set, computing each
// reference's moments once and reusing the cached h^2 sums per candidate.
std::vector<double> expected_posterior_variance_batch(const LwrState& state,
                                                      const std::vector<Vec>& candidates,
                                                      const std::vector<Vec>& refs);

// Brute-force estimate: draw the query label from the predictive
// distribution, append the sample, recompute the prediction variance at the
// references from scratch, average over draws.
McEstimate mc_expected_variance(const LwrState& state, const Vec& query,
                                const std::vector<Vec>& refs, int n_draws,
                                RandomStream& rng);

// Per-point bandwidth variant: every prediction or reference re-selects the
// k from the grid that minimizes the estimated variance at that point, so
// sparsely covered regions get wide kernels (and honestly large variances)
// while dense regions stay local.
class AdaptiveLwr {
public:
    AdaptiveLwr(Dataset data, std::vector<double> grid);

    const Dataset& data() const { return states_.front().data(); }
    int m() const { return states_.front().m(); }

    // smallest grid k on ties, matching select_bandwidth
    double bandwidth_at(const Vec& x) const;
    PredictiveDistribution predict(const Vec& x) const;
    double expected_posterior_variance(const Vec& query, const std::vector<Vec>& refs) const;
    std::vector<double> score_candidates(const std::vector<Vec>& candidates,
                                         const std::vector<Vec>& refs) const;

private:
    struct PointFit; // chosen k, local fit, current variance
    PointFit fit_at(const Vec& x) const;
    std::vector<LwrState> states_; // one per grid value, shared data
};

} // namespace actlearn::lwr
