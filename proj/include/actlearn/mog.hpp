#pragma once

#include <optional>
#include <string>
#include <vector>

#include "actlearn/types.hpp"

namespace actlearn::mog {

// One Gaussian over the joint (input, output) space.
struct GaussianComponent {
    Vec mean;       // length d_x + d_y
    Mat cov;        // joint covariance, SPD after flooring
    double support; // effective number of training points attributed to it
};

struct MogFitConfig {
    int n_components = 60;
    int em_iterations = 20;
    // floor on the eigenvalues of each covariance, relative to the squared
    // per-dimension data scale; keeps components from collapsing far below
    // the data spacing
    double variance_floor = 1e-3;
    bool correction_enabled = true;
    // reuse the previous model's components as the starting point instead of
    // a fresh random placement
    bool warm_start = false;
    // reference points drawn per fit when correcting against a uniform region
    int correction_pool_size = 256;
};

struct MixtureModel {
    int d_x = 0;
    int d_y = 0;
    std::vector<GaussianComponent> components;
    bool correction_enabled = false;
    std::optional<InputStats> reference_input_stats; // pool moments
    // per-component input marginals re-estimated from the reference pool;
    // these stand in for P(x|i) when the training inputs were chosen actively
    std::vector<InputStats> component_reference_stats;

    // diagnostics from the fit
    std::vector<double> log_likelihood_trace; // init + one entry per iteration
    bool floor_activated = false;

    int n_components() const { return static_cast<int>(components.size()); }
    double total_support() const;
};

// EM fit of `cfg.n_components` joint Gaussians. Means start uniform in the
// smallest hypercube containing the joint training vectors, covariances
// start at identity. When correction is enabled the E-step densities are
// reweighted per component by the ratio of its reference-based to its
// training-based input marginal, so the fitted density tracks the reference
// input distribution rather than the (possibly actively skewed) training
// one. `reference_pool` supplies the points standing in for that
// distribution; it must be non-empty when correcting.
MixtureModel em_fit(const Dataset& data, const MogFitConfig& cfg,
                    const std::vector<Vec>& reference_pool, RandomStream& rng,
                    const MixtureModel* warm_from = nullptr);

// Convenience overload: draws cfg.correction_pool_size reference points
// uniformly from the region when correction is enabled.
MixtureModel em_fit(const Dataset& data, const MogFitConfig& cfg,
                    const InputRegion& input_region, RandomStream& rng,
                    const MixtureModel* warm_from = nullptr);

// Immutable prediction/scoring view over a fitted model. Construction
// precomputes per-component factorizations; all methods are const and safe
// to call concurrently.
class Evaluator {
public:
    explicit Evaluator(const MixtureModel& model);
    ~Evaluator();
    Evaluator(Evaluator&&) noexcept;
    Evaluator& operator=(Evaluator&&) noexcept;
    Evaluator(const Evaluator&) = delete;
    Evaluator& operator=(const Evaluator&) = delete;

    const MixtureModel& model() const { return *model_; }

    // Input-marginal responsibilities: h_i >= 0, sum h_i = 1. If every
    // component's density underflows to zero the weights fall back to
    // uniform and *underflow is set.
    Vec responsibility(const Vec& x, bool* underflow = nullptr) const;

    PredictiveDistribution predict(const Vec& x) const;

    // Average over `refs` of the closed-form expected learner variance after
    // querying at `query`. Components whose responsibility at the query
    // underflows to zero keep their current statistics, so a fully remote
    // query returns the current average variance exactly.
    double expected_posterior_variance(const Vec& query, const std::vector<Vec>& refs) const;

    // Brute-force estimate of the same expectation: per component, draw the
    // query label from that component's predictive distribution, apply the
    // rank-one sufficient-statistic update with weight h_i(query), recompute
    // the learner variance over `refs`, and average across draws.
    McEstimate mc_expected_variance(const Vec& query, const std::vector<Vec>& refs,
                                    int n_draws, RandomStream& rng) const;

private:
    struct ComponentCache;
    double component_current_variance(int i, const Vec& x) const;
    Vec log_input_marginals(const Vec& x) const;

    const MixtureModel* model_;
    std::vector<ComponentCache> cache_;
    std::vector<int> active_; // indices with support above the dead threshold
};

// Free-function forms for one-shot use.
Vec responsibility(const MixtureModel& model, const Vec& x, bool* underflow = nullptr);
PredictiveDistribution predict(const MixtureModel& model, const Vec& x);
double expected_posterior_variance(const MixtureModel& model, const Vec& query,
                                   const std::vector<Vec>& refs);
McEstimate mc_expected_variance(const MixtureModel& model, const Vec& query,
                                const std::vector<Vec>& refs, int n_draws,
                                RandomStream& rng);

// Lossless JSON round-trip of a fitted model.
std::string to_json_string(const MixtureModel& model);
MixtureModel model_from_json_string(const std::string& text);

} // namespace actlearn::mog
