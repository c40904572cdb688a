#include "actlearn/selector.hpp"

#include <cmath>

namespace actlearn::selector {

std::vector<double> VarianceScorer::score_candidates(const std::vector<Vec>& candidates,
                                                     const std::vector<Vec>& refs) const {
    std::vector<double> scores;
    scores.reserve(candidates.size());
    for (const Vec& c : candidates) scores.push_back(expected_posterior_variance(c, refs));
    return scores;
}

SelectionResult select_query(const VarianceScorer& learner, const InputRegion& region,
                             const SelectionConfig& cfg, RandomStream& rng) {
    if (cfg.n_candidates < 1 || cfg.n_references < 1) {
        throw ConfigError("selection needs at least one candidate and one reference");
    }
    if (!learner.fitted()) throw StateError("select_query: learner is not fitted");

    if (cfg.strategy == Strategy::Random) {
        return SelectionResult{draw_uniform(region, 1, rng).front(), {}};
    }

    const std::vector<Vec> candidates = draw_uniform(region, cfg.n_candidates, rng);
    const std::vector<Vec> refs = draw_uniform(region, cfg.n_references, rng);
    const std::vector<double> values = learner.score_candidates(candidates, refs);

    SelectionResult result;
    result.scores.reserve(candidates.size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NumericalError("candidate score is not finite");
        }
        result.scores.push_back(QueryScore{candidates[i], values[i]});
        if (values[i] < values[best]) best = i; // strict: first index wins ties
    }
    result.query = candidates[best];
    return result;
}

} // namespace actlearn::selector
