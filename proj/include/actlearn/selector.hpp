#pragma once

#include <vector>

#include "actlearn/types.hpp"

namespace actlearn::selector {

enum class Strategy { VarianceMin, Random };

struct SelectionConfig {
    int n_candidates = 64;
    int n_references = 64;
    Strategy strategy = Strategy::VarianceMin;
};

struct QueryScore {
    Vec candidate;
    double expected_variance;
};

// What a learner must expose to drive query selection. Implementations must
// be usable read-only from several evaluation contexts at once.
class VarianceScorer {
public:
    virtual ~VarianceScorer() = default;
    virtual bool fitted() const = 0;
    virtual double expected_posterior_variance(const Vec& query,
                                               const std::vector<Vec>& refs) const = 0;
    // batch hook so learners with shared per-reference work can reuse it
    virtual std::vector<double> score_candidates(const std::vector<Vec>& candidates,
                                                 const std::vector<Vec>& refs) const;
};

struct SelectionResult {
    Vec query;
    std::vector<QueryScore> scores; // empty for the random strategy
};

// Random strategy: one uniform draw. VarianceMin: draws fresh candidate and
// reference sets, scores every candidate, returns the argmin (first index
// wins ties) together with all scores.
SelectionResult select_query(const VarianceScorer& learner, const InputRegion& region,
                             const SelectionConfig& cfg, RandomStream& rng);

} // namespace actlearn::selector
