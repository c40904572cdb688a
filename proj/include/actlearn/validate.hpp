#pragma once

#include <cstdint>
#include <vector>

namespace actlearn::validate {

struct TrialResult {
    double closed_form;
    double mc_estimate;
    double mc_std_error;
    bool pass; // |closed_form - mc_estimate| <= 3 * mc_std_error
};

struct SuiteResult {
    std::vector<TrialResult> trials;
    int n_pass = 0;
};

// Randomized agreement checks between the closed-form expected posterior
// variance and its Monte-Carlo oracle, one-dimensional models throughout.
SuiteResult mog_suite(int trials, int draws, std::uint64_t seed, int threads = 0);
SuiteResult lwr_suite(int trials, int draws, std::uint64_t seed, int threads = 0);

} // namespace actlearn::validate
