#pragma once

#include <Eigen/Dense>
#include <vector>

#include "actlearn/errors.hpp"
#include "actlearn/random.hpp"

namespace actlearn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One training pair: input vector (length d_x) and output vector (length d_y).
struct Sample {
    Vec input;
    Vec output;
};

// Ordered training collection with fixed dimensions. Samples are validated
// on insertion (matching dimensions, finite entries).
class Dataset {
public:
    Dataset(int d_x, int d_y);

    void add(Sample sample); // throws DataError on mismatch / non-finite

    int d_x() const { return d_x_; }
    int d_y() const { return d_y_; }
    int m() const { return static_cast<int>(samples_.size()); }
    const std::vector<Sample>& samples() const { return samples_; }
    const Sample& operator[](int i) const { return samples_[static_cast<std::size_t>(i)]; }

    Vec joint(int i) const; // stacked (x_i, y_i), length d_x + d_y

private:
    int d_x_;
    int d_y_;
    std::vector<Sample> samples_;
};

// Axis-aligned box. Used both for input regions (queries are drawn from it)
// and joint-space bounding boxes.
struct InputRegion {
    Vec lower;
    Vec upper;

    int dim() const { return static_cast<int>(lower.size()); }
    Vec width() const { return upper - lower; }
    Vec midpoint() const { return 0.5 * (lower + upper); }

    // throws ConfigError unless lower < upper componentwise
    void validate() const;
};

// Per-dimension mean/variance of an input pool; the stand-in for P(x)
// when correcting density estimates toward the reference distribution.
struct InputStats {
    Vec mean;
    Vec var;
};

// Predicted output mean, conditional output covariance, and the learner's
// estimated prediction variance (traced over output dimensions) at a point.
struct PredictiveDistribution {
    Vec mean;
    Mat cond_cov;
    double learner_variance = 0.0;
};

// Monte-Carlo estimate with its standard error.
struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

// `count` points uniform in the region. Deterministic given the stream state.
std::vector<Vec> draw_uniform(const InputRegion& region, int count, RandomStream& rng);

// Smallest axis-aligned box containing every joint vector (x_i, y_i).
// Zero-width dimensions are padded by +-pad_zero_width so the box is usable
// for sampling even at m = 1.
InputRegion bounding_hypercube(const Dataset& data, double pad_zero_width = 1.0);

InputStats input_stats_from_region(const InputRegion& region); // uniform box, analytic
InputStats input_stats_from_pool(const std::vector<Vec>& points);

} // namespace actlearn
