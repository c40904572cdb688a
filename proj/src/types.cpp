#include "actlearn/types.hpp"

#include <cmath>
#include <string>

namespace actlearn {

Dataset::Dataset(int d_x, int d_y) : d_x_(d_x), d_y_(d_y) {
    if (d_x < 1 || d_y < 1) {
        throw DataError("Dataset dimensions must be >= 1");
    }
}

void Dataset::add(Sample sample) {
    if (sample.input.size() != d_x_ || sample.output.size() != d_y_) {
        throw DataError("sample dimensions do not match dataset (d_x=" +
                        std::to_string(d_x_) + ", d_y=" + std::to_string(d_y_) + ")");
    }
    if (!sample.input.allFinite() || !sample.output.allFinite()) {
        throw DataError("sample contains non-finite entries");
    }
    samples_.push_back(std::move(sample));
}

Vec Dataset::joint(int i) const {
    const Sample& s = samples_[static_cast<std::size_t>(i)];
    Vec z(d_x_ + d_y_);
    z << s.input, s.output;
    return z;
}

void InputRegion::validate() const {
    if (lower.size() != upper.size() || lower.size() == 0) {
        throw ConfigError("region bounds must be non-empty vectors of equal length");
    }
    for (int d = 0; d < dim(); ++d) {
        if (!(lower[d] < upper[d])) {
            throw ConfigError("region has non-positive width in dimension " + std::to_string(d));
        }
        if (!std::isfinite(lower[d]) || !std::isfinite(upper[d])) {
            throw ConfigError("region bounds must be finite");
        }
    }
}

std::vector<Vec> draw_uniform(const InputRegion& region, int count, RandomStream& rng) {
    region.validate();
    if (count < 1) {
        throw PreconditionError("draw_uniform requires count >= 1");
    }
    std::vector<Vec> points;
    points.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Vec p(region.dim());
        for (int d = 0; d < region.dim(); ++d) {
            p[d] = rng.uniform(region.lower[d], region.upper[d]);
        }
        points.push_back(std::move(p));
    }
    return points;
}

InputRegion bounding_hypercube(const Dataset& data, double pad_zero_width) {
    if (data.m() < 1) {
        throw PreconditionError("bounding_hypercube requires at least one sample");
    }
    const int dim = data.d_x() + data.d_y();
    Vec lo = data.joint(0);
    Vec hi = lo;
    for (int i = 1; i < data.m(); ++i) {
        const Vec z = data.joint(i);
        lo = lo.cwiseMin(z);
        hi = hi.cwiseMax(z);
    }
    for (int d = 0; d < dim; ++d) {
        if (hi[d] <= lo[d]) {
            lo[d] -= pad_zero_width;
            hi[d] += pad_zero_width;
        }
    }
    return InputRegion{lo, hi};
}

InputStats input_stats_from_region(const InputRegion& region) {
    region.validate();
    const Vec w = region.width();
    return InputStats{region.midpoint(), w.cwiseProduct(w) / 12.0};
}

InputStats input_stats_from_pool(const std::vector<Vec>& points) {
    if (points.empty()) {
        throw PreconditionError("input_stats_from_pool requires a non-empty pool");
    }
    const int dim = static_cast<int>(points.front().size());
    Vec mean = Vec::Zero(dim);
    for (const Vec& p : points) mean += p;
    mean /= static_cast<double>(points.size());
    Vec var = Vec::Zero(dim);
    for (const Vec& p : points) {
        const Vec d = p - mean;
        var += d.cwiseProduct(d);
    }
    var /= static_cast<double>(points.size());
    return InputStats{std::move(mean), std::move(var)};
}

} // namespace actlearn
