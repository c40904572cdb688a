#include "actlearn/arm2d.hpp"

#include <cmath>
#include <iostream>

namespace actlearn::arm2d {

InputRegion ArmConfig::input_region() const {
    Vec lo(2), hi(2);
    lo << joint_ranges[0][0], joint_ranges[1][0];
    hi << joint_ranges[0][1], joint_ranges[1][1];
    return InputRegion{lo, hi};
}

void ArmConfig::validate() const {
    if (l1 <= 0.0 || l2 <= 0.0) throw ConfigError("arm link lengths must be positive");
    if (noise_level < 0.0) throw ConfigError("arm noise_level must be >= 0");
    input_region().validate();
}

Vec forward_kinematics(const ArmConfig& cfg, const Vec& theta) {
    if (theta.size() != 2 || !theta.allFinite()) {
        throw DataError("forward_kinematics expects two finite joint angles");
    }
    const double t1 = theta[0];
    const double t12 = theta[0] + theta[1];
    Vec tip(2);
    tip << cfg.l1 * std::cos(t1) + cfg.l2 * std::cos(t12),
        cfg.l1 * std::sin(t1) + cfg.l2 * std::sin(t12);
    return tip;
}

Vec oracle_query(const ArmConfig& cfg, const Vec& theta, RandomStream& rng) {
    if (theta.size() != 2 || !theta.allFinite()) {
        throw DataError("oracle_query expects two finite joint angles");
    }
    Vec t = theta;
    bool clamped = false;
    for (int j = 0; j < 2; ++j) {
        const double lo = cfg.joint_ranges[static_cast<std::size_t>(j)][0];
        const double hi = cfg.joint_ranges[static_cast<std::size_t>(j)][1];
        if (t[j] < lo || t[j] > hi) {
            t[j] = std::clamp(t[j], lo, hi);
            clamped = true;
        }
    }
    if (clamped) {
        std::cerr << "arm2d: query outside joint ranges, clamped\n";
    }

    switch (cfg.noise_mode) {
    case NoiseMode::None:
        return forward_kinematics(cfg, t);
    case NoiseMode::OutputGaussian: {
        Vec y = forward_kinematics(cfg, t);
        const double sd = cfg.noise_level * cfg.output_span();
        for (int d = 0; d < 2; ++d) y[d] += rng.normal(0.0, sd);
        return y;
    }
    case NoiseMode::InputGaussian: {
        Vec tn = t;
        for (int j = 0; j < 2; ++j) {
            const double width = cfg.joint_ranges[static_cast<std::size_t>(j)][1] -
                                 cfg.joint_ranges[static_cast<std::size_t>(j)][0];
            tn[j] += rng.normal(0.0, cfg.noise_level * width);
        }
        return forward_kinematics(cfg, tn);
    }
    }
    throw ConfigError("unknown noise mode");
}

} // namespace actlearn::arm2d
