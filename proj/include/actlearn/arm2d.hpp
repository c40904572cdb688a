#pragma once

#include <array>
#include <numbers>

#include "actlearn/types.hpp"

namespace actlearn::arm2d {

enum class NoiseMode { None, OutputGaussian, InputGaussian };

// Two-link planar arm. Inputs are joint angles, outputs the Cartesian tip
// position. Noise levels are fractions of the relevant range so the setting
// is scale-free.
struct ArmConfig {
    double l1 = 1.0;
    double l2 = 1.0;
    std::array<std::array<double, 2>, 2> joint_ranges{
        {{0.0, std::numbers::pi}, {0.0, std::numbers::pi}}};
    NoiseMode noise_mode = NoiseMode::None;
    double noise_level = 0.01;

    InputRegion input_region() const;
    double output_span() const { return l1 + l2 - std::abs(l1 - l2); }
    void validate() const; // throws ConfigError
};

// X1 = l1 cos(t1) + l2 cos(t1 + t2);  X2 = l1 sin(t1) + l2 sin(t1 + t2)
Vec forward_kinematics(const ArmConfig& cfg, const Vec& theta);

// Labels a query according to the configured noise mode. Queries outside the
// joint ranges are clamped (with a warning on stderr). Input noise perturbs
// the angles before evaluating the kinematics, so output errors are
// non-Gaussian; it is not clamped.
Vec oracle_query(const ArmConfig& cfg, const Vec& theta, RandomStream& rng);

} // namespace actlearn::arm2d
