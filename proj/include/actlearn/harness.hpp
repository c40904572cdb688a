#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "actlearn/arm2d.hpp"
#include "actlearn/lwr.hpp"
#include "actlearn/mog.hpp"
#include "actlearn/selector.hpp"
#include "actlearn/types.hpp"

namespace actlearn::harness {

enum class LearnerKind { Mog, Lwr };

struct LwrConfig {
    lwr::BandwidthMethod bandwidth_method = lwr::BandwidthMethod::VarianceMin;
    int grid_points = 30;
    double fixed_support_target = 20.0;
    // variance-min k per evaluation/reference point instead of one global k;
    // sparsely covered regions then report honestly wide uncertainty
    bool per_reference = false;
};

struct ExperimentConfig {
    LearnerKind learner = LearnerKind::Mog;
    selector::Strategy strategy = selector::Strategy::VarianceMin;
    int steps = 99;   // queries per run; the curve has steps+1 points (m = 1..steps+1)
    int runs = 0;     // 0 = learner default (10 for Mog, 60 for Lwr)
    int eval_points = 256;
    arm2d::ArmConfig arm;
    mog::MogFitConfig mog;
    LwrConfig lwr;
    selector::SelectionConfig selection;
    std::uint64_t master_seed = 0;
    int threads = 0; // 0 = hardware concurrency

    int resolved_runs() const;
    void validate() const;
};

struct CurvePoint {
    int m;
    double mse;          // against the noise-free kinematics, fresh eval set
    double avg_variance; // mean estimated learner variance on the same set
};

struct LearningCurve {
    std::vector<std::vector<CurvePoint>> per_run;
    // aggregated over runs, one entry per step
    std::vector<int> m;
    std::vector<double> mse_mean, mse_se, var_mean, var_se;
    // final training inputs per run (diagnostics; lets tests check isolation)
    std::vector<std::vector<Vec>> training_inputs;
};

LearningCurve run_learning_curve(const ExperimentConfig& cfg);

struct CurveComparison {
    std::vector<int> m;
    std::vector<double> mse_ratio, mse_ratio_se; // a over b, delta-method SE
    std::vector<double> var_ratio, var_ratio_se;
};

CurveComparison compare_curves(const LearningCurve& a, const LearningCurve& b);

// Aggregate rows as stored in the aggregate CSV.
struct AggregateCurve {
    std::vector<int> step, m;
    std::vector<double> mse_mean, mse_se, var_mean, var_se;
};

AggregateCurve aggregate_of(const LearningCurve& curve);
CurveComparison compare_aggregates(const AggregateCurve& a, const AggregateCurve& b);

// CSV schemas: raw has one row per (run, step); aggregate one row per step.
// Written atomically (temp file + rename), full double precision.
void write_raw_csv(const LearningCurve& curve, const std::string& path);
void write_aggregate_csv(const LearningCurve& curve, const std::string& path);
AggregateCurve read_aggregate_csv(const std::string& path);

// Experiment configuration as a JSON document mirroring ExperimentConfig
// field names. Missing keys keep their defaults.
ExperimentConfig config_from_json_string(const std::string& text);
std::string config_to_json_string(const ExperimentConfig& cfg);

} // namespace actlearn::harness
