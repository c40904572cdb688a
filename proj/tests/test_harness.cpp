#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "actlearn/harness.hpp"

using namespace actlearn;
using namespace actlearn::harness;

namespace {

ExperimentConfig tiny_mog_config() {
    ExperimentConfig cfg;
    cfg.learner = LearnerKind::Mog;
    cfg.strategy = selector::Strategy::VarianceMin;
    cfg.steps = 3;
    cfg.runs = 2;
    cfg.eval_points = 32;
    cfg.arm.noise_mode = arm2d::NoiseMode::InputGaussian;
    cfg.mog.n_components = 5;
    cfg.mog.em_iterations = 3;
    cfg.selection.n_candidates = 8;
    cfg.selection.n_references = 8;
    cfg.master_seed = 7;
    return cfg;
}

bool curves_identical(const LearningCurve& a, const LearningCurve& b) {
    if (a.per_run.size() != b.per_run.size()) return false;
    for (std::size_t r = 0; r < a.per_run.size(); ++r) {
        if (a.per_run[r].size() != b.per_run[r].size()) return false;
        for (std::size_t s = 0; s < a.per_run[r].size(); ++s) {
            if (a.per_run[r][s].m != b.per_run[r][s].m) return false;
            if (a.per_run[r][s].mse != b.per_run[r][s].mse) return false;
            if (a.per_run[r][s].avg_variance != b.per_run[r][s].avg_variance) return false;
        }
    }
    return true;
}

} // namespace

TEST_SUITE("harness") {

TEST_CASE("steps=0 records exactly the initial point") {
    ExperimentConfig cfg = tiny_mog_config();
    cfg.steps = 0;
    cfg.runs = 3;
    const LearningCurve curve = run_learning_curve(cfg);
    REQUIRE(curve.per_run.size() == 3);
    for (const auto& run : curve.per_run) {
        REQUIRE(run.size() == 1);
        CHECK(run[0].m == 1);
        CHECK(run[0].mse >= 0.0);
        CHECK(run[0].avg_variance >= 0.0);
    }
}

TEST_CASE("m increments by exactly one per step") {
    ExperimentConfig cfg = tiny_mog_config();
    const LearningCurve curve = run_learning_curve(cfg);
    for (const auto& run : curve.per_run) {
        REQUIRE(run.size() == static_cast<std::size_t>(cfg.steps) + 1);
        for (std::size_t s = 0; s < run.size(); ++s) {
            CHECK(run[s].m == static_cast<int>(s) + 1);
        }
    }
    // the final training set matches the recorded sizes and stays in-region
    const InputRegion region = cfg.arm.input_region();
    for (const auto& inputs : curve.training_inputs) {
        CHECK(inputs.size() == static_cast<std::size_t>(cfg.steps) + 1);
        for (const Vec& x : inputs) {
            for (int d = 0; d < 2; ++d) {
                CHECK(x[d] >= region.lower[d]);
                CHECK(x[d] <= region.upper[d]);
            }
        }
    }
}

TEST_CASE("identical master seeds reproduce the curve bit for bit") {
    ExperimentConfig cfg = tiny_mog_config();
    const LearningCurve a = run_learning_curve(cfg);
    const LearningCurve b = run_learning_curve(cfg);
    CHECK(curves_identical(a, b));

    cfg.master_seed = 8;
    const LearningCurve c = run_learning_curve(cfg);
    CHECK(!curves_identical(a, c));
}

TEST_CASE("aggregation matches direct statistics") {
    ExperimentConfig cfg = tiny_mog_config();
    cfg.runs = 4;
    const LearningCurve curve = run_learning_curve(cfg);
    for (std::size_t s = 0; s < curve.m.size(); ++s) {
        double mean = 0.0;
        for (const auto& run : curve.per_run) mean += run[s].mse;
        mean /= 4.0;
        double sd = 0.0;
        for (const auto& run : curve.per_run) sd += std::pow(run[s].mse - mean, 2);
        sd = std::sqrt(sd / 3.0); // sample standard deviation
        CHECK(curve.mse_mean[s] == doctest::Approx(mean).epsilon(1e-14));
        CHECK(curve.mse_se[s] == doctest::Approx(sd / 2.0).epsilon(1e-12));
    }
}

TEST_CASE("random sampling with the memory-based learner is consistent") {
    // noiseless benchmark; the error at m = 100 must beat the error at m = 10
    ExperimentConfig cfg;
    cfg.learner = LearnerKind::Lwr;
    cfg.strategy = selector::Strategy::Random;
    cfg.steps = 99;
    cfg.runs = 20;
    cfg.eval_points = 128;
    cfg.arm.noise_mode = arm2d::NoiseMode::None;
    cfg.master_seed = 11;
    const LearningCurve curve = run_learning_curve(cfg);
    const std::size_t at10 = 9, at100 = 99;
    REQUIRE(curve.m[at10] == 10);
    REQUIRE(curve.m[at100] == 100);
    CHECK(curve.mse_mean[at100] < curve.mse_mean[at10]);
}

TEST_CASE("comparison of identical curves is one") {
    ExperimentConfig cfg = tiny_mog_config();
    const LearningCurve curve = run_learning_curve(cfg);
    const CurveComparison cmp = compare_curves(curve, curve);
    for (double r : cmp.mse_ratio) CHECK(r == doctest::Approx(1.0));
    for (double r : cmp.var_ratio) CHECK(r == doctest::Approx(1.0));
}

TEST_CASE("comparison matches hand arithmetic on two-point curves") {
    LearningCurve a, b;
    a.m = {1, 2};
    a.mse_mean = {4.0, 2.0};
    a.mse_se = {0.4, 0.2};
    a.var_mean = {1.0, 1.0};
    a.var_se = {0.1, 0.1};
    b.m = {1, 2};
    b.mse_mean = {2.0, 2.0};
    b.mse_se = {0.2, 0.1};
    b.var_mean = {0.5, 4.0};
    b.var_se = {0.05, 0.4};
    const CurveComparison cmp = compare_curves(a, b);
    CHECK(cmp.mse_ratio[0] == doctest::Approx(2.0));
    CHECK(cmp.mse_ratio[1] == doctest::Approx(1.0));
    CHECK(cmp.var_ratio[0] == doctest::Approx(2.0));
    CHECK(cmp.var_ratio[1] == doctest::Approx(0.25));
    // delta method: ratio * sqrt((se_a/a)^2 + (se_b/b)^2)
    CHECK(cmp.mse_ratio_se[0] ==
          doctest::Approx(2.0 * std::sqrt(0.01 + 0.01)).epsilon(1e-12));
    CHECK(cmp.var_ratio_se[1] ==
          doctest::Approx(0.25 * std::sqrt(0.01 + 0.01)).epsilon(1e-12));

    LearningCurve c;
    c.m = {1, 2, 3};
    c.mse_mean = {1.0, 1.0, 1.0};
    c.mse_se = {0.1, 0.1, 0.1};
    c.var_mean = {1.0, 1.0, 1.0};
    c.var_se = {0.1, 0.1, 0.1};
    CHECK_THROWS_AS(compare_curves(a, c), ConfigError); // mismatched step grid
}

TEST_CASE("csv round trip preserves the aggregate exactly") {
    namespace fs = std::filesystem;
    ExperimentConfig cfg = tiny_mog_config();
    const LearningCurve curve = run_learning_curve(cfg);
    const fs::path dir = fs::temp_directory_path() / "actlearn_csv_test";
    fs::remove_all(dir);
    const std::string raw = (dir / "raw.csv").string();
    const std::string agg = (dir / "aggregate.csv").string();
    write_raw_csv(curve, raw);
    write_aggregate_csv(curve, agg);
    CHECK(!fs::exists(raw + ".tmp"));

    const AggregateCurve loaded = read_aggregate_csv(agg);
    const AggregateCurve direct = aggregate_of(curve);
    REQUIRE(loaded.m == direct.m);
    for (std::size_t s = 0; s < loaded.m.size(); ++s) {
        CHECK(loaded.mse_mean[s] == direct.mse_mean[s]); // shortest-round-trip text
        CHECK(loaded.mse_se[s] == direct.mse_se[s]);
        CHECK(loaded.var_mean[s] == direct.var_mean[s]);
        CHECK(loaded.var_se[s] == direct.var_se[s]);
    }
    CHECK_THROWS_AS(read_aggregate_csv(raw), DataError); // wrong header
    fs::remove_all(dir);
}

TEST_CASE("json config parsing applies fields and rejects unknown keys") {
    const ExperimentConfig cfg = config_from_json_string(R"({
        "learner": "lwr",
        "strategy": "random",
        "steps": 5,
        "runs": 2,
        "master_seed": 99,
        "arm": {"noise_mode": "output_gaussian", "noise_level": 0.05},
        "lwr": {"bandwidth_method": "fixed_support", "fixed_support_target": 12.5},
        "selection": {"n_candidates": 16, "n_references": 8}
    })");
    CHECK(cfg.learner == LearnerKind::Lwr);
    CHECK(cfg.strategy == selector::Strategy::Random);
    CHECK(cfg.steps == 5);
    CHECK(cfg.runs == 2);
    CHECK(cfg.master_seed == 99);
    CHECK(cfg.arm.noise_mode == arm2d::NoiseMode::OutputGaussian);
    CHECK(cfg.arm.noise_level == 0.05);
    CHECK(cfg.lwr.bandwidth_method == lwr::BandwidthMethod::FixedSupport);
    CHECK(cfg.lwr.fixed_support_target == 12.5);
    CHECK(cfg.selection.n_candidates == 16);

    CHECK_THROWS_AS(config_from_json_string("{\"step\": 3}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_string("{\"learner\": \"nn\"}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_string("not json"), ConfigError);
    CHECK_THROWS_AS(config_from_json_string("{\"steps\": -3}"), ConfigError);

    // defaults: runs resolves per learner
    ExperimentConfig defaults;
    CHECK(defaults.resolved_runs() == 10);
    defaults.learner = LearnerKind::Lwr;
    CHECK(defaults.resolved_runs() == 60);

    // round trip through the serializer
    const ExperimentConfig again = config_from_json_string(config_to_json_string(cfg));
    CHECK(again.learner == cfg.learner);
    CHECK(again.steps == cfg.steps);
    CHECK(again.lwr.fixed_support_target == cfg.lwr.fixed_support_target);
}

} // TEST_SUITE
