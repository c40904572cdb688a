#include "actlearn/harness.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "actlearn/parallel.hpp"

namespace actlearn::harness {

int ExperimentConfig::resolved_runs() const {
    if (runs > 0) return runs;
    return learner == LearnerKind::Mog ? 10 : 60;
}

void ExperimentConfig::validate() const {
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (runs < 0) throw ConfigError("runs must be >= 1 (or 0 for the learner default)");
    if (eval_points < 1) throw ConfigError("eval_points must be >= 1");
    arm.validate();
    if (mog.n_components < 1 || mog.em_iterations < 1 || mog.variance_floor <= 0.0) {
        throw ConfigError("invalid mixture fit configuration");
    }
    if (lwr.grid_points < 2) throw ConfigError("lwr.grid_points must be >= 2");
    if (selection.n_candidates < 1 || selection.n_references < 1) {
        throw ConfigError("selection counts must be >= 1");
    }
}

namespace {

class MogScorer final : public selector::VarianceScorer {
public:
    explicit MogScorer(const mog::Evaluator& ev) : ev_(&ev) {}
    bool fitted() const override { return true; }
    double expected_posterior_variance(const Vec& query,
                                       const std::vector<Vec>& refs) const override {
        return ev_->expected_posterior_variance(query, refs);
    }

private:
    const mog::Evaluator* ev_;
};

class LwrScorer final : public selector::VarianceScorer {
public:
    explicit LwrScorer(const lwr::LwrState& state) : state_(&state) {}
    bool fitted() const override { return state_->m() >= 1; }
    double expected_posterior_variance(const Vec& query,
                                       const std::vector<Vec>& refs) const override {
        return lwr::expected_posterior_variance(*state_, query, refs);
    }
    std::vector<double> score_candidates(const std::vector<Vec>& candidates,
                                         const std::vector<Vec>& refs) const override {
        return lwr::expected_posterior_variance_batch(*state_, candidates, refs);
    }

private:
    const lwr::LwrState* state_;
};

class AdaptiveLwrScorer final : public selector::VarianceScorer {
public:
    explicit AdaptiveLwrScorer(const lwr::AdaptiveLwr& learner) : learner_(&learner) {}
    bool fitted() const override { return learner_->m() >= 1; }
    double expected_posterior_variance(const Vec& query,
                                       const std::vector<Vec>& refs) const override {
        return learner_->expected_posterior_variance(query, refs);
    }
    std::vector<double> score_candidates(const std::vector<Vec>& candidates,
                                         const std::vector<Vec>& refs) const override {
        return learner_->score_candidates(candidates, refs);
    }

private:
    const lwr::AdaptiveLwr* learner_;
};

struct EvalResult {
    double mse;
    double avg_variance;
};

template <typename PredictFn>
EvalResult evaluate(const ExperimentConfig& cfg, const std::vector<Vec>& points,
                    PredictFn&& predict_at) {
    double mse = 0.0;
    double var = 0.0;
    for (const Vec& x : points) {
        const PredictiveDistribution p = predict_at(x);
        const Vec truth = arm2d::forward_kinematics(cfg.arm, x);
        mse += (p.mean - truth).squaredNorm();
        var += p.learner_variance;
    }
    const double count = static_cast<double>(points.size());
    return EvalResult{mse / count, var / count};
}

std::vector<CurvePoint> run_single(const ExperimentConfig& cfg, int run,
                                   std::vector<Vec>& training_inputs) {
    RandomStream rs = RandomStream(cfg.master_seed).substream(static_cast<std::uint64_t>(run));
    const InputRegion region = cfg.arm.input_region();
    selector::SelectionConfig sel = cfg.selection;
    sel.strategy = cfg.strategy;

    Dataset data(2, 2);
    {
        const Vec x0 = draw_uniform(region, 1, rs).front();
        data.add(Sample{x0, arm2d::oracle_query(cfg.arm, x0, rs)});
    }

    std::vector<CurvePoint> curve;
    curve.reserve(static_cast<std::size_t>(cfg.steps) + 1);
    mog::MixtureModel prev_model;
    int step = 0;
    try {
        for (step = 0; step <= cfg.steps; ++step) {
            Vec query;
            if (cfg.learner == LearnerKind::Mog) {
                const mog::MixtureModel model =
                    em_fit(data, cfg.mog, region, rs,
                           (cfg.mog.warm_start && step > 0) ? &prev_model : nullptr);
                const mog::Evaluator ev(model);
                const std::vector<Vec> eval_pts = draw_uniform(region, cfg.eval_points, rs);
                const EvalResult e =
                    evaluate(cfg, eval_pts, [&](const Vec& x) { return ev.predict(x); });
                curve.push_back(CurvePoint{data.m(), e.mse, e.avg_variance});
                if (step == cfg.steps) break;
                query = selector::select_query(MogScorer(ev), region, sel, rs).query;
                if (cfg.mog.warm_start) prev_model = model;
            } else if (cfg.lwr.per_reference &&
                       cfg.lwr.bandwidth_method == lwr::BandwidthMethod::VarianceMin) {
                const lwr::AdaptiveLwr learner(
                    data, lwr::region_bandwidth_grid(region, cfg.lwr.grid_points));
                const std::vector<Vec> eval_pts = draw_uniform(region, cfg.eval_points, rs);
                const EvalResult e = evaluate(
                    cfg, eval_pts, [&](const Vec& x) { return learner.predict(x); });
                curve.push_back(CurvePoint{data.m(), e.mse, e.avg_variance});
                if (step == cfg.steps) break;
                query = selector::select_query(AdaptiveLwrScorer(learner), region, sel, rs).query;
            } else {
                const std::vector<double> grid =
                    lwr::region_bandwidth_grid(region, cfg.lwr.grid_points);
                const std::vector<Vec> bw_refs = draw_uniform(region, sel.n_references, rs);
                double k = grid.front();
                if (!(cfg.lwr.bandwidth_method == lwr::BandwidthMethod::CrossValidation &&
                      data.m() < 2)) {
                    k = lwr::select_bandwidth(data, bw_refs, cfg.lwr.bandwidth_method, grid,
                                              cfg.lwr.fixed_support_target);
                }
                const lwr::LwrState state(data, k);
                const std::vector<Vec> eval_pts = draw_uniform(region, cfg.eval_points, rs);
                const EvalResult e = evaluate(
                    cfg, eval_pts, [&](const Vec& x) { return lwr::predict(state, x); });
                curve.push_back(CurvePoint{data.m(), e.mse, e.avg_variance});
                if (step == cfg.steps) break;
                query = selector::select_query(LwrScorer(state), region, sel, rs).query;
            }
            data.add(Sample{query, arm2d::oracle_query(cfg.arm, query, rs)});
        }
    } catch (const std::exception& e) {
        throw std::runtime_error("run " + std::to_string(run) + ", step " +
                                 std::to_string(step) + ": " + e.what());
    }

    training_inputs.clear();
    training_inputs.reserve(static_cast<std::size_t>(data.m()));
    for (int i = 0; i < data.m(); ++i) training_inputs.push_back(data[i].input);
    return curve;
}

void aggregate(LearningCurve& curve) {
    const std::size_t n_runs = curve.per_run.size();
    const std::size_t n_steps = curve.per_run.front().size();
    curve.m.resize(n_steps);
    curve.mse_mean.assign(n_steps, 0.0);
    curve.mse_se.assign(n_steps, 0.0);
    curve.var_mean.assign(n_steps, 0.0);
    curve.var_se.assign(n_steps, 0.0);
    for (std::size_t s = 0; s < n_steps; ++s) {
        curve.m[s] = curve.per_run.front()[s].m;
        double mse_sum = 0.0, var_sum = 0.0;
        for (const auto& run : curve.per_run) {
            mse_sum += run[s].mse;
            var_sum += run[s].avg_variance;
        }
        const double mse_mean = mse_sum / static_cast<double>(n_runs);
        const double var_mean = var_sum / static_cast<double>(n_runs);
        double mse_sq = 0.0, var_sq = 0.0;
        for (const auto& run : curve.per_run) {
            mse_sq += (run[s].mse - mse_mean) * (run[s].mse - mse_mean);
            var_sq += (run[s].avg_variance - var_mean) * (run[s].avg_variance - var_mean);
        }
        curve.mse_mean[s] = mse_mean;
        curve.var_mean[s] = var_mean;
        if (n_runs > 1) {
            const double denom = static_cast<double>(n_runs - 1) * static_cast<double>(n_runs);
            curve.mse_se[s] = std::sqrt(mse_sq / denom);
            curve.var_se[s] = std::sqrt(var_sq / denom);
        }
    }
}

} // namespace

LearningCurve run_learning_curve(const ExperimentConfig& cfg) {
    cfg.validate();
    const int runs = cfg.resolved_runs();
    LearningCurve curve;
    curve.per_run.resize(static_cast<std::size_t>(runs));
    curve.training_inputs.resize(static_cast<std::size_t>(runs));
    parallel_for(
        static_cast<std::size_t>(runs),
        [&](std::size_t run) {
            curve.per_run[run] =
                run_single(cfg, static_cast<int>(run), curve.training_inputs[run]);
        },
        cfg.threads);
    aggregate(curve);
    return curve;
}

AggregateCurve aggregate_of(const LearningCurve& curve) {
    AggregateCurve agg;
    const std::size_t n = curve.m.size();
    if (curve.mse_mean.size() != n || curve.mse_se.size() != n ||
        curve.var_mean.size() != n || curve.var_se.size() != n) {
        throw ConfigError("curve is missing aggregate statistics");
    }
    for (std::size_t s = 0; s < n; ++s) {
        agg.step.push_back(static_cast<int>(s));
        agg.m.push_back(curve.m[s]);
        agg.mse_mean.push_back(curve.mse_mean[s]);
        agg.mse_se.push_back(curve.mse_se[s]);
        agg.var_mean.push_back(curve.var_mean[s]);
        agg.var_se.push_back(curve.var_se[s]);
    }
    return agg;
}

CurveComparison compare_aggregates(const AggregateCurve& a, const AggregateCurve& b) {
    if (a.m != b.m) throw ConfigError("curves do not share a step grid");
    CurveComparison cmp;
    cmp.m = a.m;
    const std::size_t n = a.m.size();
    for (std::size_t s = 0; s < n; ++s) {
        const double mr = a.mse_mean[s] / b.mse_mean[s];
        const double vr = a.var_mean[s] / b.var_mean[s];
        cmp.mse_ratio.push_back(mr);
        cmp.var_ratio.push_back(vr);
        // delta method for the ratio of independent means
        const double mse_rel = std::sqrt(
            std::pow(a.mse_se[s] / a.mse_mean[s], 2) + std::pow(b.mse_se[s] / b.mse_mean[s], 2));
        const double var_rel = std::sqrt(
            std::pow(a.var_se[s] / a.var_mean[s], 2) + std::pow(b.var_se[s] / b.var_mean[s], 2));
        cmp.mse_ratio_se.push_back(std::abs(mr) * mse_rel);
        cmp.var_ratio_se.push_back(std::abs(vr) * var_rel);
    }
    return cmp;
}

CurveComparison compare_curves(const LearningCurve& a, const LearningCurve& b) {
    return compare_aggregates(aggregate_of(a), aggregate_of(b));
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v); // shortest round-trip
    return std::string(buf, res.ptr);
}

void write_atomically(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw ConfigError("cannot open " + tmp.string() + " for writing");
        out << contents;
        if (!out.good()) throw ConfigError("write failed: " + tmp.string());
    }
    fs::rename(tmp, target);
}

} // namespace

void write_raw_csv(const LearningCurve& curve, const std::string& path) {
    std::string out = "run,step,m,mse,avg_variance\n";
    for (std::size_t run = 0; run < curve.per_run.size(); ++run) {
        for (std::size_t s = 0; s < curve.per_run[run].size(); ++s) {
            const CurvePoint& p = curve.per_run[run][s];
            out += std::to_string(run) + ',' + std::to_string(s) + ',' + std::to_string(p.m) +
                   ',' + format_double(p.mse) + ',' + format_double(p.avg_variance) + '\n';
        }
    }
    write_atomically(path, out);
}

void write_aggregate_csv(const LearningCurve& curve, const std::string& path) {
    std::string out = "step,m,mse_mean,mse_se,var_mean,var_se\n";
    for (std::size_t s = 0; s < curve.m.size(); ++s) {
        out += std::to_string(s) + ',' + std::to_string(curve.m[s]) + ',' +
               format_double(curve.mse_mean[s]) + ',' + format_double(curve.mse_se[s]) + ',' +
               format_double(curve.var_mean[s]) + ',' + format_double(curve.var_se[s]) + '\n';
    }
    write_atomically(path, out);
}

AggregateCurve read_aggregate_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "step,m,mse_mean,mse_se,var_mean,var_se") {
        throw DataError(path + ": not an aggregate curve CSV");
    }
    AggregateCurve agg;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream row(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(row, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.size() != 6) throw DataError(path + ": malformed row: " + line);
        agg.step.push_back(static_cast<int>(vals[0]));
        agg.m.push_back(static_cast<int>(vals[1]));
        agg.mse_mean.push_back(vals[2]);
        agg.mse_se.push_back(vals[3]);
        agg.var_mean.push_back(vals[4]);
        agg.var_se.push_back(vals[5]);
    }
    if (agg.m.empty()) throw DataError(path + ": no data rows");
    return agg;
}

// ---------------------------------------------------------------------------
// JSON configuration
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& where, const std::string& key) {
    throw ConfigError("unknown key \"" + key + "\" in " + where);
}

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : allowed) {
            if (item.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) bad_key(where, item.key());
    }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

LearnerKind learner_from_string(const std::string& s) {
    if (s == "mog") return LearnerKind::Mog;
    if (s == "lwr") return LearnerKind::Lwr;
    throw ConfigError("learner must be \"mog\" or \"lwr\"");
}

selector::Strategy strategy_from_string(const std::string& s) {
    if (s == "variance_min") return selector::Strategy::VarianceMin;
    if (s == "random") return selector::Strategy::Random;
    throw ConfigError("strategy must be \"variance_min\" or \"random\"");
}

arm2d::NoiseMode noise_from_string(const std::string& s) {
    if (s == "none") return arm2d::NoiseMode::None;
    if (s == "output_gaussian") return arm2d::NoiseMode::OutputGaussian;
    if (s == "input_gaussian") return arm2d::NoiseMode::InputGaussian;
    throw ConfigError("noise_mode must be \"none\", \"output_gaussian\" or \"input_gaussian\"");
}

lwr::BandwidthMethod bandwidth_from_string(const std::string& s) {
    if (s == "variance_min") return lwr::BandwidthMethod::VarianceMin;
    if (s == "fixed_support") return lwr::BandwidthMethod::FixedSupport;
    if (s == "cross_validation") return lwr::BandwidthMethod::CrossValidation;
    throw ConfigError(
        "bandwidth_method must be \"variance_min\", \"fixed_support\" or \"cross_validation\"");
}

std::string to_string(LearnerKind k) { return k == LearnerKind::Mog ? "mog" : "lwr"; }
std::string to_string(selector::Strategy s) {
    return s == selector::Strategy::VarianceMin ? "variance_min" : "random";
}
std::string to_string(arm2d::NoiseMode m) {
    switch (m) {
    case arm2d::NoiseMode::None: return "none";
    case arm2d::NoiseMode::OutputGaussian: return "output_gaussian";
    case arm2d::NoiseMode::InputGaussian: return "input_gaussian";
    }
    return "none";
}
std::string to_string(lwr::BandwidthMethod m) {
    switch (m) {
    case lwr::BandwidthMethod::VarianceMin: return "variance_min";
    case lwr::BandwidthMethod::FixedSupport: return "fixed_support";
    case lwr::BandwidthMethod::CrossValidation: return "cross_validation";
    }
    return "variance_min";
}

} // namespace

ExperimentConfig config_from_json_string(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config JSON parse error: ") + e.what());
    }
    try {
        check_keys(j, "config",
                   {"learner", "strategy", "steps", "runs", "eval_points", "arm", "mog", "lwr",
                    "selection", "master_seed", "threads"});
        ExperimentConfig cfg;
        if (j.contains("learner")) cfg.learner = learner_from_string(j.at("learner"));
        if (j.contains("strategy")) cfg.strategy = strategy_from_string(j.at("strategy"));
        maybe(j, "steps", cfg.steps);
        maybe(j, "runs", cfg.runs);
        maybe(j, "eval_points", cfg.eval_points);
        maybe(j, "master_seed", cfg.master_seed);
        maybe(j, "threads", cfg.threads);
        if (j.contains("arm")) {
            const json& ja = j.at("arm");
            check_keys(ja, "arm",
                       {"link_lengths", "joint_ranges", "noise_mode", "noise_level"});
            if (ja.contains("link_lengths")) {
                cfg.arm.l1 = ja.at("link_lengths").at(0).get<double>();
                cfg.arm.l2 = ja.at("link_lengths").at(1).get<double>();
            }
            if (ja.contains("joint_ranges")) {
                for (std::size_t joint = 0; joint < 2; ++joint) {
                    cfg.arm.joint_ranges[joint][0] =
                        ja.at("joint_ranges").at(joint).at(0).get<double>();
                    cfg.arm.joint_ranges[joint][1] =
                        ja.at("joint_ranges").at(joint).at(1).get<double>();
                }
            }
            if (ja.contains("noise_mode")) cfg.arm.noise_mode = noise_from_string(ja.at("noise_mode"));
            maybe(ja, "noise_level", cfg.arm.noise_level);
        }
        if (j.contains("mog")) {
            const json& jm = j.at("mog");
            check_keys(jm, "mog",
                       {"n_components", "em_iterations", "variance_floor", "correction_enabled",
                        "warm_start"});
            maybe(jm, "n_components", cfg.mog.n_components);
            maybe(jm, "em_iterations", cfg.mog.em_iterations);
            maybe(jm, "variance_floor", cfg.mog.variance_floor);
            maybe(jm, "correction_enabled", cfg.mog.correction_enabled);
            maybe(jm, "warm_start", cfg.mog.warm_start);
        }
        if (j.contains("lwr")) {
            const json& jl = j.at("lwr");
            check_keys(jl, "lwr",
                       {"bandwidth_method", "grid_points", "fixed_support_target",
                        "per_reference"});
            if (jl.contains("bandwidth_method")) {
                cfg.lwr.bandwidth_method = bandwidth_from_string(jl.at("bandwidth_method"));
            }
            maybe(jl, "grid_points", cfg.lwr.grid_points);
            maybe(jl, "fixed_support_target", cfg.lwr.fixed_support_target);
            maybe(jl, "per_reference", cfg.lwr.per_reference);
        }
        if (j.contains("selection")) {
            const json& js = j.at("selection");
            check_keys(js, "selection", {"n_candidates", "n_references"});
            maybe(js, "n_candidates", cfg.selection.n_candidates);
            maybe(js, "n_references", cfg.selection.n_references);
        }
        cfg.validate();
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config JSON is malformed: ") + e.what());
    }
}

std::string config_to_json_string(const ExperimentConfig& cfg) {
    json j;
    j["learner"] = to_string(cfg.learner);
    j["strategy"] = to_string(cfg.strategy);
    j["steps"] = cfg.steps;
    j["runs"] = cfg.runs;
    j["eval_points"] = cfg.eval_points;
    j["master_seed"] = cfg.master_seed;
    j["threads"] = cfg.threads;
    j["arm"] = {
        {"link_lengths", {cfg.arm.l1, cfg.arm.l2}},
        {"joint_ranges",
         {{cfg.arm.joint_ranges[0][0], cfg.arm.joint_ranges[0][1]},
          {cfg.arm.joint_ranges[1][0], cfg.arm.joint_ranges[1][1]}}},
        {"noise_mode", to_string(cfg.arm.noise_mode)},
        {"noise_level", cfg.arm.noise_level},
    };
    j["mog"] = {
        {"n_components", cfg.mog.n_components},
        {"em_iterations", cfg.mog.em_iterations},
        {"variance_floor", cfg.mog.variance_floor},
        {"correction_enabled", cfg.mog.correction_enabled},
        {"warm_start", cfg.mog.warm_start},
    };
    j["lwr"] = {
        {"bandwidth_method", to_string(cfg.lwr.bandwidth_method)},
        {"grid_points", cfg.lwr.grid_points},
        {"fixed_support_target", cfg.lwr.fixed_support_target},
        {"per_reference", cfg.lwr.per_reference},
    };
    j["selection"] = {
        {"n_candidates", cfg.selection.n_candidates},
        {"n_references", cfg.selection.n_references},
    };
    return j.dump(2);
}

} // namespace actlearn::harness
