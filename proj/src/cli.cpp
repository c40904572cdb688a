#include "actlearn/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "actlearn/harness.hpp"
#include "actlearn/validate.hpp"

namespace actlearn::cli {

namespace {

constexpr const char* kVersion = "actlearn 1.0.0";

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Applies one "dotted.path=value" override to a JSON document. The value is
// parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& doc, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("--set expects key=value, got: " + spec);
    }
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    nlohmann::json* node = &doc;
    std::size_t begin = 0;
    for (;;) {
        const std::size_t dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot - begin);
        if (key.empty()) throw ConfigError("--set has an empty key segment: " + spec);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        begin = dot + 1;
    }
}

int run_curve(const std::string& config_path, const std::string& out_dir,
              const std::vector<std::string>& overrides) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config JSON parse error: ") + e.what());
    }
    for (const std::string& o : overrides) apply_override(doc, o);
    const harness::ExperimentConfig cfg = harness::config_from_json_string(doc.dump());

    std::cout << "curve: learner=" << (cfg.learner == harness::LearnerKind::Mog ? "mog" : "lwr")
              << " strategy="
              << (cfg.strategy == selector::Strategy::VarianceMin ? "variance_min" : "random")
              << " runs=" << cfg.resolved_runs() << " steps=" << cfg.steps
              << " seed=" << cfg.master_seed << "\n";

    const harness::LearningCurve curve = harness::run_learning_curve(cfg);
    const std::string raw_path = out_dir + "/raw.csv";
    const std::string agg_path = out_dir + "/aggregate.csv";
    harness::write_raw_csv(curve, raw_path);
    harness::write_aggregate_csv(curve, agg_path);

    const std::size_t last = curve.m.size() - 1;
    std::cout << "final m=" << curve.m[last] << " mse=" << curve.mse_mean[last]
              << " avg_variance=" << curve.var_mean[last] << "\n";
    std::cout << "wrote " << raw_path << "\n";
    std::cout << "wrote " << agg_path << "\n";
    return 0;
}

int run_validate(const std::string& learner, int trials, int draws, std::uint64_t seed,
                 int threads) {
    validate::SuiteResult result;
    if (learner == "mog") {
        result = validate::mog_suite(trials, draws, seed, threads);
    } else if (learner == "lwr") {
        result = validate::lwr_suite(trials, draws, seed, threads);
    } else {
        throw ConfigError("--learner must be \"mog\" or \"lwr\"");
    }
    for (std::size_t i = 0; i < result.trials.size(); ++i) {
        const auto& t = result.trials[i];
        std::printf("trial %3zu: closed=%.6g mc=%.6g se=%.2g %s\n", i, t.closed_form,
                    t.mc_estimate, t.mc_std_error, t.pass ? "pass" : "FAIL");
    }
    const int required = static_cast<int>(std::ceil(0.95 * trials));
    std::printf("%d/%d trials within 3 standard errors (need %d)\n", result.n_pass, trials,
                required);
    return result.n_pass >= required ? 0 : 1;
}

int run_compare(const std::string& path_a, const std::string& path_b) {
    const harness::AggregateCurve a = harness::read_aggregate_csv(path_a);
    const harness::AggregateCurve b = harness::read_aggregate_csv(path_b);
    const harness::CurveComparison cmp = harness::compare_aggregates(a, b);
    std::printf("%6s %6s %12s %12s %12s %12s\n", "step", "m", "mse_ratio", "mse_se",
                "var_ratio", "var_se");
    for (std::size_t s = 0; s < cmp.m.size(); ++s) {
        std::printf("%6zu %6d %12.5g %12.5g %12.5g %12.5g\n", s, cmp.m[s], cmp.mse_ratio[s],
                    cmp.mse_ratio_se[s], cmp.var_ratio[s], cmp.var_ratio_se[s]);
    }
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"statistical active-learning experiments (mixture-of-Gaussians and "
                 "locally weighted regression on the two-link arm benchmark)"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(0, 1);

    // curve
    auto* curve = app.add_subcommand("curve", "run a learning-curve experiment");
    std::string config_path;
    std::string out_dir = ".";
    std::vector<std::string> overrides;
    curve->add_option("--config", config_path, "experiment config (JSON)")->required();
    curve->add_option("--out", out_dir, "output directory for raw.csv / aggregate.csv");
    curve->add_option("--set", overrides, "override a config key, e.g. --set runs=5");

    // validate
    auto* validate_cmd =
        app.add_subcommand("validate", "closed-form vs Monte-Carlo agreement suite");
    std::string learner = "mog";
    int trials = 100;
    int draws = 200000;
    std::uint64_t seed = 0;
    int threads = 0;
    validate_cmd->add_option("--learner", learner, "mog or lwr");
    validate_cmd->add_option("--trials", trials, "number of randomized trials")
        ->check(CLI::PositiveNumber);
    validate_cmd->add_option("--draws", draws, "Monte-Carlo draws per trial")
        ->check(CLI::PositiveNumber);
    validate_cmd->add_option("--seed", seed, "random seed");
    validate_cmd->add_option("--threads", threads, "worker threads (0 = all)");

    // compare
    auto* compare = app.add_subcommand("compare", "ratio table of two aggregate curves");
    std::string path_a, path_b;
    compare->add_option("curve_a", path_a, "aggregate CSV (numerator)")->required();
    compare->add_option("curve_b", path_b, "aggregate CSV (denominator)")->required();

    // version
    auto* version = app.add_subcommand("version", "print the version");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("actlearn");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        std::cout << kVersion << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (*curve) return run_curve(config_path, out_dir, overrides);
        if (*validate_cmd) return run_validate(learner, trials, draws, seed, threads);
        if (*compare) return run_compare(path_a, path_b);
        if (*version) {
            std::cout << kVersion << "\n";
            return 0;
        }
        std::cout << app.help();
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace actlearn::cli
