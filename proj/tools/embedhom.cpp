#include "embedhom/errors.hpp"
#include "embedhom/experiment.hpp"

#include "CLI11.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("embedhom");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* env = std::getenv("EMBEDHOM_LOG")) {
        const std::string level(env);
        if (level == "error" || level == "warn" || level == "info" || level == "debug") {
            spdlog::set_level(spdlog::level::from_str(level));
        } else {
            spdlog::warn("ignoring EMBEDHOM_LOG={} (expected error, warn, info or debug)", level);
        }
    }
}

} // namespace

int main(int argc, char** argv)
{
    setup_logging();

    CLI::App app{"Effective matrices of random media from embedded corrector problems"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    int jobs = 1;
    std::string out_dir;

    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config_path, "YAML config file")->required();
    run->add_option("--jobs,-j", jobs, "Sweep points solved concurrently")->check(CLI::PositiveNumber);
    run->add_option("--out-dir", out_dir, "Directory for reports (overrides output.dir)");
    run->add_option("--override", overrides, "key=value with a dotted key, e.g. discretization.h=0.02")
        ->allow_extra_args(false);

    auto* validate = app.add_subcommand("validate", "Check a config file and print the resolved settings");
    validate->add_option("config", config_path, "YAML config file")->required();
    validate->add_option("--override", overrides, "key=value with a dotted key")->allow_extra_args(false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kExitConfig;
    }

    embedhom::ExperimentConfig config;
    try {
        config = embedhom::load_config(config_path, overrides);
    } catch (const embedhom::ConfigError& e) {
        std::cerr << config_path << ": " << e.what() << "\n";
        return kExitConfig;
    }

    if (*validate) {
        std::cout << embedhom::to_json(config).dump(2) << "\n";
        std::cerr << config_path << ": 0 diagnostics\n";
        return 0;
    }

    embedhom::RunOptions options;
    options.jobs = jobs;
    if (!out_dir.empty()) {
        options.out_dir = out_dir;
    }
    try {
        const embedhom::RunResult result = embedhom::run_experiment(config, options);
        for (const auto& outcome : result.outcomes) {
            if (!outcome.report) {
                std::cerr << "failed: " << embedhom::to_string(outcome.method) << ": " << outcome.error << "\n";
            }
        }
        std::cout << result.csv.string() << "\n";
        return result.exit_code();
    } catch (const embedhom::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
}
