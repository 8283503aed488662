#include <gtest/gtest.h>

#include "embedhom/errors.hpp"
#include "embedhom/experiment.hpp"

#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace embedhom;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigDir = EMBEDHOM_CONFIG_DIR;

const char* const kMinimal = R"(dim: 2
bounds: {alpha: 1, beta: 4}
field:
  kind: checkerboard
  seed: 3
  R: 2
  phases:
    - {value: 1, probability: 0.5}
    - {value: 4, probability: 0.5}
method: [energy_min, averaged]
discretization: {L: 2, h: 0.2}
)";

fs::path fresh_dir(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / ("embedhom_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& path)
{
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path)
{
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(cells);
    }
    return rows;
}

std::string config_error(const std::string& text)
{
    try {
        (void)parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string("\"") + EMBEDHOM_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const bool kQuiet = [] {
    spdlog::set_level(spdlog::level::warn);
    return true;
}();

} // namespace

TEST(Config, ParsesMinimalDocumentWithDefaults)
{
    const ExperimentConfig cfg = parse_config(kMinimal);
    EXPECT_EQ(cfg.dim, 2);
    EXPECT_EQ(cfg.field.kind, "checkerboard");
    EXPECT_EQ(cfg.field.seed, 3U);
    ASSERT_EQ(cfg.methods.size(), 2U);
    EXPECT_EQ(cfg.methods[1], Method::averaged);
    EXPECT_DOUBLE_EQ(cfg.disc.h, 0.2);
    EXPECT_DOUBLE_EQ(cfg.disc.cg_tol, 1e-10);
    EXPECT_FALSE(cfg.sweep.has_value());
    EXPECT_EQ(cfg.sha256.size(), 64U);
    const nlohmann::json j = to_json(cfg);
    EXPECT_EQ(j.at("field").at("kind"), "checkerboard");
    EXPECT_EQ(j.at("discretization").at("h"), 0.2);
}

TEST(Config, UnknownKeyReportsLine)
{
    const std::string msg = config_error(std::string(kMinimal) + "solver_flavour: fast\n");
    EXPECT_NE(msg.find("solver_flavour"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 12"), std::string::npos) << msg;
}

TEST(Config, RejectsTooSmallBox)
{
    std::string text = kMinimal;
    text.replace(text.find("L: 2"), 4, "L: 1");
    const std::string msg = config_error(text);
    EXPECT_NE(msg.find("L must be >= 2"), std::string::npos) << msg;
}

TEST(Config, RejectsInvertedBounds)
{
    std::string text = kMinimal;
    text.replace(text.find("alpha: 1, beta: 4"), 17, "alpha: 5, beta: 4");
    EXPECT_FALSE(config_error(text).empty());
}

TEST(Config, RejectsUnknownMethodAndFieldKind)
{
    std::string text = kMinimal;
    text.replace(text.find("averaged"), 8, "magic");
    EXPECT_NE(config_error(text).find("magic"), std::string::npos);
    text = kMinimal;
    text.replace(text.find("checkerboard"), 12, "fractal");
    EXPECT_NE(config_error(text).find("fractal"), std::string::npos);
}

TEST(Config, OverridesApplyAndChangeDigest)
{
    const ExperimentConfig base = parse_config(kMinimal);
    const ExperimentConfig cfg = parse_config(kMinimal, {"discretization.h=0.1", "field.seed=9", "method=all"});
    EXPECT_DOUBLE_EQ(cfg.disc.h, 0.1);
    EXPECT_EQ(cfg.field.seed, 9U);
    EXPECT_EQ(cfg.methods.size(), all_methods().size());
    EXPECT_NE(cfg.sha256, base.sha256);
    EXPECT_EQ(parse_config(kMinimal).sha256, base.sha256);
    EXPECT_THROW((void)parse_config(kMinimal, {"no_equals_sign"}), ConfigError);
}

TEST(Config, MatrixForms)
{
    std::string text = kMinimal;
    text.replace(text.find("method: [energy_min, averaged]"), 30,
                 "method: [naive]\nnaive: {exterior: {diag: [1.5, 3]}}");
    const ExperimentConfig cfg = parse_config(text);
    ASSERT_TRUE(cfg.naive_exterior.has_value());
    EXPECT_DOUBLE_EQ((*cfg.naive_exterior)(1, 1), 3.0);
    EXPECT_DOUBLE_EQ((*cfg.naive_exterior)(0, 1), 0.0);
}

TEST(Config, SweepExpansion)
{
    const ExperimentConfig cfg = load_config(kConfigDir / "checkerboard_R_sweep.yaml");
    const std::vector<ExperimentConfig> points = expand_sweep(cfg);
    ASSERT_EQ(points.size(), 4U);
    EXPECT_DOUBLE_EQ(points[2].field.R, 8.0);
    EXPECT_THROW((void)load_config(kConfigDir / "does_not_exist.yaml"), ConfigError);
}

TEST(Config, ShippedConfigsValidate)
{
    for (const auto& entry : fs::directory_iterator(kConfigDir)) {
        EXPECT_NO_THROW((void)load_config(entry.path())) << entry.path();
    }
}

TEST(Sha256, KnownDigests)
{
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Run, HomogeneousAllMethodsReturnTheField)
{
    const fs::path dir = fresh_dir("homogeneous");
    const ExperimentConfig cfg = load_config(kConfigDir / "homogeneous.yaml");
    const RunResult result = run_experiment(cfg, {1, dir});
    EXPECT_EQ(result.exit_code(), 0);
    ASSERT_EQ(result.outcomes.size(), 6U);
    for (const MethodOutcome& o : result.outcomes) {
        ASSERT_TRUE(o.report) << to_string(o.method);
        EXPECT_LT((o.report->matrix - 2.0 * identity(2)).norm(), 1e-8) << to_string(o.method);
        const nlohmann::json doc = nlohmann::json::parse(read_file(o.file));
        EXPECT_EQ(doc.at("status"), "ok");
        EXPECT_EQ(doc.at("provenance").at("config_sha256"), cfg.sha256);
        EXPECT_TRUE(doc.at("invariants").at("within_bounds").get<bool>());
    }
    const auto rows = read_csv(result.csv);
    ASSERT_EQ(rows.size(), 7U);
    EXPECT_EQ(rows[0].front(), "sweep_value");
    EXPECT_EQ(rows[0].back(), "wall_ms");
}

TEST(Run, OneDimHSweepErrorShrinks)
{
    const fs::path dir = fresh_dir("one_dim");
    const RunResult result = run_experiment(load_config(kConfigDir / "one_dim_h_sweep.yaml"), {2, dir});
    ASSERT_EQ(result.exit_code(), 0);
    std::map<Method, std::vector<double>> errors;
    for (const MethodOutcome& o : result.outcomes) {
        errors[o.method].push_back(std::abs(o.report->matrix(0, 0) - 1.6));
    }
    for (const auto& [method, e] : errors) {
        ASSERT_EQ(e.size(), 3U);
        EXPECT_GT(e[0], e[1]) << to_string(method);
        EXPECT_GT(e[1], e[2]) << to_string(method);
    }
}

TEST(Run, CheckerboardSweepProducesEightRows)
{
    const fs::path dir = fresh_dir("checkerboard");
    const ExperimentConfig cfg = load_config(kConfigDir / "checkerboard_R_sweep.yaml", {"discretization.h=0.1"});
    const RunResult result = run_experiment(cfg, {2, dir});
    EXPECT_EQ(result.exit_code(), 0);
    const auto rows = read_csv(result.csv);
    ASSERT_EQ(rows.size(), 9U);
    EXPECT_EQ(rows[1][0], "2");
    EXPECT_EQ(rows[8][1], "periodic_ref");
    EXPECT_TRUE(fs::exists(dir / "checkerboard_R_R-16_energy_min.json"));
}

TEST(Run, RerunIsDeterministic)
{
    const ExperimentConfig cfg = parse_config(kMinimal);
    const fs::path a = fresh_dir("det_a");
    const fs::path b = fresh_dir("det_b");
    const RunResult ra = run_experiment(cfg, {1, a});
    const RunResult rb = run_experiment(cfg, {3, b});
    auto ca = read_csv(ra.csv);
    auto cb = read_csv(rb.csv);
    for (auto* rows : {&ca, &cb}) {
        for (auto& row : *rows) {
            row.pop_back();
        }
    }
    EXPECT_EQ(ca, cb);
}

TEST(Run, SolverFailureIsRecorded)
{
    const fs::path dir = fresh_dir("failure");
    const ExperimentConfig cfg = parse_config(kMinimal, {"discretization.cg_max_iter=1"});
    const RunResult result = run_experiment(cfg, {1, dir});
    EXPECT_EQ(result.exit_code(), 3);
    const nlohmann::json doc = nlohmann::json::parse(read_file(result.outcomes.front().file));
    EXPECT_EQ(doc.at("status"), "failed");
    EXPECT_EQ(doc.at("flags").at(0), "solver_failure");
    EXPECT_FALSE(doc.at("error").get<std::string>().empty());
}

TEST(Cli, ExitCodes)
{
    const fs::path dir = fresh_dir("cli");
    const std::string cfg = (kConfigDir / "homogeneous.yaml").string();
    EXPECT_EQ(run_cli("validate \"" + cfg + "\""), 0);
    EXPECT_EQ(run_cli("validate \"" + cfg + "\" --override discretization.L=1"), 2);
    EXPECT_EQ(run_cli("validate \"" + (dir / "missing.yaml").string() + "\""), 2);
    EXPECT_EQ(run_cli("run \"" + cfg + "\" --out-dir \"" + dir.string() + "\""), 0);
    EXPECT_TRUE(fs::exists(dir / "homogeneous.csv"));
    const std::string checker = (kConfigDir / "checkerboard_R_sweep.yaml").string();
    EXPECT_EQ(run_cli("run \"" + checker + "\" --out-dir \"" + dir.string() +
                      "\" --override discretization.cg_max_iter=1 --override discretization.h=0.2"),
              3);
}
