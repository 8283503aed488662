#pragma once

#include "embedhom/coeff_fields.hpp"
#include "embedhom/effective_matrix.hpp"
#include "embedhom/mesh.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace embedhom {

/// Coefficient field description; only the keys of `kind` are meaningful.
struct FieldConfig {
    /// constant | checkerboard | laminate | inclusions | piecewise_1d
    std::string kind = "constant";
    std::uint64_t seed = 0;
    /// The field is evaluated as base(R x).
    double R = 1.0;
    SmallMatrix value;
    std::vector<WeightedValue> phases;
    SmallMatrix first;
    SmallMatrix second;
    int axis = 0;
    double period = 1.0;
    SmallMatrix exterior;
    double r_min = 0.0;
    double r_max = 0.0;
    std::vector<WeightedValue> interior;
    bool jitter = true;
    std::vector<double> breakpoints;
    std::vector<double> values;
};

struct SweepConfig {
    /// R | L | h | seed
    std::string parameter;
    std::vector<double> values;
};

struct ExperimentConfig {
    int dim = 2;
    EllipticityBounds bounds;
    FieldConfig field;
    std::vector<Method> methods;
    /// Exterior matrix for the naive estimator; the projected ball mean when absent.
    std::optional<SmallMatrix> naive_exterior;
    Discretization disc;
    bool warm_start = false;
    double rel1_threshold = 1e-6;
    Discretization periodic;
    /// False when periodic.h follows discretization.h (including under an h sweep).
    bool periodic_h_explicit = false;
    OptimizerOptions optimizer;
    FixedPointOptions fixed_point;
    BisectionOptions bisection;
    /// Allowed excursion of a reported spectrum outside [alpha, beta].
    double spectrum_tol = 2e-2;
    std::optional<SweepConfig> sweep;
    std::string out_dir = "results";
    std::string prefix = "run";
    /// SHA-256 of the config text and overrides.
    std::string sha256;
};

/// Parses YAML text. `overrides` are "dotted.key=value" strings applied before validation.
/// Throws ConfigError, with the offending line when known.
[[nodiscard]] ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides = {});

/// Reads and parses a config file; unreadable files raise ConfigError.
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path,
                                           const std::vector<std::string>& overrides = {});

/// Fully resolved configuration, defaults included.
[[nodiscard]] nlohmann::json to_json(const ExperimentConfig& config);

/// Field for one configuration (rescaling by field.R applied).
[[nodiscard]] CoefficientField build_field(const ExperimentConfig& config);

/// One configuration per sweep value, or the config itself when there is no sweep.
[[nodiscard]] std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& config);

[[nodiscard]] std::string sha256_hex(std::string_view data);

struct RunOptions {
    int jobs = 1;
    std::optional<std::filesystem::path> out_dir;
};

struct MethodOutcome {
    Method method = Method::energy_min;
    std::optional<double> sweep_value;
    /// Empty when the method failed.
    std::optional<EffectiveMatrixReport> report;
    std::string error;
    std::filesystem::path file;
};

struct RunResult {
    std::vector<MethodOutcome> outcomes;
    std::filesystem::path csv;
    [[nodiscard]] bool failed() const;
    /// 0 on success, 3 when any method failed.
    [[nodiscard]] int exit_code() const { return failed() ? 3 : 0; }
};

/// Runs every (sweep value, method) pair, writes one JSON report per pair and an aggregate CSV.
/// Solver failures are recorded in the outcome and its report rather than thrown.
[[nodiscard]] RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Report document for one outcome.
[[nodiscard]] nlohmann::json report_json(const ExperimentConfig& config, const MethodOutcome& outcome);

/// CSV header for a d-dimensional run.
[[nodiscard]] std::string csv_header(int dim);
[[nodiscard]] std::string csv_row(const MethodOutcome& outcome, int dim);

} // namespace embedhom
