#include "embedhom/experiment.hpp"

#include "embedhom/errors.hpp"
#include "embedhom/parallel.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>

#ifndef EMBEDHOM_VERSION
#define EMBEDHOM_VERSION "unknown"
#endif

namespace embedhom {

namespace {

using nlohmann::json;

int line_of(const YAML::Node& node)
{
    const YAML::Mark mark = node.Mark();
    return mark.is_null() ? 0 : mark.line + 1;
}

[[noreturn]] void fail(const YAML::Node& node, const std::string& message)
{
    throw ConfigError(message, line_of(node));
}

void check_keys(const YAML::Node& map, const std::string& where, std::initializer_list<std::string_view> allowed)
{
    if (!map.IsMap()) {
        fail(map, where + " must be a mapping");
    }
    for (const auto& kv : map) {
        const auto key = kv.first.as<std::string>();
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(kv.first, "unknown key '" + key + "' in " + where);
        }
    }
}

template <class T>
T scalar(const YAML::Node& node, const std::string& name)
{
    if (!node.IsScalar()) {
        fail(node, name + " must be a scalar");
    }
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        fail(node, name + " has an invalid value '" + node.Scalar() + "'");
    }
}

template <class T>
T optional_scalar(const YAML::Node& map, const char* key, T fallback, const std::string& where)
{
    const YAML::Node node = map[key];
    if (!node) {
        return fallback;
    }
    return scalar<T>(node, where + "." + key);
}

double finite(const YAML::Node& node, const std::string& name)
{
    const auto v = scalar<double>(node, name);
    if (!std::isfinite(v)) {
        fail(node, name + " must be finite");
    }
    return v;
}

std::vector<double> number_list(const YAML::Node& node, const std::string& name)
{
    if (!node.IsSequence()) {
        fail(node, name + " must be a list of numbers");
    }
    std::vector<double> out;
    for (const auto& item : node) {
        out.push_back(finite(item, name));
    }
    return out;
}

/// scalar c -> c I; [[..], [..]] -> rows; {diag: [..]} -> diagonal matrix.
SmallMatrix matrix_value(const YAML::Node& node, int dim, const std::string& name)
{
    if (node.IsScalar()) {
        return finite(node, name) * identity(dim);
    }
    if (node.IsMap()) {
        check_keys(node, name, {"diag"});
        const auto diag = number_list(node["diag"], name + ".diag");
        if (static_cast<int>(diag.size()) != dim) {
            fail(node, name + ".diag needs " + std::to_string(dim) + " entries");
        }
        SmallMatrix m = SmallMatrix::Zero(dim, dim);
        for (int i = 0; i < dim; ++i) {
            m(i, i) = diag[static_cast<std::size_t>(i)];
        }
        return m;
    }
    if (node.IsSequence() && static_cast<int>(node.size()) == dim) {
        SmallMatrix m(dim, dim);
        for (int r = 0; r < dim; ++r) {
            const auto row = number_list(node[r], name);
            if (static_cast<int>(row.size()) != dim) {
                fail(node[r], name + " rows need " + std::to_string(dim) + " entries");
            }
            for (int c = 0; c < dim; ++c) {
                m(r, c) = row[static_cast<std::size_t>(c)];
            }
        }
        return m;
    }
    fail(node, name + " must be a number, a list of " + std::to_string(dim) + " rows, or {diag: [...]}");
}

SmallMatrix admissible_value(const YAML::Node& node, int dim, const EllipticityBounds& bounds,
                             const std::string& name)
{
    SmallMatrix m = matrix_value(node, dim, name);
    try {
        check_admissible(m, bounds);
    } catch (const InvalidCoefficientError& e) {
        fail(node, name + ": " + e.what());
    }
    return m;
}

std::vector<WeightedValue> weighted_values(const YAML::Node& node, int dim, const EllipticityBounds& bounds,
                                           const std::string& name)
{
    if (!node || !node.IsSequence() || node.size() == 0) {
        fail(node, name + " must be a non-empty list of {value, probability}");
    }
    std::vector<WeightedValue> out;
    double total = 0.0;
    for (const auto& item : node) {
        check_keys(item, name + " entry", {"value", "probability"});
        if (!item["value"]) {
            fail(item, name + " entry needs a value");
        }
        WeightedValue wv;
        wv.value = admissible_value(item["value"], dim, bounds, name + ".value");
        wv.probability = optional_scalar<double>(item, "probability", 1.0 / static_cast<double>(node.size()),
                                                 name + " entry");
        if (!(wv.probability >= 0.0)) {
            fail(item, name + ": probabilities must be non-negative");
        }
        total += wv.probability;
        out.push_back(std::move(wv));
    }
    if (std::abs(total - 1.0) > 1e-12) {
        fail(node, name + ": probabilities must sum to 1 (got " + fmt::format("{}", total) + ")");
    }
    return out;
}

const YAML::Node& require(const YAML::Node& map, const char* key, const std::string& where, YAML::Node& slot)
{
    slot.reset(map[key]);
    if (!slot) {
        fail(map, where + " requires key '" + key + "'");
    }
    return slot;
}

FieldConfig parse_field(const YAML::Node& node, int dim, const EllipticityBounds& bounds)
{
    if (!node) {
        throw ConfigError("missing required section 'field'");
    }
    check_keys(node, "field",
               {"kind", "seed", "R", "value", "phases", "values", "axis", "period", "exterior", "radius",
                "interior", "jitter", "breakpoints"});
    FieldConfig f;
    YAML::Node slot;
    f.kind = scalar<std::string>(require(node, "kind", "field", slot), "field.kind");
    f.seed = optional_scalar<std::uint64_t>(node, "seed", 0, "field");
    f.R = optional_scalar<double>(node, "R", 1.0, "field");
    if (!(f.R > 0.0) || !std::isfinite(f.R)) {
        fail(node["R"], "field.R must be positive");
    }

    auto reject_unused = [&](std::initializer_list<const char*> used) {
        for (const auto& kv : node) {
            const auto key = kv.first.as<std::string>();
            if (key == "kind" || key == "seed" || key == "R") {
                continue;
            }
            if (std::none_of(used.begin(), used.end(), [&](const char* u) { return key == u; })) {
                fail(kv.first, "key '" + key + "' does not apply to field kind '" + f.kind + "'");
            }
        }
    };

    if (f.kind == "constant") {
        reject_unused({"value"});
        f.value = admissible_value(require(node, "value", "field", slot), dim, bounds, "field.value");
    } else if (f.kind == "checkerboard") {
        reject_unused({"phases"});
        f.phases = weighted_values(require(node, "phases", "field", slot), dim, bounds, "field.phases");
    } else if (f.kind == "laminate") {
        reject_unused({"values", "axis", "period"});
        const YAML::Node& values = require(node, "values", "field", slot);
        if (!values.IsSequence() || values.size() != 2) {
            fail(values, "field.values must list exactly two phases for a laminate");
        }
        f.first = admissible_value(values[0], dim, bounds, "field.values[0]");
        f.second = admissible_value(values[1], dim, bounds, "field.values[1]");
        f.axis = optional_scalar<int>(node, "axis", 0, "field");
        if (f.axis < 0 || f.axis >= dim) {
            fail(node["axis"], "field.axis must lie in [0, dim)");
        }
        f.period = optional_scalar<double>(node, "period", 1.0, "field");
        if (!(f.period > 0.0)) {
            fail(node["period"], "field.period must be positive");
        }
    } else if (f.kind == "inclusions") {
        reject_unused({"exterior", "radius", "interior", "jitter"});
        f.exterior = admissible_value(require(node, "exterior", "field", slot), dim, bounds, "field.exterior");
        const YAML::Node& radius = require(node, "radius", "field", slot);
        if (radius.IsScalar()) {
            f.r_min = f.r_max = finite(radius, "field.radius");
        } else {
            const auto r = number_list(radius, "field.radius");
            if (r.size() != 2) {
                fail(radius, "field.radius must be a number or [r_min, r_max]");
            }
            f.r_min = r[0];
            f.r_max = r[1];
        }
        if (!(f.r_min >= 0.0 && f.r_min <= f.r_max)) {
            fail(radius, "field.radius needs 0 <= r_min <= r_max");
        }
        if (!(f.r_max < 0.5)) {
            fail(radius, "field.radius: r_max must be < 1/2 so that inclusions stay disjoint");
        }
        f.interior = weighted_values(require(node, "interior", "field", slot), dim, bounds, "field.interior");
        f.jitter = optional_scalar<bool>(node, "jitter", true, "field");
    } else if (f.kind == "piecewise_1d") {
        reject_unused({"breakpoints", "values"});
        if (dim != 1) {
            fail(node["kind"], "field kind 'piecewise_1d' requires dim: 1");
        }
        f.breakpoints = number_list(require(node, "breakpoints", "field", slot), "field.breakpoints");
        const YAML::Node& values = require(node, "values", "field", slot);
        f.values = number_list(values, "field.values");
        if (f.values.size() != f.breakpoints.size() + 1) {
            fail(values, "field.values needs exactly one more entry than field.breakpoints");
        }
        for (std::size_t i = 0; i < f.breakpoints.size(); ++i) {
            if (!(f.breakpoints[i] > -1.0 && f.breakpoints[i] < 1.0) ||
                (i > 0 && !(f.breakpoints[i] > f.breakpoints[i - 1]))) {
                fail(node["breakpoints"], "field.breakpoints must be strictly increasing inside (-1, 1)");
            }
        }
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            try {
                check_admissible(SmallMatrix::Constant(1, 1, f.values[i]), bounds);
            } catch (const InvalidCoefficientError& e) {
                fail(values[i], std::string("field.values: ") + e.what());
            }
        }
    } else {
        fail(node["kind"], "unknown field kind '" + f.kind +
                               "' (expected constant, checkerboard, laminate, inclusions or piecewise_1d)");
    }
    return f;
}

std::vector<Method> parse_methods(const YAML::Node& node)
{
    if (!node) {
        return all_methods();
    }
    std::vector<std::string> names;
    if (node.IsScalar()) {
        names.push_back(node.Scalar());
    } else if (node.IsSequence()) {
        for (const auto& item : node) {
            names.push_back(scalar<std::string>(item, "method"));
        }
    } else {
        fail(node, "method must be a name or a list of names");
    }
    std::vector<Method> out;
    for (const auto& name : names) {
        std::vector<Method> add;
        if (name == "all") {
            add = all_methods();
        } else {
            try {
                add.push_back(method_from_string(name));
            } catch (const std::invalid_argument&) {
                fail(node, "unknown method '" + name +
                               "' (expected naive, energy_min, averaged, self_consistent, "
                               "self_consistent_scalar, periodic_ref or all)");
            }
        }
        for (const Method m : add) {
            if (std::find(out.begin(), out.end(), m) == out.end()) {
                out.push_back(m);
            }
        }
    }
    if (out.empty()) {
        fail(node, "method list is empty");
    }
    return out;
}

void parse_discretization(const YAML::Node& node, ExperimentConfig& cfg)
{
    cfg.disc.dim = cfg.dim;
    if (!node) {
        return;
    }
    const std::string where = "discretization";
    check_keys(node, where,
               {"L", "h", "quad_order", "cg_tol", "cg_max_iter", "max_vertices", "warm_start", "rel1_threshold"});
    cfg.disc.L = optional_scalar<double>(node, "L", cfg.disc.L, where);
    cfg.disc.h = optional_scalar<double>(node, "h", cfg.disc.h, where);
    cfg.disc.quad_order = optional_scalar<int>(node, "quad_order", cfg.disc.quad_order, where);
    cfg.disc.cg_tol = optional_scalar<double>(node, "cg_tol", cfg.disc.cg_tol, where);
    cfg.disc.cg_max_iter = optional_scalar<int>(node, "cg_max_iter", cfg.disc.cg_max_iter, where);
    cfg.disc.max_vertices = optional_scalar<std::size_t>(node, "max_vertices", cfg.disc.max_vertices, where);
    cfg.warm_start = optional_scalar<bool>(node, "warm_start", cfg.warm_start, where);
    cfg.rel1_threshold = optional_scalar<double>(node, "rel1_threshold", cfg.rel1_threshold, where);
    if (!(cfg.rel1_threshold > 0.0)) {
        fail(node["rel1_threshold"], "discretization.rel1_threshold must be positive");
    }
}

void parse_periodic(const YAML::Node& node, ExperimentConfig& cfg)
{
    cfg.periodic = cfg.disc;
    if (!node) {
        return;
    }
    const std::string where = "periodic";
    check_keys(node, where, {"h", "quad_order", "cg_tol", "cg_max_iter"});
    cfg.periodic_h_explicit = static_cast<bool>(node["h"]);
    cfg.periodic.h = optional_scalar<double>(node, "h", cfg.periodic.h, where);
    cfg.periodic.quad_order = optional_scalar<int>(node, "quad_order", cfg.periodic.quad_order, where);
    cfg.periodic.cg_tol = optional_scalar<double>(node, "cg_tol", cfg.periodic.cg_tol, where);
    cfg.periodic.cg_max_iter = optional_scalar<int>(node, "cg_max_iter", cfg.periodic.cg_max_iter, where);
}

void parse_solver_options(const YAML::Node& root, ExperimentConfig& cfg)
{
    if (const YAML::Node node = root["optimizer"]) {
        const std::string where = "optimizer";
        check_keys(node, where,
                   {"max_iters", "grad_tol", "initial_step", "backtrack", "armijo", "max_backtracks", "fd_check",
                    "fd_step"});
        auto& o = cfg.optimizer;
        o.max_iters = optional_scalar<int>(node, "max_iters", o.max_iters, where);
        o.grad_tol = optional_scalar<double>(node, "grad_tol", o.grad_tol, where);
        o.initial_step = optional_scalar<double>(node, "initial_step", o.initial_step, where);
        o.backtrack = optional_scalar<double>(node, "backtrack", o.backtrack, where);
        o.armijo = optional_scalar<double>(node, "armijo", o.armijo, where);
        o.max_backtracks = optional_scalar<int>(node, "max_backtracks", o.max_backtracks, where);
        o.fd_check = optional_scalar<bool>(node, "fd_check", o.fd_check, where);
        o.fd_step = optional_scalar<double>(node, "fd_step", o.fd_step, where);
        try {
            o.validate();
        } catch (const std::invalid_argument& e) {
            fail(node, e.what());
        }
    }
    if (const YAML::Node node = root["fixed_point"]) {
        const std::string where = "fixed_point";
        check_keys(node, where, {"damping", "max_iters", "tol", "initial", "identity_scale", "guess"});
        auto& o = cfg.fixed_point;
        o.damping = optional_scalar<double>(node, "damping", o.damping, where);
        o.max_iters = optional_scalar<int>(node, "max_iters", o.max_iters, where);
        o.tol = optional_scalar<double>(node, "tol", o.tol, where);
        o.identity_scale = optional_scalar<double>(node, "identity_scale", o.identity_scale, where);
        if (const YAML::Node initial = node["initial"]) {
            try {
                o.initial = initial_guess_from_string(scalar<std::string>(initial, "fixed_point.initial"));
            } catch (const std::invalid_argument& e) {
                fail(initial, e.what());
            }
        }
        if (const YAML::Node guess = node["guess"]) {
            o.user_guess = admissible_value(guess, cfg.dim, cfg.bounds, "fixed_point.guess");
        }
        if (o.initial == InitialGuess::user && o.user_guess.size() == 0) {
            fail(node, "fixed_point.initial: user requires fixed_point.guess");
        }
        try {
            o.validate();
        } catch (const std::invalid_argument& e) {
            fail(node, e.what());
        }
    }
    if (const YAML::Node node = root["bisection"]) {
        const std::string where = "bisection";
        check_keys(node, where, {"tol", "max_iters", "bracket_tol"});
        auto& o = cfg.bisection;
        o.tol = optional_scalar<double>(node, "tol", o.tol, where);
        o.max_iters = optional_scalar<int>(node, "max_iters", o.max_iters, where);
        o.bracket_tol = optional_scalar<double>(node, "bracket_tol", o.bracket_tol, where);
        try {
            o.validate();
        } catch (const std::invalid_argument& e) {
            fail(node, e.what());
        }
    }
}

std::optional<SweepConfig> parse_sweep(const YAML::Node& node)
{
    if (!node) {
        return std::nullopt;
    }
    check_keys(node, "sweep", {"parameter", "values"});
    YAML::Node slot;
    SweepConfig s;
    s.parameter = scalar<std::string>(require(node, "parameter", "sweep", slot), "sweep.parameter");
    if (s.parameter != "R" && s.parameter != "L" && s.parameter != "h" && s.parameter != "seed") {
        fail(node["parameter"], "sweep.parameter must be one of R, L, h, seed");
    }
    const YAML::Node& values = require(node, "values", "sweep", slot);
    s.values = number_list(values, "sweep.values");
    if (s.values.empty()) {
        fail(values, "sweep.values must not be empty");
    }
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        const double v = s.values[i];
        const bool ok = s.parameter == "seed" ? (v >= 0.0 && v == std::floor(v) && v < 1.8e19) : v > 0.0;
        if (!ok) {
            fail(values[i], s.parameter == "seed" ? "sweep seeds must be non-negative integers"
                                                  : "sweep values must be positive");
        }
    }
    return s;
}

void apply_override(YAML::Node& root, const std::string& item)
{
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + item + "' must have the form key=value");
    }
    const std::string path = item.substr(0, eq);
    YAML::Node value;
    try {
        value = YAML::Load(item.substr(eq + 1));
    } catch (const YAML::Exception& e) {
        throw ConfigError("override '" + item + "': " + e.msg);
    }
    std::vector<std::string> keys;
    std::stringstream ss(path);
    for (std::string key; std::getline(ss, key, '.');) {
        if (key.empty()) {
            throw ConfigError("override '" + item + "' has an empty key segment");
        }
        keys.push_back(key);
    }
    YAML::Node cur = root;
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (cur[keys[i]] && !cur[keys[i]].IsMap()) {
            throw ConfigError("override '" + item + "': '" + keys[i] + "' is not a section");
        }
        if (!cur[keys[i]]) {
            cur[keys[i]] = YAML::Node(YAML::NodeType::Map);
        }
        YAML::Node next = cur[keys[i]];
        cur.reset(next);
    }
    cur[keys.back()] = value;
}

/// Checks that can only be made once the whole config is known.
void validate_cross_fields(const ExperimentConfig& cfg)
{
    for (const ExperimentConfig& point : expand_sweep(cfg)) {
        try {
            point.disc.validate();
            point.periodic.validate();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        const auto n = static_cast<double>(point.disc.cells_per_side()) + 1.0;
        if (std::pow(n, point.dim) > static_cast<double>(point.disc.max_vertices)) {
            throw ConfigError(fmt::format("discretization: L = {}, h = {} needs {:.0f} vertices, above "
                                          "max_vertices = {}",
                                          point.disc.L, point.disc.h, std::pow(n, point.dim),
                                          point.disc.max_vertices));
        }
        if (point.periodic.h > 0.5) {
            throw ConfigError("periodic.h must be at most 1/2");
        }
    }
    const bool scalar_method = std::find(cfg.methods.begin(), cfg.methods.end(), Method::self_consistent_scalar) !=
                               cfg.methods.end();
    if (scalar_method && !(cfg.bounds.alpha() < cfg.bounds.beta())) {
        throw ConfigError("method self_consistent_scalar needs alpha < beta");
    }
    try {
        (void)build_field(cfg);
    } catch (const Error& e) {
        throw ConfigError(std::string("field: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("field: ") + e.what());
    }
}

json matrix_json(const SmallMatrix& m)
{
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) {
            row.push_back(m(r, c));
        }
        rows.push_back(row);
    }
    return rows;
}

json disc_json(const Discretization& d)
{
    return {{"dim", d.dim},
            {"L", d.L},
            {"h", d.h},
            {"cells_per_side", d.cells_per_side()},
            {"quad_order", d.quad_order},
            {"cg_tol", d.cg_tol},
            {"cg_max_iter", d.cg_max_iter},
            {"max_vertices", d.max_vertices}};
}

json weighted_json(const std::vector<WeightedValue>& values)
{
    json out = json::array();
    for (const auto& wv : values) {
        out.push_back({{"value", matrix_json(wv.value)}, {"probability", wv.probability}});
    }
    return out;
}

std::string format_value(double v)
{
    return fmt::format("{}", v);
}

} // namespace

ExperimentConfig parse_config(std::string_view text, const std::vector<std::string>& overrides)
{
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::ParserException& e) {
        throw ConfigError(e.msg, e.mark.is_null() ? 0 : e.mark.line + 1);
    }
    if (!root || root.IsNull()) {
        root = YAML::Node(YAML::NodeType::Map);
    }
    if (!root.IsMap()) {
        throw ConfigError("config must be a mapping", line_of(root));
    }
    for (const auto& item : overrides) {
        apply_override(root, item);
    }
    check_keys(root, "config",
               {"dim", "bounds", "field", "method", "naive", "discretization", "periodic", "optimizer",
                "fixed_point", "bisection", "sweep", "output", "spectrum_tol"});

    ExperimentConfig cfg;
    YAML::Node slot;
    cfg.dim = scalar<int>(require(root, "dim", "config", slot), "dim");
    if (cfg.dim != 1 && cfg.dim != 2) {
        fail(root["dim"], "dim must be 1 or 2");
    }
    const YAML::Node& bounds = require(root, "bounds", "config", slot);
    check_keys(bounds, "bounds", {"alpha", "beta"});
    {
        YAML::Node b;
        const double alpha = finite(require(bounds, "alpha", "bounds", b), "bounds.alpha");
        const double beta = finite(require(bounds, "beta", "bounds", b), "bounds.beta");
        try {
            cfg.bounds = EllipticityBounds(alpha, beta);
        } catch (const std::invalid_argument& e) {
            fail(bounds, std::string("bounds: ") + e.what());
        }
    }
    cfg.field = parse_field(root["field"], cfg.dim, cfg.bounds);
    cfg.methods = parse_methods(root["method"]);
    if (const YAML::Node naive = root["naive"]) {
        check_keys(naive, "naive", {"exterior"});
        if (naive["exterior"]) {
            cfg.naive_exterior = admissible_value(naive["exterior"], cfg.dim, cfg.bounds, "naive.exterior");
        }
    }
    parse_discretization(root["discretization"], cfg);
    parse_periodic(root["periodic"], cfg);
    parse_solver_options(root, cfg);
    cfg.sweep = parse_sweep(root["sweep"]);
    if (const YAML::Node output = root["output"]) {
        check_keys(output, "output", {"dir", "prefix"});
        cfg.out_dir = optional_scalar<std::string>(output, "dir", cfg.out_dir, "output");
        cfg.prefix = optional_scalar<std::string>(output, "prefix", cfg.prefix, "output");
        if (cfg.prefix.empty() || cfg.prefix.find('/') != std::string::npos) {
            fail(output, "output.prefix must be a non-empty file name prefix");
        }
    }
    cfg.spectrum_tol = optional_scalar<double>(root, "spectrum_tol", cfg.spectrum_tol, "config");
    if (!(cfg.spectrum_tol >= 0.0)) {
        fail(root["spectrum_tol"], "spectrum_tol must be non-negative");
    }

    std::string hashed(text);
    for (const auto& item : overrides) {
        hashed += "\n--override " + item;
    }
    cfg.sha256 = sha256_hex(hashed);
    validate_cross_fields(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read config file '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

nlohmann::json to_json(const ExperimentConfig& cfg)
{
    json field = {{"kind", cfg.field.kind}, {"seed", cfg.field.seed}, {"R", cfg.field.R}};
    const auto& f = cfg.field;
    if (f.kind == "constant") {
        field["value"] = matrix_json(f.value);
    } else if (f.kind == "checkerboard") {
        field["phases"] = weighted_json(f.phases);
    } else if (f.kind == "laminate") {
        field["values"] = {matrix_json(f.first), matrix_json(f.second)};
        field["axis"] = f.axis;
        field["period"] = f.period;
    } else if (f.kind == "inclusions") {
        field["exterior"] = matrix_json(f.exterior);
        field["radius"] = {f.r_min, f.r_max};
        field["interior"] = weighted_json(f.interior);
        field["jitter"] = f.jitter;
    } else if (f.kind == "piecewise_1d") {
        field["breakpoints"] = f.breakpoints;
        field["values"] = f.values;
    }
    json methods = json::array();
    for (const Method m : cfg.methods) {
        methods.push_back(to_string(m));
    }
    json out = {
        {"dim", cfg.dim},
        {"bounds", {{"alpha", cfg.bounds.alpha()}, {"beta", cfg.bounds.beta()}}},
        {"field", field},
        {"method", methods},
        {"naive", {{"exterior", cfg.naive_exterior ? matrix_json(*cfg.naive_exterior) : json("projected_mean")}}},
        {"discretization", disc_json(cfg.disc)},
        {"periodic",
         {{"h", cfg.periodic.h},
          {"h_follows_discretization", !cfg.periodic_h_explicit},
          {"quad_order", cfg.periodic.quad_order},
          {"cg_tol", cfg.periodic.cg_tol},
          {"cg_max_iter", cfg.periodic.cg_max_iter}}},
        {"optimizer",
         {{"max_iters", cfg.optimizer.max_iters},
          {"grad_tol", cfg.optimizer.grad_tol},
          {"initial_step", cfg.optimizer.initial_step},
          {"backtrack", cfg.optimizer.backtrack},
          {"armijo", cfg.optimizer.armijo},
          {"max_backtracks", cfg.optimizer.max_backtracks},
          {"fd_check", cfg.optimizer.fd_check},
          {"fd_step", cfg.optimizer.fd_step}}},
        {"fixed_point",
         {{"damping", cfg.fixed_point.damping},
          {"max_iters", cfg.fixed_point.max_iters},
          {"tol", cfg.fixed_point.tol},
          {"initial", to_string(cfg.fixed_point.initial)},
          {"identity_scale", cfg.fixed_point.identity_scale}}},
        {"bisection",
         {{"tol", cfg.bisection.tol}, {"max_iters", cfg.bisection.max_iters},
          {"bracket_tol", cfg.bisection.bracket_tol}}},
        {"spectrum_tol", cfg.spectrum_tol},
        {"output", {{"dir", cfg.out_dir}, {"prefix", cfg.prefix}}},
    };
    out["discretization"]["warm_start"] = cfg.warm_start;
    out["discretization"]["rel1_threshold"] = cfg.rel1_threshold;
    if (cfg.fixed_point.user_guess.size() > 0) {
        out["fixed_point"]["guess"] = matrix_json(cfg.fixed_point.user_guess);
    }
    if (cfg.sweep) {
        out["sweep"] = {{"parameter", cfg.sweep->parameter}, {"values", cfg.sweep->values}};
    } else {
        out["sweep"] = nullptr;
    }
    return out;
}

CoefficientField build_field(const ExperimentConfig& cfg)
{
    const auto& f = cfg.field;
    CoefficientField base = [&] {
        if (f.kind == "constant") {
            return make_constant(cfg.bounds, f.value);
        }
        if (f.kind == "checkerboard") {
            return make_checkerboard(cfg.bounds, cfg.dim, f.phases, f.seed);
        }
        if (f.kind == "laminate") {
            return make_laminate(cfg.bounds, cfg.dim, f.first, f.second, f.axis, f.period);
        }
        if (f.kind == "inclusions") {
            InclusionSpec spec{f.r_min, f.r_max, f.interior, f.jitter};
            return make_inclusions(cfg.bounds, cfg.dim, f.exterior, std::move(spec), f.seed);
        }
        if (f.kind == "piecewise_1d") {
            return make_one_dim_piecewise(cfg.bounds, f.breakpoints, f.values);
        }
        throw ConfigError("unknown field kind '" + f.kind + "'");
    }();
    return f.R == 1.0 ? base : rescale(base, f.R);
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& cfg)
{
    if (!cfg.sweep) {
        return {cfg};
    }
    std::vector<ExperimentConfig> out;
    for (const double v : cfg.sweep->values) {
        ExperimentConfig point = cfg;
        const auto& p = cfg.sweep->parameter;
        if (p == "R") {
            point.field.R = v;
        } else if (p == "L") {
            point.disc.L = v;
        } else if (p == "h") {
            point.disc.h = v;
            if (!cfg.periodic_h_explicit) {
                point.periodic.h = v;
            }
        } else if (p == "seed") {
            point.field.seed = static_cast<std::uint64_t>(v);
        }
        out.push_back(std::move(point));
    }
    return out;
}

std::string sha256_hex(std::string_view data)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex += fmt::format("{:02x}", digest[i]);
    }
    return hex;
}

bool RunResult::failed() const
{
    return std::any_of(outcomes.begin(), outcomes.end(), [](const MethodOutcome& o) { return !o.report; });
}

nlohmann::json report_json(const ExperimentConfig& cfg, const MethodOutcome& outcome)
{
    json doc;
    doc["method"] = to_string(outcome.method);
    doc["status"] = outcome.report ? "ok" : "failed";
    if (cfg.sweep) {
        doc["sweep"] = {{"parameter", cfg.sweep->parameter}, {"value", outcome.sweep_value.value_or(0.0)}};
    } else {
        doc["sweep"] = nullptr;
    }
    doc["provenance"] = {{"config_sha256", cfg.sha256},
                         {"software_version", EMBEDHOM_VERSION},
                         {"seed", cfg.field.seed},
                         {"field_R", cfg.field.R}};
    if (!outcome.report) {
        doc["error"] = outcome.error;
        doc["flags"] = {"solver_failure"};
        doc["config"] = to_json(cfg);
        return doc;
    }
    const EffectiveMatrixReport& r = *outcome.report;
    json flags = r.flags;
    const SmallMatrix sym = 0.5 * (r.matrix + r.matrix.transpose());
    const auto [lo, hi] = spectrum_range(sym);
    const bool symmetric = is_symmetric(r.matrix, 1e-12);
    const bool in_bounds = lo >= cfg.bounds.alpha() - cfg.spectrum_tol && hi <= cfg.bounds.beta() + cfg.spectrum_tol;
    if (!symmetric && r.method != Method::naive) {
        flags.push_back("asymmetric_result");
    }
    if (!in_bounds) {
        flags.push_back("spectrum_outside_bounds");
    }
    doc["matrix"] = matrix_json(r.matrix);
    doc["converged"] = r.converged;
    doc["iterations"] = r.iterations;
    doc["history"] = r.history;
    doc["objective_or_residual"] = r.objective_or_residual;
    doc["flags"] = flags;
    doc["diagnostics"] = r.diagnostics;
    doc["invariants"] = {{"symmetric", symmetric},
                         {"spectrum_min", lo},
                         {"spectrum_max", hi},
                         {"within_bounds", in_bounds},
                         {"spectrum_tol", cfg.spectrum_tol}};
    doc["discretization"] = r.disc ? disc_json(*r.disc) : json(nullptr);
    doc["wall_ms"] = r.wall_ms;
    doc["config"] = to_json(cfg);
    return doc;
}

std::string csv_header(int dim)
{
    std::string h = "sweep_value,method";
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < dim; ++c) {
            h += fmt::format(",m{}{}", r, c);
        }
    }
    return h + ",objective_or_residual,wall_ms";
}

std::string csv_row(const MethodOutcome& outcome, int dim)
{
    std::string row = outcome.sweep_value ? format_value(*outcome.sweep_value) : std::string();
    row += "," + to_string(outcome.method);
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < dim; ++c) {
            row += "," + (outcome.report ? format_value(outcome.report->matrix(r, c)) : std::string("nan"));
        }
    }
    if (outcome.report) {
        row += "," + format_value(outcome.report->objective_or_residual);
        row += "," + fmt::format("{:.3f}", outcome.report->wall_ms);
    } else {
        row += ",nan,nan";
    }
    return row;
}

namespace {

std::filesystem::path report_path(const std::filesystem::path& dir, const ExperimentConfig& point,
                                  const std::optional<double>& value, Method method)
{
    std::string name = point.prefix;
    if (point.sweep && value) {
        name += "_" + point.sweep->parameter + "-" + format_value(*value);
    }
    return dir / (name + "_" + to_string(method) + ".json");
}

template <class Fn>
void run_method(MethodOutcome& outcome, Fn&& fn)
{
    try {
        outcome.report = fn();
    } catch (const ConvergenceError& e) {
        outcome.error = e.what();
    } catch (const BracketError& e) {
        outcome.error = e.what();
    } catch (const InvalidCoefficientError& e) {
        outcome.error = e.what();
    } catch (const MemoryGuardError& e) {
        outcome.error = e.what();
    }
    if (!outcome.report) {
        spdlog::error("{} failed: {}", to_string(outcome.method), outcome.error);
    }
}

std::vector<MethodOutcome> run_point(const ExperimentConfig& point, const std::optional<double>& value)
{
    const CoefficientField field = build_field(point);
    std::optional<EmbeddedProblem> problem;
    const bool needs_problem = std::any_of(point.methods.begin(), point.methods.end(),
                                           [](Method m) { return m != Method::periodic_ref; });
    std::vector<MethodOutcome> out;
    if (needs_problem) {
        try {
            problem.emplace(field, point.disc, point.rel1_threshold);
            problem->set_warm_start(point.warm_start);
        } catch (const MemoryGuardError& e) {
            for (const Method m : point.methods) {
                out.push_back({m, value, std::nullopt, e.what(), {}});
            }
            return out;
        }
    }

    std::optional<EffectiveMatrixReport> a1;
    for (const Method m : point.methods) {
        MethodOutcome outcome{m, value, std::nullopt, {}, {}};
        spdlog::info("running {}{}", to_string(m),
                     value ? fmt::format(" at {} = {}", point.sweep->parameter, *value) : std::string());
        if (problem && !(m == Method::averaged && a1)) {
            problem->reset_stats();
        }
        switch (m) {
        case Method::naive:
            run_method(outcome, [&] {
                const SmallMatrix a_ext = point.naive_exterior.value_or(default_initial_guess(*problem));
                return naive_report(*problem, a_ext);
            });
            break;
        case Method::energy_min:
            run_method(outcome, [&] {
                a1 = energy_min_a1(*problem, point.optimizer);
                return *a1;
            });
            break;
        case Method::averaged:
            run_method(outcome, [&] {
                if (!a1) {
                    a1 = energy_min_a1(*problem, point.optimizer);
                }
                return averaged_from(*problem, *a1);
            });
            break;
        case Method::self_consistent:
            run_method(outcome, [&] { return self_consistent_a3(*problem, point.fixed_point); });
            break;
        case Method::self_consistent_scalar:
            run_method(outcome, [&] { return isotropic_a3_bisect(*problem, point.bisection); });
            break;
        case Method::periodic_ref:
            run_method(outcome, [&] { return periodic_report(field, 1.0, point.periodic); });
            break;
        }
        out.push_back(std::move(outcome));
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write '" + path.string() + "'");
    }
    out << text;
    if (!out) {
        throw Error("failed writing '" + path.string() + "'");
    }
}

} // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& options)
{
    const std::filesystem::path dir = options.out_dir.value_or(std::filesystem::path(cfg.out_dir));
    std::filesystem::create_directories(dir);

    const std::vector<ExperimentConfig> points = expand_sweep(cfg);
    std::vector<std::vector<MethodOutcome>> results(points.size());
    parallel_for(points.size(), options.jobs, [&](std::size_t i) {
        std::optional<double> value;
        if (cfg.sweep) {
            value = cfg.sweep->values[i];
        }
        results[i] = run_point(points[i], value);
        // Each report goes to its own file, written by the thread that owns the sweep point.
        for (auto& outcome : results[i]) {
            outcome.file = report_path(dir, points[i], value, outcome.method);
            write_text(outcome.file, report_json(points[i], outcome).dump(2) + "\n");
        }
    });

    RunResult run;
    std::string csv = csv_header(cfg.dim) + "\n";
    for (auto& point : results) {
        for (auto& outcome : point) {
            csv += csv_row(outcome, cfg.dim) + "\n";
            run.outcomes.push_back(std::move(outcome));
        }
    }
    run.csv = dir / (cfg.prefix + ".csv");
    write_text(run.csv, csv);
    return run;
}

} // namespace embedhom
