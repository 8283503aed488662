// Acceptance driver: runs each numbered criterion at its stated tolerance and prints one
// PASS/FAIL line per criterion. Exits nonzero when any criterion fails.

#include "embedhom/effective_matrix.hpp"
#include "embedhom/embedded_corrector.hpp"
#include "embedhom/errors.hpp"
#include "embedhom/experiment.hpp"
#include "embedhom/reference.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

using namespace embedhom;
namespace fs = std::filesystem;

namespace {

const EllipticityBounds kBounds(1.0, 4.0);

struct Outcome {
    bool pass = false;
    std::string detail;
};

/// Largest residual_rel1 seen across criteria 1 to 5.
struct Rel1Tracker {
    double max_rel1 = 0.0;
    std::size_t solves = 0;
    std::size_t warnings = 0;

    void add(const EmbeddedProblem& problem)
    {
        const SolveStats s = problem.stats();
        max_rel1 = std::max(max_rel1, s.max_residual_rel1);
        solves += s.solves;
        warnings += s.warnings;
    }
};

Rel1Tracker g_rel1;

Discretization make_disc(int dim, double L, double h)
{
    Discretization d;
    d.dim = dim;
    d.L = L;
    d.h = h;
    return d;
}

SmallMatrix diag2(double a, double b)
{
    SmallMatrix m = SmallMatrix::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

SmallMatrix random_admissible(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> eig(1.0, 4.0);
    std::uniform_real_distribution<double> angle(0.0, 3.141592653589793);
    const double t = angle(rng);
    SmallMatrix q(2, 2);
    q << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
    return q * diag2(eig(rng), eig(rng)) * q.transpose();
}

SmallMatrix random_direction(std::mt19937_64& rng)
{
    std::normal_distribution<double> n01;
    SmallMatrix e(2, 2);
    e(0, 0) = n01(rng);
    e(1, 1) = n01(rng);
    e(0, 1) = e(1, 0) = n01(rng);
    return e / e.norm();
}

CoefficientField two_phase_checkerboard(double a, double b, std::uint64_t seed, double R)
{
    return rescale(make_checkerboard(kBounds, 2, {{a * identity(2), 0.5}, {b * identity(2), 0.5}}, seed), R);
}

Outcome homogeneous_medium()
{
    const SmallMatrix a = diag2(1.5, 3.0);
    EmbeddedProblem problem(make_constant(kBounds, a), make_disc(2, 5.0, 0.05));
    const EffectiveMatrixReport a1 = energy_min_a1(problem);
    const double e1 = (a1.matrix - a).norm();
    const double e2 = (averaged_from(problem, a1).matrix - a).norm();
    const double e3 = (self_consistent_a3(problem).matrix - a).norm();
    const double e0 = (naive_a0(problem, a) - a).norm();
    g_rel1.add(problem);
    const double worst = std::max({e0, e1, e2, e3});
    return {worst <= 1e-6, fmt::format("|A0-A|={:.2e} |A1-A|={:.2e} |A2-A|={:.2e} |A3-A|={:.2e}", e0, e1, e2, e3)};
}

Outcome one_dimensional_equality()
{
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> value(1.0, 4.0);
    double analytic_err = 0.0;
    double fem_err = 0.0;
    OptimizerOptions opt;
    opt.grad_tol = 1e-10;
    FixedPointOptions fp;
    fp.tol = 1e-10;
    const int fields = 4;
    for (int f = 0; f < fields; ++f) {
        std::vector<double> breaks;
        std::vector<double> values;
        for (int i = 1; i < 8; ++i) {
            breaks.push_back(-1.0 + 0.25 * i);
        }
        for (int i = 0; i < 8; ++i) {
            values.push_back(value(rng));
        }
        const CoefficientField field = make_one_dim_piecewise(kBounds, breaks, values);
        // Independent oracle: the harmonic mean of the eight values.
        double inv = 0.0;
        for (const double v : values) {
            inv += 1.0 / v;
        }
        const double h_mean = 8.0 / inv;

        const OneDimAnalyticModel model(field);
        const EffectiveMatrixReport a1 = energy_min_a1(model, opt);
        for (const double est : {a1.matrix(0, 0), averaged_from(model, a1).matrix(0, 0),
                                 self_consistent_a3(model, fp).matrix(0, 0)}) {
            analytic_err = std::max(analytic_err, std::abs(est - h_mean));
        }

        // Unpreconditioned 1D stiffness has condition number ~ n^2, so CG needs about n iterations;
        // the square-root default cap is sized for 2D.
        Discretization disc = make_disc(1, 2.0, 1e-3);
        disc.cg_max_iter = 20000;
        EmbeddedProblem problem(field, disc);
        const EffectiveMatrixReport f1 = energy_min_a1(problem);
        for (const double est : {f1.matrix(0, 0), averaged_from(problem, f1).matrix(0, 0),
                                 self_consistent_a3(problem).matrix(0, 0)}) {
            fem_err = std::max(fem_err, std::abs(est - h_mean));
        }
        g_rel1.add(problem);
    }
    return {analytic_err <= 1e-8 && fem_err <= 1e-4,
            fmt::format("{} fields: analytic max err {:.2e} (<=1e-8), FEM h=1e-3 max err {:.2e} (<=1e-4)", fields,
                        analytic_err, fem_err)};
}

Outcome eshelby_oracle()
{
    const double exact = eshelby_trace_g(1.0, 2.0, 2).trace_over_d;
    SmallVector e1 = SmallVector::Zero(2);
    e1(0) = 1.0;
    double err[2][2];
    const double Ls[2] = {4.0, 8.0};
    const double hs[2] = {0.04, 0.02};
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            EmbeddedProblem problem(make_constant(kBounds, identity(2)), make_disc(2, Ls[i], hs[j]));
            err[i][j] = std::abs(problem.solve(2.0 * identity(2), e1).energy_j - exact);
            g_rel1.add(problem);
        }
    }
    const bool monotone =
        err[0][1] < err[0][0] && err[1][1] < err[1][0] && err[1][0] < err[0][0] && err[1][1] < err[0][1];
    return {monotone && err[1][1] <= 2e-2,
            fmt::format("errors vs 2/3: (L4,h.04)={:.4f} (L4,h.02)={:.4f} (L8,h.04)={:.4f} (L8,h.02)={:.4f}; "
                        "monotone={}",
                        err[0][0], err[0][1], err[1][0], err[1][1], monotone)};
}

Outcome naive_failure()
{
    EmbeddedProblem problem(make_constant(kBounds, identity(2)), make_disc(2, 8.0, 0.02));
    const SmallMatrix a0 = naive_a0(problem, 2.0 * identity(2));
    g_rel1.add(problem);
    const double to_oracle = (a0 - (4.0 / 3.0) * identity(2)).norm();
    const double to_field = (a0 - identity(2)).norm();
    return {to_oracle <= 2e-2 && to_field >= 0.3,
            fmt::format("A0 = [[{:.4f}, {:.4f}], [{:.4f}, {:.4f}]], |A0-4/3 I|={:.4f}, |A0-I|={:.4f}", a0(0, 0),
                        a0(0, 1), a0(1, 0), a0(1, 1), to_oracle, to_field)};
}

Outcome concavity()
{
    EmbeddedProblem problem(two_phase_checkerboard(1.0, 4.0, 17, 3.0), make_disc(2, 3.0, 0.1));
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = std::numeric_limits<double>::infinity();
    for (int t = 0; t < 50; ++t) {
        const SmallMatrix a1 = random_admissible(rng);
        const SmallMatrix a2 = random_admissible(rng);
        const double l = unit(rng);
        const double mid = problem.trace_objective(l * a1 + (1.0 - l) * a2).value;
        const double chord = l * problem.trace_objective(a1).value + (1.0 - l) * problem.trace_objective(a2).value;
        worst = std::min(worst, mid - chord);
    }
    g_rel1.add(problem);
    return {worst >= -1e-8, fmt::format("50 triples, min slack {:.3e} (>= -1e-8)", worst)};
}

Outcome energy_identity()
{
    return {g_rel1.solves > 0 && g_rel1.max_rel1 <= 1e-6 && g_rel1.warnings == 0,
            fmt::format("{} solves, max rel1 {:.2e} (<= 1e-6), warnings {}", g_rel1.solves, g_rel1.max_rel1,
                        g_rel1.warnings)};
}

Outcome envelope_gradient()
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> phase(1.0, 4.0);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const CoefficientField field = two_phase_checkerboard(phase(rng), phase(rng), 100 + t, 2.0 + t % 3);
        const EmbeddedProblem problem(field, make_disc(2, 3.0, 0.1));
        const GradientCheck gc = check_gradient(problem, random_admissible(rng), random_direction(rng), 1e-4);
        worst = std::max(worst, gc.relative_error);
    }
    return {worst <= 1e-4, fmt::format("10 cases, max relative error {:.2e} (<= 1e-4)", worst)};
}

Outcome self_consistent_bracket()
{
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> phase(1.0, 4.0);
    double min_fa = std::numeric_limits<double>::infinity();
    double max_fb = -std::numeric_limits<double>::infinity();
    double max_width = 0.0;
    int max_iters = 0;
    BisectionOptions opts;
    opts.tol = 1e-6;
    for (int t = 0; t < 10; ++t) {
        const double a = phase(rng);
        const double b = phase(rng);
        const EmbeddedProblem problem(two_phase_checkerboard(a, b, 200 + t, 4.0), make_disc(2, 3.0, 0.1));
        const EffectiveMatrixReport r = isotropic_a3_bisect(problem, opts);
        min_fa = std::min(min_fa, r.diagnostics.at("f_alpha"));
        max_fb = std::max(max_fb, r.diagnostics.at("f_beta"));
        max_width = std::max(max_width, r.diagnostics.at("interval_width"));
        max_iters = std::max(max_iters, r.iterations);
    }
    return {min_fa >= -1e-3 && max_fb <= 1e-3 && max_width <= 1e-6 && max_iters <= 40,
            fmt::format("min f(alpha) {:.3e}, max f(beta) {:.3e}, width {:.1e}, max iterations {}", min_fa, max_fb,
                        max_width, max_iters)};
}

const char* const kTrendConfig = R"(dim: 2
bounds: {{alpha: 1, beta: 4}}
field:
  kind: checkerboard
  seed: {seed}
  phases:
    - {{value: 1, probability: 0.5}}
    - {{value: 4, probability: 0.5}}
method: [energy_min, periodic_ref]
discretization: {{L: 3, h: 0.03125}}
sweep:
  parameter: R
  values: [2, 4, 8]
output: {{dir: {dir}, prefix: trend_seed{seed}}}
)";

constexpr int kTrendSeeds = 5;

/// Runs the R sweep for every seed; returns the CSV paths.
std::vector<fs::path> run_trend(const fs::path& dir, int jobs, std::vector<RunResult>& results)
{
    fs::create_directories(dir);
    std::vector<fs::path> csvs;
    for (int seed = 1; seed <= kTrendSeeds; ++seed) {
        const fs::path config = dir / fmt::format("trend_seed{}.yaml", seed);
        std::ofstream(config) << fmt::format(fmt::runtime(kTrendConfig), fmt::arg("seed", seed), fmt::arg("dir", dir.string()));
        const RunResult r = run_experiment(load_config(config), {jobs, std::nullopt});
        if (r.failed()) {
            throw std::runtime_error(fmt::format("trend run for seed {} failed", seed));
        }
        csvs.push_back(r.csv);
        results.push_back(r);
    }
    return csvs;
}

std::vector<fs::path> g_first_trend;

Outcome convergence_trend(const fs::path& work, int jobs)
{
    std::vector<RunResult> results;
    g_first_trend = run_trend(work / "trend_a", jobs, results);
    // trace / d of A1 and of the periodic estimate, indexed by (R, seed)
    std::map<double, std::vector<double>> a1;
    std::map<double, std::vector<double>> periodic;
    for (const RunResult& r : results) {
        for (const MethodOutcome& o : r.outcomes) {
            auto& bucket = o.method == Method::energy_min ? a1 : periodic;
            bucket[*o.sweep_value].push_back(o.report->matrix.trace() / 2.0);
        }
    }
    std::vector<double> spread;
    for (const double R : {2.0, 4.0, 8.0}) {
        const auto [lo, hi] = std::minmax_element(a1[R].begin(), a1[R].end());
        spread.push_back(*hi - *lo);
    }
    // The periodic value at a given R is itself a single random sample (64 squares at R = 8), so
    // the reference is the seed average; the largest per-seed gap is reported alongside.
    double mean_a1 = 0.0;
    double mean_periodic = 0.0;
    double worst_seed_gap = 0.0;
    for (int s = 0; s < kTrendSeeds; ++s) {
        mean_a1 += a1[8.0][s] / kTrendSeeds;
        mean_periodic += periodic[8.0][s] / kTrendSeeds;
        worst_seed_gap = std::max(worst_seed_gap, std::abs(a1[8.0][s] - periodic[8.0][s]));
    }
    const double gap = std::abs(mean_a1 - mean_periodic);
    const bool decreasing = spread[1] < spread[0] && spread[2] < spread[1];
    return {decreasing && gap <= 0.15,
            fmt::format("seed spread of Tr A1/2 at R=2,4,8: {:.4f}, {:.4f}, {:.4f}; R=8 seed-mean gap to periodic "
                        "{:.4f} (<= 0.15), largest single-seed gap {:.4f}",
                        spread[0], spread[1], spread[2], gap, worst_seed_gap)};
}

std::string numeric_content(const fs::path& csv)
{
    std::ifstream in(csv);
    std::string line;
    std::string out;
    while (std::getline(in, line)) {
        out += line.substr(0, line.rfind(',')) + "\n";
    }
    return out;
}

Outcome determinism(const fs::path& work, int jobs)
{
    if (g_first_trend.empty()) {
        return {false, "criterion 9 produced no CSV files to compare"};
    }
    std::vector<RunResult> results;
    const std::vector<fs::path> second = run_trend(work / "trend_b", jobs, results);
    int identical = 0;
    for (std::size_t i = 0; i < second.size(); ++i) {
        identical += numeric_content(g_first_trend[i]) == numeric_content(second[i]) ? 1 : 0;
    }
    return {identical == static_cast<int>(second.size()),
            fmt::format("{}/{} CSV files identical apart from wall_ms", identical, second.size())};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Acceptance criteria for the embedded corrector estimators"};
    std::string work_dir = "acceptance_runs";
    int jobs = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
    std::vector<int> only;
    app.add_option("--work-dir", work_dir, "Directory for experiment output");
    app.add_option("--jobs", jobs, "Concurrent sweep points")->check(CLI::PositiveNumber);
    app.add_option("--only", only, "Run only these criteria (criterion 10 needs 9)");
    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::warn);

    const fs::path work(work_dir);
    fs::create_directories(work);

    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "homogeneous medium", 60.0, homogeneous_medium},
        {2, "one-dimensional equality", 40.0, one_dimensional_equality},
        {3, "Eshelby energy", 120.0, eshelby_oracle},
        {4, "naive estimator bias", std::numeric_limits<double>::infinity(), naive_failure},
        {5, "concavity of Tr G", std::numeric_limits<double>::infinity(), concavity},
        {6, "energy identity", std::numeric_limits<double>::infinity(), energy_identity},
        {7, "envelope gradient", std::numeric_limits<double>::infinity(), envelope_gradient},
        {8, "self-consistent bracket", std::numeric_limits<double>::infinity(), self_consistent_bracket},
        {9, "convergence trend in R", 900.0, [&] { return convergence_trend(work, jobs); }},
        {10, "determinism", std::numeric_limits<double>::infinity(), [&] { return determinism(work, jobs); }},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (secs > c.budget_s) {
            out.pass = false;
            out.detail += fmt::format("; over the {:.0f} s budget", c.budget_s);
        }
        failures += out.pass ? 0 : 1;
        fmt::print("[{}] {:>2} {:<26} {:7.1f} s  {}\n", out.pass ? "PASS" : "FAIL", c.id, c.name, secs, out.detail);
        std::fflush(stdout);
    }
    fmt::print("{} criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
