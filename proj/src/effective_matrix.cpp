#include "embedhom/effective_matrix.hpp"

#include "embedhom/errors.hpp"
#include "embedhom/reference.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace embedhom {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

/// Records discretization metadata and solver statistics when the model is a FEM problem.
void attach_problem_info(const EnergyModel& model, EffectiveMatrixReport& report)
{
    if (const auto* problem = dynamic_cast<const EmbeddedProblem*>(&model)) {
        report.disc = problem->disc();
        const SolveStats stats = problem->stats();
        report.diagnostics["solves"] = static_cast<double>(stats.solves);
        report.diagnostics["max_residual_rel1"] = stats.max_residual_rel1;
        report.diagnostics["max_cg_iterations"] = stats.max_cg_iterations;
        if (stats.warnings > 0) {
            report.flags.emplace_back("energy_form_mismatch");
        }
    }
}

double stationarity(const SmallMatrix& a, const SmallMatrix& grad, const EllipticityBounds& bounds)
{
    return (project_to_admissible(a + grad, bounds) - a).norm();
}

constexpr double kObjectiveNoise = 1e-13;

} // namespace

std::string to_string(Method method)
{
    switch (method) {
    case Method::naive: return "naive";
    case Method::energy_min: return "energy_min";
    case Method::averaged: return "averaged";
    case Method::self_consistent: return "self_consistent";
    case Method::self_consistent_scalar: return "self_consistent_scalar";
    case Method::periodic_ref: return "periodic_ref";
    }
    return "unknown";
}

Method method_from_string(std::string_view name)
{
    for (const Method m : all_methods()) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

const std::vector<Method>& all_methods()
{
    static const std::vector<Method> methods{Method::naive,           Method::energy_min,
                                             Method::averaged,        Method::self_consistent,
                                             Method::self_consistent_scalar, Method::periodic_ref};
    return methods;
}

std::string to_string(InitialGuess guess)
{
    switch (guess) {
    case InitialGuess::identity_scaled: return "identity_scaled";
    case InitialGuess::arithmetic_mean: return "arithmetic_mean";
    case InitialGuess::user: return "user";
    }
    return "unknown";
}

InitialGuess initial_guess_from_string(std::string_view name)
{
    for (const auto g : {InitialGuess::identity_scaled, InitialGuess::arithmetic_mean, InitialGuess::user}) {
        if (to_string(g) == name) {
            return g;
        }
    }
    throw std::invalid_argument("unknown initial guess policy '" + std::string(name) + "'");
}

void OptimizerOptions::validate() const
{
    if (max_iters < 1 || !(grad_tol > 0.0) || !(initial_step > 0.0) || !(backtrack > 0.0 && backtrack < 1.0) ||
        !(armijo > 0.0 && armijo < 1.0) || max_backtracks < 1 || !(fd_step > 0.0)) {
        throw std::invalid_argument(
            "optimizer options: need max_iters >= 1, grad_tol > 0, initial_step > 0, backtrack in (0,1), "
            "armijo in (0,1), max_backtracks >= 1, fd_step > 0");
    }
}

void FixedPointOptions::validate() const
{
    if (!(damping > 0.0 && damping <= 1.0)) {
        throw std::invalid_argument("fixed point damping must lie in (0, 1]");
    }
    if (max_iters < 1 || !(tol > 0.0) || identity_scale < 0.0) {
        throw std::invalid_argument("fixed point options: need max_iters >= 1, tol > 0, identity_scale >= 0");
    }
}

void BisectionOptions::validate() const
{
    if (!(tol > 0.0) || max_iters < 1 || !(bracket_tol >= 0.0)) {
        throw std::invalid_argument("bisection options: need tol > 0, max_iters >= 1, bracket_tol >= 0");
    }
}

GradientCheck check_gradient(const EnergyModel& model, const SmallMatrix& a, const SmallMatrix& direction, double step)
{
    const SmallMatrix e = 0.5 * (direction + direction.transpose());
    GradientCheck out;
    out.analytic = frobenius_inner(model.trace_objective(a).gradient, e);
    const double plus = model.trace_objective(a + step * e).value;
    const double minus = model.trace_objective(a - step * e).value;
    out.finite_difference = (plus - minus) / (2.0 * step);
    const double scale = std::max(std::abs(out.analytic), std::abs(out.finite_difference));
    out.relative_error = scale > 0.0 ? std::abs(out.analytic - out.finite_difference) / scale : 0.0;
    return out;
}

SmallMatrix default_initial_guess(const EnergyModel& model)
{
    return project_to_admissible(model.mean_coefficient(), model.bounds());
}

EffectiveMatrixReport energy_min_a1(const EnergyModel& model, const OptimizerOptions& opts,
                                    const std::optional<SmallMatrix>& start)
{
    opts.validate();
    const auto t0 = Clock::now();
    const EllipticityBounds& bounds = model.bounds();

    EffectiveMatrixReport report;
    report.method = Method::energy_min;
    report.converged = false;

    SmallMatrix a = project_to_admissible(start.value_or(model.mean_coefficient()), bounds);
    TraceObjective obj = model.trace_objective(a);
    report.history.push_back(obj.value);

    if (opts.fd_check) {
        // Direction along the gradient, or the identity when the gradient vanishes.
        SmallMatrix dir = obj.gradient;
        if (dir.norm() == 0.0) {
            dir = identity(model.dim());
        }
        const GradientCheck check = check_gradient(model, a, dir / dir.norm(), opts.fd_step);
        report.diagnostics["fd_check_relative_error"] = check.relative_error;
    }

    SmallMatrix prev_a;
    SmallMatrix prev_grad;
    double stat = stationarity(a, obj.gradient, bounds);
    int it = 0;
    for (; it < opts.max_iters; ++it) {
        if (stat <= opts.grad_tol) {
            report.converged = true;
            break;
        }
        double t = opts.initial_step;
        if (it > 0) {
            // Barzilai-Borwein step for a concave objective: <s, s> / -<s, y>.
            const SmallMatrix s = a - prev_a;
            const SmallMatrix y = obj.gradient - prev_grad;
            const double sy = -frobenius_inner(s, y);
            if (sy > 0.0) {
                t = std::clamp(frobenius_inner(s, s) / sy, 1e-6, 1e6);
            }
        }
        bool accepted = false;
        for (int bt = 0; bt < opts.max_backtracks; ++bt) {
            const SmallMatrix trial = project_to_admissible(a + t * obj.gradient, bounds);
            const double predicted = frobenius_inner(obj.gradient, trial - a);
            // Once a trial has been rejected and the predicted increase is at roundoff level,
            // shorter steps cannot be confirmed either and would only cost more solves.
            if (bt > 0 && predicted <= kObjectiveNoise * (1.0 + std::abs(obj.value))) {
                break;
            }
            const TraceObjective trial_obj = model.trace_objective(trial);
            if (trial_obj.value >= obj.value + opts.armijo * predicted) {
                prev_a = a;
                prev_grad = obj.gradient;
                a = trial;
                obj = trial_obj;
                accepted = true;
                break;
            }
            t *= opts.backtrack;
        }
        if (!accepted) {
            report.flags.emplace_back("line_search_stalled");
            spdlog::debug("energy_min: line search stalled at iteration {} (stationarity {:.3e})", it, stat);
            break;
        }
        report.history.push_back(obj.value);
        stat = stationarity(a, obj.gradient, bounds);
        spdlog::debug("energy_min: iteration {} objective {:.15g} stationarity {:.3e}", it + 1, obj.value, stat);
    }
    if (!report.converged && stat <= opts.grad_tol) {
        report.converged = true;
    }
    if (!report.converged && it >= opts.max_iters) {
        report.flags.emplace_back("max_iters_reached");
    }
    report.matrix = a;
    report.iterations = it;
    report.objective_or_residual = obj.value;
    report.diagnostics["stationarity"] = stat;
    attach_problem_info(model, report);
    report.wall_ms = elapsed_ms(t0);
    return report;
}

EffectiveMatrixReport averaged_from(const EnergyModel& model, const EffectiveMatrixReport& a1)
{
    const auto t0 = Clock::now();
    EffectiveMatrixReport report = a1;
    report.method = Method::averaged;
    report.matrix = model.g_matrix(a1.matrix);
    report.objective_or_residual = report.matrix.trace();
    report.diagnostics["a1_objective"] = a1.objective_or_residual;
    attach_problem_info(model, report);
    report.wall_ms = a1.wall_ms + elapsed_ms(t0);
    return report;
}

EffectiveMatrixReport averaged_a2(const EnergyModel& model, const OptimizerOptions& opts)
{
    return averaged_from(model, energy_min_a1(model, opts));
}

EffectiveMatrixReport self_consistent_a3(const EnergyModel& model, const FixedPointOptions& opts)
{
    opts.validate();
    const auto t0 = Clock::now();
    const EllipticityBounds& bounds = model.bounds();
    const int d = model.dim();

    SmallMatrix a;
    switch (opts.initial) {
    case InitialGuess::arithmetic_mean:
        a = default_initial_guess(model);
        break;
    case InitialGuess::identity_scaled: {
        const double c = opts.identity_scale > 0.0 ? opts.identity_scale : 0.5 * (bounds.alpha() + bounds.beta());
        a = project_to_admissible(c * identity(d), bounds);
        break;
    }
    case InitialGuess::user:
        if (opts.user_guess.rows() != d || opts.user_guess.cols() != d) {
            throw std::invalid_argument("user initial guess has the wrong dimension");
        }
        a = project_to_admissible(opts.user_guess, bounds);
        break;
    }

    EffectiveMatrixReport report;
    report.method = Method::self_consistent;
    report.converged = false;
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < opts.max_iters; ++it) {
        const SmallMatrix g = model.g_matrix(a);
        residual = (g - a).norm();
        report.history.push_back(residual);
        const SmallMatrix next = (1.0 - opts.damping) * a + opts.damping * project_to_admissible(g, bounds);
        const double step = (next - a).norm();
        spdlog::debug("self_consistent: iteration {} residual {:.3e} step {:.3e}", it, residual, step);
        if (step <= opts.tol) {
            report.converged = true;
            break;
        }
        a = next;
    }
    if (!report.converged) {
        report.flags.emplace_back("max_iters_reached");
    }
    report.matrix = a;
    report.iterations = it;
    report.objective_or_residual = residual;
    attach_problem_info(model, report);
    report.wall_ms = elapsed_ms(t0);
    return report;
}

EffectiveMatrixReport isotropic_a3_bisect(const EnergyModel& model, const BisectionOptions& opts)
{
    opts.validate();
    const auto t0 = Clock::now();
    const EllipticityBounds& bounds = model.bounds();
    const int d = model.dim();
    if (!(bounds.alpha() < bounds.beta())) {
        throw std::invalid_argument("scalar self-consistent equation needs alpha < beta");
    }
    auto f = [&](double gamma) { return model.trace_objective(gamma * identity(d)).value / d - gamma; };

    const double f_lo = f(bounds.alpha());
    const double f_hi = f(bounds.beta());
    if (f_lo < -opts.bracket_tol || f_hi > opts.bracket_tol) {
        std::ostringstream os;
        os << "bracket violated: f(alpha) = " << f_lo << ", f(beta) = " << f_hi
           << "; the bounds f_alpha <= f <= f_beta require f(alpha) >= 0 >= f(beta) (tolerance "
           << opts.bracket_tol << ")";
        throw BracketError(os.str());
    }

    EffectiveMatrixReport report;
    report.method = Method::self_consistent_scalar;
    report.diagnostics["f_alpha"] = f_lo;
    report.diagnostics["f_beta"] = f_hi;
    double lo = bounds.alpha();
    double hi = bounds.beta();
    double f_low = f_lo;
    double f_high = f_hi;
    int it = 0;
    while (hi - lo > opts.tol && it < opts.max_iters) {
        const double mid = 0.5 * (lo + hi);
        const double value = f(mid);
        report.history.push_back(value);
        if (value >= 0.0) {
            lo = mid;
            f_low = value;
        } else {
            hi = mid;
            f_high = value;
        }
        ++it;
    }
    report.converged = hi - lo <= opts.tol;
    if (!report.converged) {
        report.flags.emplace_back("max_iters_reached");
    }
    // Secant point of the final bracket; it stays inside [lo, hi] and is exact for affine f.
    double a3 = 0.5 * (lo + hi);
    if (f_low >= 0.0 && f_high < 0.0) {
        a3 = lo + f_low * (hi - lo) / (f_low - f_high);
    }
    report.matrix = a3 * identity(d);
    report.iterations = it;
    report.objective_or_residual = std::abs(f(a3));
    report.diagnostics["interval_width"] = hi - lo;
    attach_problem_info(model, report);
    report.wall_ms = elapsed_ms(t0);
    return report;
}

EffectiveMatrixReport naive_report(const EmbeddedProblem& problem, const SmallMatrix& a_ext)
{
    const auto t0 = Clock::now();
    EffectiveMatrixReport report;
    report.method = Method::naive;
    report.matrix = naive_a0(problem, a_ext);
    report.objective_or_residual = (report.matrix - report.matrix.transpose()).norm();
    report.diagnostics["exterior_trace"] = a_ext.trace();
    attach_problem_info(problem, report);
    report.wall_ms = elapsed_ms(t0);
    return report;
}

EffectiveMatrixReport periodic_report(const CoefficientField& field, double R, const Discretization& disc)
{
    const auto t0 = Clock::now();
    const PeriodicResult res = periodic_effective(field, R, disc);
    EffectiveMatrixReport report;
    report.method = Method::periodic_ref;
    report.matrix = res.matrix;
    report.objective_or_residual = res.asymmetry;
    report.diagnostics["max_cg_iterations"] = res.cg_iterations;
    report.disc = disc;
    report.wall_ms = elapsed_ms(t0);
    return report;
}

} // namespace embedhom
