#pragma once

#include "embedhom/coeff_fields.hpp"
#include "embedhom/embedded_corrector.hpp"
#include "embedhom/energy_model.hpp"
#include "embedhom/mesh.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace embedhom {

enum class Method { naive, energy_min, averaged, self_consistent, self_consistent_scalar, periodic_ref };

[[nodiscard]] std::string to_string(Method method);
/// Throws std::invalid_argument on unknown names.
[[nodiscard]] Method method_from_string(std::string_view name);
[[nodiscard]] const std::vector<Method>& all_methods();

/// Projected supergradient ascent settings for A1.
struct OptimizerOptions {
    int max_iters = 200;
    /// Stop once ||P(A + grad) - A||_F <= grad_tol.
    double grad_tol = 1e-6;
    double initial_step = 0.5;
    /// Step multiplier after a rejected trial.
    double backtrack = 0.5;
    /// Sufficient-increase constant sigma in f(A+) >= f(A) + sigma <grad, A+ - A>.
    double armijo = 1e-4;
    int max_backtracks = 40;
    /// Compare the envelope gradient with central differences at the starting point.
    bool fd_check = false;
    double fd_step = 1e-4;

    void validate() const;
};

enum class InitialGuess { identity_scaled, arithmetic_mean, user };

[[nodiscard]] std::string to_string(InitialGuess guess);
[[nodiscard]] InitialGuess initial_guess_from_string(std::string_view name);

/// Damped fixed-point iteration A <- (1 - theta) A + theta P(G(A)) for A3.
struct FixedPointOptions {
    double damping = 0.5;
    int max_iters = 200;
    /// Stop once ||A_{k+1} - A_k||_F <= tol.
    double tol = 1e-8;
    InitialGuess initial = InitialGuess::arithmetic_mean;
    /// Multiple of the identity for identity_scaled; 0 picks (alpha + beta) / 2.
    double identity_scale = 0.0;
    SmallMatrix user_guess;

    void validate() const;
};

/// Scalar self-consistent equation solved by bisection on [alpha, beta].
struct BisectionOptions {
    /// Final interval width.
    double tol = 1e-6;
    int max_iters = 60;
    /// Allowed violation of f(alpha) >= 0 >= f(beta) attributed to discretization.
    double bracket_tol = 1e-3;

    void validate() const;
};

struct EffectiveMatrixReport {
    Method method = Method::energy_min;
    SmallMatrix matrix;
    bool converged = true;
    int iterations = 0;
    /// Objective per iterate (energy_min), ||G(A) - A||_F per iterate (self_consistent),
    /// f(midpoint) per bisection step (self_consistent_scalar).
    std::vector<double> history;
    /// Objective at the result (energy_min, averaged), fixed-point residual (self_consistent),
    /// |f(a3)| (self_consistent_scalar) or ||A - A^T||_F (naive, periodic_ref).
    double objective_or_residual = 0.0;
    std::vector<std::string> flags;
    std::map<std::string, double> diagnostics;
    std::optional<Discretization> disc;
    double wall_ms = 0.0;
};

struct GradientCheck {
    double analytic = 0.0;
    double finite_difference = 0.0;
    double relative_error = 0.0;
};

/// Compares <grad, E> with (f(A + sE) - f(A - sE)) / 2s for a symmetric direction E.
[[nodiscard]] GradientCheck check_gradient(const EnergyModel& model, const SmallMatrix& a, const SmallMatrix& direction,
                                           double step);

/// Mean of the field over the ball, projected into the admissible set.
[[nodiscard]] SmallMatrix default_initial_guess(const EnergyModel& model);

/// A1 = argmax over M of Tr G(A). Not converging is flagged; the best iterate is returned.
[[nodiscard]] EffectiveMatrixReport energy_min_a1(const EnergyModel& model, const OptimizerOptions& opts = {},
                                                  const std::optional<SmallMatrix>& start = std::nullopt);

/// A2 = G(A1) from a finished A1 report.
[[nodiscard]] EffectiveMatrixReport averaged_from(const EnergyModel& model, const EffectiveMatrixReport& a1);

[[nodiscard]] EffectiveMatrixReport averaged_a2(const EnergyModel& model, const OptimizerOptions& opts = {});

[[nodiscard]] EffectiveMatrixReport self_consistent_a3(const EnergyModel& model, const FixedPointOptions& opts = {});

/// Scalar a3 with (1/d) Tr G(a3 I) = a3. Throws BracketError when f(alpha) < -bracket_tol
/// or f(beta) > bracket_tol, which would contradict f_alpha <= f <= f_beta.
[[nodiscard]] EffectiveMatrixReport isotropic_a3_bisect(const EnergyModel& model, const BisectionOptions& opts = {});

/// Raw A0 for a given exterior matrix.
[[nodiscard]] EffectiveMatrixReport naive_report(const EmbeddedProblem& problem, const SmallMatrix& a_ext);

/// Periodic cell estimate of the field rescaled by R.
[[nodiscard]] EffectiveMatrixReport periodic_report(const CoefficientField& field, double R,
                                                    const Discretization& disc);

} // namespace embedhom
