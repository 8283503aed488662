#pragma once

#include "embedhom/coeff_fields.hpp"
#include "embedhom/energy_model.hpp"
#include "embedhom/mesh.hpp"

namespace embedhom {

/// Harmonic mean of a one-dimensional field over (a, b), exact for piecewise constant fields.
[[nodiscard]] double harmonic_mean_1d(const CoefficientField& field, double a = -1.0, double b = 1.0);

/// Arithmetic mean of a one-dimensional field over (a, b).
[[nodiscard]] double arithmetic_mean_1d(const CoefficientField& field, double a = -1.0, double b = 1.0);

/// J_p(A) on the whole line: p^2 (2A - A^2 / H), H the harmonic mean over (-1, 1).
[[nodiscard]] double analytic_j_1d(const CoefficientField& field, double a_ext, double p = 1.0);

/// Closed-form model of a one-dimensional interior field on the whole line.
class OneDimAnalyticModel final : public EnergyModel {
public:
    explicit OneDimAnalyticModel(const CoefficientField& field);

    [[nodiscard]] double harmonic_mean() const noexcept { return harmonic_; }

    [[nodiscard]] int dim() const override { return 1; }
    [[nodiscard]] const EllipticityBounds& bounds() const override { return bounds_; }
    [[nodiscard]] SmallMatrix mean_coefficient() const override;
    [[nodiscard]] double energy(const SmallMatrix& a_ext, const SmallVector& p) const override;
    [[nodiscard]] TraceObjective trace_objective(const SmallMatrix& a_ext) const override;
    [[nodiscard]] SmallMatrix g_matrix(const SmallMatrix& a_ext) const override;

private:
    EllipticityBounds bounds_;
    double harmonic_ = 1.0;
    double arithmetic_ = 1.0;
};

/// C = (gamma - alpha) / ((d - 1) gamma + alpha) for the inclusion alpha I in gamma I.
[[nodiscard]] double eshelby_contrast(double alpha, double gamma, int dim);

struct PointValue {
    double value = 0.0;
    SmallVector gradient;
};

/// Whole-space corrector: C p.x inside the unit ball, C p.x / |x|^d outside.
[[nodiscard]] PointValue eshelby_corrector(double alpha, double gamma, const SmallVector& p,
                                           const SmallVector& x);

struct EshelbyTrace {
    /// (1/d) Tr G(gamma I) = alpha + (alpha - gamma) C
    double trace_over_d = 0.0;
    /// trace_over_d - gamma = (alpha - gamma) d gamma / ((d - 1) gamma + alpha)
    double f_alpha = 0.0;
};

[[nodiscard]] EshelbyTrace eshelby_trace_g(double alpha, double gamma, int dim);

struct PeriodicResult {
    /// Symmetric part of the computed matrix.
    SmallMatrix matrix;
    SmallMatrix raw;
    /// ||raw - raw^T||_F
    double asymmetry = 0.0;
    int cg_iterations = 0;
};

/// Effective matrix of x -> field(R x) on the periodic cell (-1/2, 1/2)^d, from the
/// cell problem with one pinned unknown. disc.L is ignored; the cell has ceil(1/h) cells per side.
[[nodiscard]] PeriodicResult periodic_effective(const CoefficientField& field, double R,
                                                const Discretization& disc);

} // namespace embedhom
