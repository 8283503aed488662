#pragma once

#include "embedhom/coeff_fields.hpp"
#include "embedhom/energy_model.hpp"
#include "embedhom/fem.hpp"
#include "embedhom/mesh.hpp"

#include <cstddef>
#include <mutex>
#include <utility>
#include <vector>

namespace embedhom {

/// Discrete corrector w_p for one direction p and exterior matrix A.
struct CorrectorSolution {
    SmallVector p;
    SmallMatrix a_ext;
    /// Vertex values of the V0 representative (zero mean over the unit ball).
    std::vector<double> w;
    /// Constant subtracted from the Dirichlet solution to reach V0.
    double mean_shift = 0.0;
    /// J_p(A) from the flux form (1/|B|)[int_B p.A(p + grad w) - int_B Ap.grad w].
    double energy_j = 0.0;
    /// J_p(A) from the energy form (1/|B|)[int_B p.Ap - int_B grad w.A grad w - int_ext grad w.A grad w].
    double energy_j3 = 0.0;
    /// |energy_j - energy_j3| / (1 + |energy_j|)
    double residual_rel1 = 0.0;
    /// Set when residual_rel1 exceeds the problem's threshold.
    bool energy_warning = false;
    int cg_iterations = 0;
    double cg_residual = 0.0;
    Discretization disc;
};

/// G(A) built by polarization, with the energies it was built from.
struct GMatrix {
    SmallMatrix entries;
    SmallMatrix a_ext;
    /// J_{e_i} for i < d, then J_{e_i + e_j} for i < j in row order.
    std::vector<double> energies;
};

struct EnergyForms {
    double flux_form = 0.0;
    double energy_form = 0.0;
};

struct SolveStats {
    std::size_t solves = 0;
    double max_residual_rel1 = 0.0;
    int max_cg_iterations = 0;
    std::size_t warnings = 0;
};

/// Truncated embedded corrector problem for a fixed interior field on a fixed mesh.
///
/// Everything that does not depend on the exterior matrix (ball quadrature,
/// interior stiffness, exterior stiffness per matrix component) is computed once,
/// so a new exterior matrix costs one linear combination and one CG solve.
/// solve() is const and safe to call concurrently.
class EmbeddedProblem final : public EnergyModel {
public:
    EmbeddedProblem(CoefficientField field, const Discretization& disc, double rel1_threshold = 1e-6);

    [[nodiscard]] const Mesh& mesh() const noexcept { return mesh_; }
    [[nodiscard]] const DofMap& dofs() const noexcept { return dofs_; }
    [[nodiscard]] const CoefficientField& field() const noexcept { return field_; }
    [[nodiscard]] const Discretization& disc() const noexcept { return disc_; }
    [[nodiscard]] const BallMoments& moments() const noexcept { return moments_; }
    /// Quadrature measure of the unit ball; all energies are normalized by it.
    [[nodiscard]] double ball_volume() const noexcept { return ball_volume_; }

    /// Number of threads used for independent solves inside g_matrix and trace_objective.
    void set_jobs(int jobs) noexcept { jobs_ = jobs; }
    [[nodiscard]] int jobs() const noexcept { return jobs_; }

    /// Start CG from the last solution computed for the same direction p. Each
    /// direction's history is sequential even when solves run in parallel, so
    /// results stay reproducible for a fixed call sequence.
    void set_warm_start(bool enabled);
    [[nodiscard]] bool warm_start() const noexcept { return warm_start_; }

    [[nodiscard]] CsrMatrix system_matrix(const SmallMatrix& a_ext) const;
    [[nodiscard]] std::vector<double> load(const SmallMatrix& a_ext, const SmallVector& p) const;

    /// Throws ConvergenceError when CG fails.
    [[nodiscard]] CorrectorSolution solve(const SmallMatrix& a_ext, const SmallVector& p) const;

    /// Both energy forms for vertex values w (any additive constant).
    [[nodiscard]] EnergyForms energy_forms(std::span<const double> w, const SmallMatrix& a_ext,
                                           const SmallVector& p) const;
    /// int_B w over the ball quadrature points.
    [[nodiscard]] double ball_integral(std::span<const double> w) const;
    /// int_Gamma (A p . n) w on the exact unit sphere, sampled at `samples` points (2D) or at x = +-1 (1D).
    [[nodiscard]] double surface_term(const CorrectorSolution& sol, int samples = 4096) const;
    /// Relative L2(B) distance between grad w and a constant vector.
    [[nodiscard]] double interior_gradient_error(const CorrectorSolution& sol, const SmallVector& expected) const;

    [[nodiscard]] SolveStats stats() const;
    void reset_stats();

    // EnergyModel
    [[nodiscard]] int dim() const override { return disc_.dim; }
    [[nodiscard]] const EllipticityBounds& bounds() const override { return field_.bounds(); }
    [[nodiscard]] SmallMatrix mean_coefficient() const override;
    [[nodiscard]] double energy(const SmallMatrix& a_ext, const SmallVector& p) const override;
    [[nodiscard]] TraceObjective trace_objective(const SmallMatrix& a_ext) const override;
    [[nodiscard]] SmallMatrix g_matrix(const SmallMatrix& a_ext) const override;

private:
    CoefficientField field_;
    Discretization disc_;
    double rel1_threshold_;
    int jobs_ = 1;
    Mesh mesh_;
    DofMap dofs_;
    StiffnessPattern pattern_;
    BallMoments moments_;
    SmallMatrix ball_integral_;
    double ball_volume_ = 0.0;
    std::vector<double> ball_basis_weight_;
    std::vector<double> interior_values_;
    std::vector<std::vector<double>> exterior_values_;

    bool warm_start_ = false;
    mutable std::mutex warm_mutex_;
    mutable std::vector<std::pair<SmallVector, std::vector<double>>> warm_;

    mutable std::mutex stats_mutex_;
    mutable SolveStats stats_;
};

/// Builds the problem and solves once; prefer EmbeddedProblem::solve for repeated solves.
[[nodiscard]] CorrectorSolution solve_embedded(const CoefficientField& field, const SmallMatrix& a_ext,
                                               const SmallVector& p, const Discretization& disc);

/// Flux-form energy J_p(A) of a solution, recomputed from its vertex values.
[[nodiscard]] double energy(const EmbeddedProblem& problem, const CorrectorSolution& sol);

/// G(A) from d(d+1)/2 solves: diagonal J_{e_i}, off-diagonal by polarization.
[[nodiscard]] GMatrix g_matrix(const EmbeddedProblem& problem, const SmallMatrix& a_ext);

/// A0 p = (1/|B|) int_B A(p + grad w_p), one column per solve; not symmetrized.
[[nodiscard]] SmallMatrix naive_a0(const EmbeddedProblem& problem, const SmallMatrix& a_ext);

} // namespace embedhom
