#include "embedhom/embedded_corrector.hpp"

#include "embedhom/errors.hpp"
#include "embedhom/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace embedhom {

namespace {

Discretization checked(const Discretization& disc, const CoefficientField& field)
{
    disc.validate();
    if (field.dim() != disc.dim) {
        throw std::invalid_argument("field dimension does not match the discretization");
    }
    return disc;
}

void check_exterior(const SmallMatrix& a_ext, int d)
{
    if (a_ext.rows() != d || a_ext.cols() != d || !a_ext.allFinite()) {
        throw std::invalid_argument("exterior matrix has the wrong shape");
    }
    const SmallMatrix sym = 0.5 * (a_ext + a_ext.transpose());
    if (!is_symmetric(a_ext, 1e-10) || spectrum_range(sym).first <= 0.0) {
        throw InvalidCoefficientError("exterior matrix must be symmetric positive definite");
    }
}

} // namespace

EmbeddedProblem::EmbeddedProblem(CoefficientField field, const Discretization& disc, double rel1_threshold)
    : field_(std::move(field)),
      disc_(checked(disc, field_)),
      rel1_threshold_(rel1_threshold),
      mesh_(build_mesh(disc_)),
      dofs_(dirichlet_dofs(mesh_)),
      pattern_(mesh_, dofs_),
      moments_(ball_moments(mesh_, field_, disc_.quad_order))
{
    const int d = disc_.dim;
    const auto ne = static_cast<std::size_t>(mesh_.num_elements());
    const auto nv = static_cast<std::size_t>(mesh_.vertices_per_element());

    ball_integral_ = SmallMatrix::Zero(d, d);
    for (std::size_t e = 0; e < ne; ++e) {
        ball_volume_ += moments_.ball_measure[e];
        ball_integral_ += moments_.moment(static_cast<int>(e));
    }
    if (ball_volume_ <= 0.0) {
        throw GeometryError("no quadrature point falls inside the unit ball");
    }

    // Integrals of each basis function over the ball part of each element.
    const auto rule = simplex_rule(d, disc_.quad_order);
    ball_basis_weight_.assign(ne * nv, 0.0);
    for (std::size_t e = 0; e < ne; ++e) {
        if (moments_.ball_measure[e] == 0.0) {
            continue;
        }
        const auto verts = mesh_.element(static_cast<int>(e));
        const double measure = mesh_.element_measure(static_cast<int>(e));
        for (const auto& qp : rule) {
            std::array<double, 3> x{};
            for (std::size_t a = 0; a < nv; ++a) {
                const auto v = mesh_.vertex(verts[a]);
                for (int i = 0; i < d; ++i) {
                    x[static_cast<std::size_t>(i)] += qp.barycentric[a] * v[static_cast<std::size_t>(i)];
                }
            }
            if (!in_unit_ball(std::span<const double>(x.data(), static_cast<std::size_t>(d)))) {
                continue;
            }
            for (std::size_t a = 0; a < nv; ++a) {
                ball_basis_weight_[e * nv + a] += qp.weight * measure * qp.barycentric[a];
            }
        }
    }

    interior_values_.assign(pattern_.skeleton().values.size(), 0.0);
    pattern_.accumulate(mesh_, moments_.ball_moment, interior_values_);
    for (int r = 0; r < d; ++r) {
        for (int c = r; c < d; ++c) {
            SmallMatrix basis = SmallMatrix::Zero(d, d);
            basis(r, c) = 1.0;
            basis(c, r) = 1.0;
            std::vector<double> values(interior_values_.size(), 0.0);
            pattern_.accumulate_scaled(mesh_, basis, moments_.ext_measure, values);
            exterior_values_.push_back(std::move(values));
        }
    }
}

CsrMatrix EmbeddedProblem::system_matrix(const SmallMatrix& a_ext) const
{
    const int d = disc_.dim;
    check_exterior(a_ext, d);
    CsrMatrix k = pattern_.skeleton();
    k.values = interior_values_;
    std::size_t component = 0;
    for (int r = 0; r < d; ++r) {
        for (int c = r; c < d; ++c) {
            const double coef = r == c ? a_ext(r, r) : 0.5 * (a_ext(r, c) + a_ext(c, r));
            const auto& part = exterior_values_[component++];
            for (std::size_t s = 0; s < part.size(); ++s) {
                k.values[s] += coef * part[s];
            }
        }
    }
    return k;
}

std::vector<double> EmbeddedProblem::load(const SmallMatrix& a_ext, const SmallVector& p) const
{
    return assemble_load(mesh_, dofs_, moments_, a_ext, p);
}

CorrectorSolution EmbeddedProblem::solve(const SmallMatrix& a_ext, const SmallVector& p) const
{
    if (p.size() != disc_.dim) {
        throw std::invalid_argument("direction has the wrong dimension");
    }
    const CsrMatrix k = system_matrix(a_ext);
    const std::vector<double> f = load(a_ext, p);
    const CgOptions opts{disc_.cg_tol, disc_.resolved_cg_max_iter(static_cast<std::size_t>(dofs_.num_dofs))};
    std::vector<double> guess;
    if (warm_start_) {
        const std::lock_guard lock(warm_mutex_);
        for (const auto& [dir, x] : warm_) {
            if (dir == p) {
                guess = x;
            }
        }
    }
    const CgResult cg = solve_cg(k, f, opts, guess);
    if (warm_start_) {
        const std::lock_guard lock(warm_mutex_);
        auto it = std::find_if(warm_.begin(), warm_.end(), [&](const auto& entry) { return entry.first == p; });
        if (it == warm_.end()) {
            warm_.emplace_back(p, cg.x);
        } else {
            it->second = cg.x;
        }
    }

    CorrectorSolution sol;
    sol.p = p;
    sol.a_ext = a_ext;
    sol.disc = disc_;
    sol.cg_iterations = cg.iterations;
    sol.cg_residual = cg.relative_residual;
    sol.w = expand_to_vertices(mesh_, dofs_, cg.x);
    sol.mean_shift = ball_integral(sol.w) / ball_volume_;
    for (double& value : sol.w) {
        value -= sol.mean_shift;
    }
    const EnergyForms forms = energy_forms(sol.w, a_ext, p);
    sol.energy_j = forms.flux_form;
    sol.energy_j3 = forms.energy_form;
    sol.residual_rel1 = std::abs(forms.flux_form - forms.energy_form) / (1.0 + std::abs(forms.flux_form));
    sol.energy_warning = sol.residual_rel1 > rel1_threshold_;

    const std::lock_guard lock(stats_mutex_);
    ++stats_.solves;
    stats_.max_residual_rel1 = std::max(stats_.max_residual_rel1, sol.residual_rel1);
    stats_.max_cg_iterations = std::max(stats_.max_cg_iterations, sol.cg_iterations);
    stats_.warnings += sol.energy_warning ? 1U : 0U;
    return sol;
}

EnergyForms EmbeddedProblem::energy_forms(std::span<const double> w, const SmallMatrix& a_ext,
                                          const SmallVector& p) const
{
    const SmallVector ap = a_ext * p;
    const double interior = p.dot(ball_integral_ * p);
    double flux = interior;
    double energy = interior;
    for (int e = 0; e < mesh_.num_elements(); ++e) {
        const auto ue = static_cast<std::size_t>(e);
        const double mb = moments_.ball_measure[ue];
        const double mx = moments_.ext_measure[ue];
        const SmallVector g = element_gradient(mesh_, e, w);
        if (mb > 0.0) {
            const auto s = moments_.moment(e);
            flux += p.dot(s * g) - mb * ap.dot(g);
            energy -= g.dot(s * g);
        }
        if (mx > 0.0) {
            energy -= mx * g.dot(a_ext * g);
        }
    }
    return {flux / ball_volume_, energy / ball_volume_};
}

double EmbeddedProblem::ball_integral(std::span<const double> w) const
{
    const auto nv = static_cast<std::size_t>(mesh_.vertices_per_element());
    double total = 0.0;
    for (int e = 0; e < mesh_.num_elements(); ++e) {
        const auto ue = static_cast<std::size_t>(e);
        if (moments_.ball_measure[ue] == 0.0) {
            continue;
        }
        const auto verts = mesh_.element(e);
        for (std::size_t a = 0; a < nv; ++a) {
            total += ball_basis_weight_[ue * nv + a] * w[static_cast<std::size_t>(verts[a])];
        }
    }
    return total;
}

double EmbeddedProblem::surface_term(const CorrectorSolution& sol, int samples) const
{
    const SmallVector ap = sol.a_ext * sol.p;
    if (disc_.dim == 1) {
        const double right = 1.0;
        const double left = -1.0;
        return ap(0) * (interpolate(mesh_, sol.w, std::span<const double>(&right, 1)) -
                        interpolate(mesh_, sol.w, std::span<const double>(&left, 1)));
    }
    if (samples < 4) {
        throw std::invalid_argument("surface_term needs at least four samples");
    }
    const double dtheta = 2.0 * std::numbers::pi / samples;
    double total = 0.0;
    for (int k = 0; k < samples; ++k) {
        const double theta = (k + 0.5) * dtheta;
        const std::array<double, 2> x{std::cos(theta), std::sin(theta)};
        total += (ap(0) * x[0] + ap(1) * x[1]) * interpolate(mesh_, sol.w, x);
    }
    return total * dtheta;
}

double EmbeddedProblem::interior_gradient_error(const CorrectorSolution& sol, const SmallVector& expected) const
{
    double err = 0.0;
    for (int e = 0; e < mesh_.num_elements(); ++e) {
        const double mb = moments_.ball_measure[static_cast<std::size_t>(e)];
        if (mb > 0.0) {
            err += mb * (element_gradient(mesh_, e, sol.w) - expected).squaredNorm();
        }
    }
    const double scale = ball_volume_ * expected.squaredNorm();
    return scale > 0.0 ? std::sqrt(err / scale) : std::sqrt(err / ball_volume_);
}

void EmbeddedProblem::set_warm_start(bool enabled)
{
    const std::lock_guard lock(warm_mutex_);
    warm_start_ = enabled;
    warm_.clear();
}

SolveStats EmbeddedProblem::stats() const
{
    const std::lock_guard lock(stats_mutex_);
    return stats_;
}

void EmbeddedProblem::reset_stats()
{
    const std::lock_guard lock(stats_mutex_);
    stats_ = {};
}

SmallMatrix EmbeddedProblem::mean_coefficient() const
{
    return ball_integral_ / ball_volume_;
}

double EmbeddedProblem::energy(const SmallMatrix& a_ext, const SmallVector& p) const
{
    return solve(a_ext, p).energy_j;
}

TraceObjective EmbeddedProblem::trace_objective(const SmallMatrix& a_ext) const
{
    const int d = disc_.dim;
    std::vector<CorrectorSolution> sols(static_cast<std::size_t>(d));
    parallel_for(sols.size(), jobs_, [&](std::size_t i) {
        sols[i] = solve(a_ext, unit_vector(d, static_cast<int>(i)));
    });

    TraceObjective out;
    out.gradient = SmallMatrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        const auto& sol = sols[static_cast<std::size_t>(i)];
        out.value += sol.energy_j;
        out.energies.push_back(sol.energy_j);
        for (int e = 0; e < mesh_.num_elements(); ++e) {
            const auto ue = static_cast<std::size_t>(e);
            const double mb = moments_.ball_measure[ue];
            const double mx = moments_.ext_measure[ue];
            if (mb == 0.0 && mx == 0.0) {
                continue;
            }
            const SmallVector g = element_gradient(mesh_, e, sol.w);
            if (mx > 0.0) {
                out.gradient += mx * g * g.transpose();
            }
            if (mb > 0.0) {
                out.gradient.col(i) -= mb * g;
                out.gradient.row(i) -= mb * g.transpose();
            }
        }
    }
    out.gradient /= ball_volume_;
    return out;
}

SmallMatrix EmbeddedProblem::g_matrix(const SmallMatrix& a_ext) const
{
    return embedhom::g_matrix(*this, a_ext).entries;
}

CorrectorSolution solve_embedded(const CoefficientField& field, const SmallMatrix& a_ext, const SmallVector& p,
                                 const Discretization& disc)
{
    return EmbeddedProblem(field, disc).solve(a_ext, p);
}

double energy(const EmbeddedProblem& problem, const CorrectorSolution& sol)
{
    return problem.energy_forms(sol.w, sol.a_ext, sol.p).flux_form;
}

GMatrix g_matrix(const EmbeddedProblem& problem, const SmallMatrix& a_ext)
{
    const int d = problem.dim();
    std::vector<SmallVector> directions;
    for (int i = 0; i < d; ++i) {
        directions.push_back(unit_vector(d, i));
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            directions.push_back(unit_vector(d, i) + unit_vector(d, j));
        }
    }
    std::vector<double> energies(directions.size());
    parallel_for(directions.size(), problem.jobs(), [&](std::size_t k) {
        energies[k] = problem.solve(a_ext, directions[k]).energy_j;
    });

    GMatrix out;
    out.a_ext = a_ext;
    out.energies = energies;
    out.entries = SmallMatrix::Zero(d, d);
    std::size_t k = static_cast<std::size_t>(d);
    for (int i = 0; i < d; ++i) {
        out.entries(i, i) = energies[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            const double v = 0.5 * (energies[k++] - energies[static_cast<std::size_t>(i)] -
                                    energies[static_cast<std::size_t>(j)]);
            out.entries(i, j) = v;
            out.entries(j, i) = v;
        }
    }
    return out;
}

SmallMatrix naive_a0(const EmbeddedProblem& problem, const SmallMatrix& a_ext)
{
    const int d = problem.dim();
    const Mesh& mesh = problem.mesh();
    const BallMoments& moments = problem.moments();
    const SmallMatrix mean = problem.mean_coefficient();
    SmallMatrix a0(d, d);
    for (int i = 0; i < d; ++i) {
        const CorrectorSolution sol = problem.solve(a_ext, unit_vector(d, i));
        SmallVector flux = SmallVector::Zero(d);
        for (int e = 0; e < mesh.num_elements(); ++e) {
            if (moments.ball_measure[static_cast<std::size_t>(e)] > 0.0) {
                flux += moments.moment(e) * element_gradient(mesh, e, sol.w);
            }
        }
        a0.col(i) = mean.col(i) + flux / problem.ball_volume();
    }
    return a0;
}

} // namespace embedhom
