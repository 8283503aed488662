#include "embedhom/reference.hpp"

#include "embedhom/errors.hpp"
#include "embedhom/fem.hpp"
#include "embedhom/sparse.hpp"

#include <cmath>
#include <stdexcept>

namespace embedhom {

namespace {

void require_1d(const CoefficientField& field)
{
    if (field.dim() != 1) {
        throw std::invalid_argument("one-dimensional field required");
    }
}

template <class Fn>
double integrate_pieces(const CoefficientField& field, double a, double b, Fn&& fn)
{
    if (!(b > a)) {
        throw std::invalid_argument("empty interval");
    }
    std::vector<double> points{a};
    for (const double x : field.breakpoints_1d(a, b)) {
        points.push_back(x);
    }
    points.push_back(b);
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        const double mid = 0.5 * (points[i] + points[i + 1]);
        const double value = field.eval(std::span<const double>(&mid, 1))(0, 0);
        if (!(value > 0.0)) {
            throw InvalidCoefficientError("one-dimensional field has a non-positive value");
        }
        total += (points[i + 1] - points[i]) * fn(value);
    }
    return total;
}

} // namespace

double harmonic_mean_1d(const CoefficientField& field, double a, double b)
{
    require_1d(field);
    return (b - a) / integrate_pieces(field, a, b, [](double v) { return 1.0 / v; });
}

double arithmetic_mean_1d(const CoefficientField& field, double a, double b)
{
    require_1d(field);
    return integrate_pieces(field, a, b, [](double v) { return v; }) / (b - a);
}

double analytic_j_1d(const CoefficientField& field, double a_ext, double p)
{
    const double h = harmonic_mean_1d(field);
    return p * p * (2.0 * a_ext - a_ext * a_ext / h);
}

OneDimAnalyticModel::OneDimAnalyticModel(const CoefficientField& field)
    : bounds_(field.bounds()), harmonic_(harmonic_mean_1d(field)), arithmetic_(arithmetic_mean_1d(field))
{
}

SmallMatrix OneDimAnalyticModel::mean_coefficient() const
{
    return SmallMatrix::Constant(1, 1, arithmetic_);
}

double OneDimAnalyticModel::energy(const SmallMatrix& a_ext, const SmallVector& p) const
{
    const double a = a_ext(0, 0);
    return p(0) * p(0) * (2.0 * a - a * a / harmonic_);
}

TraceObjective OneDimAnalyticModel::trace_objective(const SmallMatrix& a_ext) const
{
    const double a = a_ext(0, 0);
    TraceObjective out;
    out.value = 2.0 * a - a * a / harmonic_;
    out.gradient = SmallMatrix::Constant(1, 1, 2.0 - 2.0 * a / harmonic_);
    out.energies = {out.value};
    return out;
}

SmallMatrix OneDimAnalyticModel::g_matrix(const SmallMatrix& a_ext) const
{
    return SmallMatrix::Constant(1, 1, energy(a_ext, SmallVector::Ones(1)));
}

double eshelby_contrast(double alpha, double gamma, int dim)
{
    if (!(alpha > 0.0) || !(gamma > 0.0) || dim < 1) {
        throw std::invalid_argument("eshelby_contrast needs positive moduli");
    }
    return (gamma - alpha) / ((dim - 1) * gamma + alpha);
}

PointValue eshelby_corrector(double alpha, double gamma, const SmallVector& p, const SmallVector& x)
{
    const int d = static_cast<int>(x.size());
    const double c = eshelby_contrast(alpha, gamma, d);
    const double r2 = x.squaredNorm();
    if (r2 <= 1.0) {
        return {c * p.dot(x), c * p};
    }
    const double rd = std::pow(r2, 0.5 * d);
    const double px = p.dot(x);
    PointValue out;
    out.value = c * px / rd;
    out.gradient = c * (p / rd - d * px / (rd * r2) * x);
    return out;
}

EshelbyTrace eshelby_trace_g(double alpha, double gamma, int dim)
{
    const double c = eshelby_contrast(alpha, gamma, dim);
    EshelbyTrace out;
    out.trace_over_d = alpha + (alpha - gamma) * c;
    out.f_alpha = (alpha - gamma) * dim * gamma / ((dim - 1) * gamma + alpha);
    return out;
}

PeriodicResult periodic_effective(const CoefficientField& field, double R, const Discretization& disc)
{
    if (!(R > 0.0)) {
        throw std::invalid_argument("periodic_effective: R must be positive");
    }
    if (!(disc.h > 0.0) || disc.h > 0.5) {
        throw std::invalid_argument("periodic_effective: h must lie in (0, 1/2]");
    }
    const int d = field.dim();
    const int n = static_cast<int>(std::ceil((1.0 / disc.h) * (1.0 - 1e-12)));
    const Mesh mesh = Mesh::box(d, -0.5, 0.5, n, disc.max_vertices);
    const DofMap dofs = periodic_dofs(mesh, true);
    const CoefficientField scaled = rescale(field, R);
    const auto moments = element_moments(
        mesh, [&](std::span<const double> x) { return scaled.eval(x); }, disc.quad_order);
    const StiffnessPattern pattern(mesh, dofs);
    const CsrMatrix k = pattern.assemble(mesh, moments);
    const CgOptions opts{disc.cg_tol, disc.resolved_cg_max_iter(static_cast<std::size_t>(dofs.num_dofs))};

    SmallMatrix total = SmallMatrix::Zero(d, d);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        total += Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            moments.data() + static_cast<std::size_t>(e) * d * d, d, d);
    }

    PeriodicResult out;
    out.raw = SmallMatrix::Zero(d, d);
    for (int i = 0; i < d; ++i) {
        const SmallVector p = unit_vector(d, i);
        std::vector<double> f(static_cast<std::size_t>(dofs.num_dofs), 0.0);
        for (int e = 0; e < mesh.num_elements(); ++e) {
            const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
                moments.data() + static_cast<std::size_t>(e) * d * d, d, d);
            const SmallVector mp = m * p;
            const ElementGeometry g = mesh.geometry(e);
            const auto verts = mesh.element(e);
            for (std::size_t a = 0; a < verts.size(); ++a) {
                const int dof = dofs.dof(verts[a]);
                if (dof >= 0) {
                    f[static_cast<std::size_t>(dof)] -= g.gradients.col(static_cast<Eigen::Index>(a)).dot(mp);
                }
            }
        }
        const CgResult cg = solve_cg(k, f, opts);
        out.cg_iterations = std::max(out.cg_iterations, cg.iterations);
        // Values on every vertex through the periodic identification; the pinned one is zero.
        std::vector<double> nodal(static_cast<std::size_t>(mesh.num_vertices()), 0.0);
        for (int v = 0; v < mesh.num_vertices(); ++v) {
            const int dof = dofs.dof(v);
            if (dof >= 0) {
                nodal[static_cast<std::size_t>(v)] = cg.x[static_cast<std::size_t>(dof)];
            }
        }
        SmallVector col = total * p;
        for (int e = 0; e < mesh.num_elements(); ++e) {
            const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
                moments.data() + static_cast<std::size_t>(e) * d * d, d, d);
            col += m * element_gradient(mesh, e, nodal);
        }
        out.raw.col(i) = col;
    }
    out.asymmetry = (out.raw - out.raw.transpose()).norm();
    out.matrix = 0.5 * (out.raw + out.raw.transpose());
    return out;
}

} // namespace embedhom
