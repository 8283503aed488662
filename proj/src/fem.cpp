#include "embedhom/fem.hpp"

#include "embedhom/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace embedhom {

namespace {

std::array<double, 3> quadrature_position(const Mesh& mesh, int e, const QuadraturePoint& qp)
{
    std::array<double, 3> x{};
    const auto verts = mesh.element(e);
    const auto d = static_cast<std::size_t>(mesh.dim());
    for (std::size_t a = 0; a < verts.size(); ++a) {
        const auto v = mesh.vertex(verts[a]);
        for (std::size_t i = 0; i < d; ++i) {
            x[i] += qp.barycentric[a] * v[i];
        }
    }
    return x;
}

void check_spd(const SmallMatrix& m, std::span<const double> x)
{
    bool ok = m.allFinite() && is_symmetric(m);
    if (ok) {
        Eigen::LLT<SmallMatrix> llt(m);
        ok = llt.info() == Eigen::Success;
    }
    if (!ok) {
        std::ostringstream os;
        os << "coefficient is not symmetric positive definite at x = (";
        for (std::size_t i = 0; i < x.size(); ++i) {
            os << (i ? ", " : "") << x[i];
        }
        os << ")";
        throw InvalidCoefficientError(os.str());
    }
}

} // namespace

DofMap dirichlet_dofs(const Mesh& mesh)
{
    DofMap map;
    map.vertex_to_dof.assign(static_cast<std::size_t>(mesh.num_vertices()), -1);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        if (!mesh.on_boundary(v)) {
            map.vertex_to_dof[static_cast<std::size_t>(v)] = map.num_dofs++;
        }
    }
    return map;
}

DofMap periodic_dofs(const Mesh& mesh, bool pin_first)
{
    const int n = mesh.cells_per_side();
    if (n < 2) {
        throw std::invalid_argument("periodic mesh needs at least two cells per side");
    }
    DofMap map;
    map.vertex_to_dof.assign(static_cast<std::size_t>(mesh.num_vertices()), -1);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const auto [i, j] = mesh.grid_index(v);
        int id = (i % n) + (mesh.dim() == 2 ? n * (j % n) : 0);
        if (pin_first) {
            id = (id == 0) ? -1 : id - 1;
        }
        map.vertex_to_dof[static_cast<std::size_t>(v)] = id;
    }
    const int cells = mesh.dim() == 2 ? n * n : n;
    map.num_dofs = pin_first ? cells - 1 : cells;
    return map;
}

StiffnessPattern::StiffnessPattern(const Mesh& mesh, const DofMap& dofs)
{
    nv_ = static_cast<std::size_t>(mesh.vertices_per_element());
    const int ne = mesh.num_elements();
    const auto rows = static_cast<std::size_t>(dofs.num_dofs);

    // Two-pass fill of candidate columns per row, then sort and compact.
    std::vector<int> count(rows + 1, 0);
    for (int e = 0; e < ne; ++e) {
        for (const int v : mesh.element(e)) {
            const int r = dofs.dof(v);
            if (r >= 0) {
                count[static_cast<std::size_t>(r) + 1] += static_cast<int>(nv_);
            }
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        count[r + 1] += count[r];
    }
    std::vector<int> cand(static_cast<std::size_t>(count[rows]), -1);
    std::vector<int> fill(count.begin(), count.end() - 1);
    for (int e = 0; e < ne; ++e) {
        const auto verts = mesh.element(e);
        for (const int va : verts) {
            const int r = dofs.dof(va);
            if (r < 0) {
                continue;
            }
            for (const int vb : verts) {
                cand[static_cast<std::size_t>(fill[static_cast<std::size_t>(r)]++)] = dofs.dof(vb);
            }
        }
    }

    skeleton_.rows = static_cast<int>(rows);
    skeleton_.row_ptr.assign(rows + 1, 0);
    skeleton_.cols.clear();
    skeleton_.cols.reserve(cand.size() / 2);
    for (std::size_t r = 0; r < rows; ++r) {
        auto begin = cand.begin() + count[r];
        auto end = cand.begin() + count[r + 1];
        std::sort(begin, end);
        int last = -1;
        for (auto it = begin; it != end; ++it) {
            if (*it >= 0 && *it != last) {
                skeleton_.cols.push_back(*it);
                last = *it;
            }
        }
        skeleton_.row_ptr[r + 1] = static_cast<int>(skeleton_.cols.size());
    }
    skeleton_.values.assign(skeleton_.cols.size(), 0.0);

    scatter_.assign(static_cast<std::size_t>(ne) * nv_ * nv_, -1);
    for (int e = 0; e < ne; ++e) {
        const auto verts = mesh.element(e);
        for (std::size_t a = 0; a < nv_; ++a) {
            const int r = dofs.dof(verts[a]);
            if (r < 0) {
                continue;
            }
            const auto row_begin = skeleton_.cols.begin() + skeleton_.row_ptr[static_cast<std::size_t>(r)];
            const auto row_end = skeleton_.cols.begin() + skeleton_.row_ptr[static_cast<std::size_t>(r) + 1];
            for (std::size_t b = 0; b < nv_; ++b) {
                const int c = dofs.dof(verts[b]);
                if (c < 0) {
                    continue;
                }
                const auto it = std::lower_bound(row_begin, row_end, c);
                scatter_[(static_cast<std::size_t>(e) * nv_ + a) * nv_ + b] =
                    static_cast<int>(it - skeleton_.cols.begin());
            }
        }
    }
}

void StiffnessPattern::accumulate(const Mesh& mesh, std::span<const double> moments, std::span<double> values) const
{
    const int d = mesh.dim();
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const ElementGeometry g = mesh.geometry(e);
        const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
            moments.data() + static_cast<std::size_t>(e) * d * d, d, d);
        const GradientMatrix mg = m * g.gradients;
        for (std::size_t a = 0; a < nv_; ++a) {
            for (std::size_t b = 0; b < nv_; ++b) {
                const int s = slot(e, static_cast<int>(a), static_cast<int>(b));
                if (s >= 0) {
                    values[static_cast<std::size_t>(s)] +=
                        g.gradients.col(static_cast<Eigen::Index>(a)).dot(mg.col(static_cast<Eigen::Index>(b)));
                }
            }
        }
    }
}

void StiffnessPattern::accumulate_scaled(const Mesh& mesh, const SmallMatrix& m, std::span<const double> weights,
                                         std::span<double> values) const
{
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double w = weights[static_cast<std::size_t>(e)];
        if (w == 0.0) {
            continue;
        }
        const ElementGeometry g = mesh.geometry(e);
        const GradientMatrix mg = w * m * g.gradients;
        for (std::size_t a = 0; a < nv_; ++a) {
            for (std::size_t b = 0; b < nv_; ++b) {
                const int s = slot(e, static_cast<int>(a), static_cast<int>(b));
                if (s >= 0) {
                    values[static_cast<std::size_t>(s)] +=
                        g.gradients.col(static_cast<Eigen::Index>(a)).dot(mg.col(static_cast<Eigen::Index>(b)));
                }
            }
        }
    }
}

CsrMatrix StiffnessPattern::assemble(const Mesh& mesh, std::span<const double> moments) const
{
    CsrMatrix k = skeleton_;
    accumulate(mesh, moments, k.values);
    return k;
}

std::vector<double> element_moments(const Mesh& mesh, const CompositeCoefficient& coefficient, int quad_order)
{
    const int d = mesh.dim();
    const auto rule = simplex_rule(d, quad_order);
    std::vector<double> out(static_cast<std::size_t>(mesh.num_elements()) * d * d, 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double measure = mesh.element_measure(e);
        double* m = out.data() + static_cast<std::size_t>(e) * d * d;
        for (const auto& qp : rule) {
            const auto x = quadrature_position(mesh, e, qp);
            const std::span<const double> xs(x.data(), static_cast<std::size_t>(d));
            const SmallMatrix a = coefficient(xs);
            if (a.rows() != d || a.cols() != d) {
                throw InvalidCoefficientError("coefficient has the wrong dimension");
            }
            check_spd(a, xs);
            for (int r = 0; r < d; ++r) {
                for (int c = 0; c < d; ++c) {
                    m[r * d + c] += qp.weight * measure * a(r, c);
                }
            }
        }
    }
    return out;
}

CsrMatrix assemble_system(const Mesh& mesh, const DofMap& dofs, const CompositeCoefficient& coefficient,
                          int quad_order)
{
    const StiffnessPattern pattern(mesh, dofs);
    return pattern.assemble(mesh, element_moments(mesh, coefficient, quad_order));
}

bool in_unit_ball(std::span<const double> x)
{
    double r2 = 0.0;
    for (const double c : x) {
        r2 += c * c;
    }
    return r2 <= 1.0;
}

BallMoments ball_moments(const Mesh& mesh, const CoefficientField& field, int quad_order)
{
    const int d = mesh.dim();
    if (field.dim() != d) {
        throw std::invalid_argument("ball_moments: field and mesh dimensions differ");
    }
    const auto rule = simplex_rule(d, quad_order);
    const auto ne = static_cast<std::size_t>(mesh.num_elements());
    BallMoments bm;
    bm.dim = d;
    bm.ball_moment.assign(ne * d * d, 0.0);
    bm.ball_measure.assign(ne, 0.0);
    bm.ext_measure.assign(ne, 0.0);
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double measure = mesh.element_measure(e);
        const auto ue = static_cast<std::size_t>(e);
        for (const auto& qp : rule) {
            const auto x = quadrature_position(mesh, e, qp);
            const std::span<const double> xs(x.data(), static_cast<std::size_t>(d));
            const double w = qp.weight * measure;
            if (!in_unit_ball(xs)) {
                bm.ext_measure[ue] += w;
                continue;
            }
            bm.ball_measure[ue] += w;
            const SmallMatrix a = field.eval(xs);
            double* m = bm.ball_moment.data() + ue * d * d;
            for (int r = 0; r < d; ++r) {
                for (int c = 0; c < d; ++c) {
                    m[r * d + c] += w * a(r, c);
                }
            }
        }
    }
    return bm;
}

std::vector<double> assemble_load(const Mesh& mesh, const DofMap& dofs, const BallMoments& moments,
                                  const SmallMatrix& a_ext, const SmallVector& p)
{
    std::vector<double> f(static_cast<std::size_t>(dofs.num_dofs), 0.0);
    const SmallVector ap = a_ext * p;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double mb = moments.ball_measure[static_cast<std::size_t>(e)];
        if (mb == 0.0) {
            continue;
        }
        const SmallVector flux = moments.moment(e) * p - mb * ap;
        const ElementGeometry g = mesh.geometry(e);
        const auto verts = mesh.element(e);
        for (std::size_t a = 0; a < verts.size(); ++a) {
            const int i = dofs.dof(verts[a]);
            if (i >= 0) {
                f[static_cast<std::size_t>(i)] -= g.gradients.col(static_cast<Eigen::Index>(a)).dot(flux);
            }
        }
    }
    return f;
}

std::vector<double> assemble_load(const Mesh& mesh, const DofMap& dofs, const CoefficientField& field,
                                  const SmallMatrix& a_ext, const SmallVector& p, int quad_order)
{
    return assemble_load(mesh, dofs, ball_moments(mesh, field, quad_order), a_ext, p);
}

double integrate(const Mesh& mesh, const QuadratureIntegrand& integrand, Region region, int quad_order)
{
    const int d = mesh.dim();
    const auto rule = simplex_rule(d, quad_order);
    double total = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
        const double measure = mesh.element_measure(e);
        double local = 0.0;
        for (const auto& qp : rule) {
            const auto x = quadrature_position(mesh, e, qp);
            const std::span<const double> xs(x.data(), static_cast<std::size_t>(d));
            const bool inside = in_unit_ball(xs);
            if ((region == Region::ball && !inside) || (region == Region::exterior && inside)) {
                continue;
            }
            local += qp.weight * integrand(xs, e);
        }
        total += measure * local;
    }
    return total;
}

std::vector<double> expand_to_vertices(const Mesh& mesh, const DofMap& dofs, std::span<const double> dof_values)
{
    std::vector<double> out(static_cast<std::size_t>(mesh.num_vertices()), 0.0);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const int i = dofs.dof(v);
        if (i >= 0) {
            out[static_cast<std::size_t>(v)] = dof_values[static_cast<std::size_t>(i)];
        }
    }
    return out;
}

SmallVector element_gradient(const Mesh& mesh, int e, std::span<const double> nodal)
{
    const ElementGeometry g = mesh.geometry(e);
    const auto verts = mesh.element(e);
    SmallVector grad = SmallVector::Zero(mesh.dim());
    for (std::size_t a = 0; a < verts.size(); ++a) {
        grad += nodal[static_cast<std::size_t>(verts[a])] * g.gradients.col(static_cast<Eigen::Index>(a));
    }
    return grad;
}

double interpolate(const Mesh& mesh, std::span<const double> nodal, std::span<const double> x)
{
    const PointLocation loc = mesh.locate(x);
    const auto verts = mesh.element(loc.element);
    double value = 0.0;
    for (std::size_t a = 0; a < verts.size(); ++a) {
        value += loc.barycentric[a] * nodal[static_cast<std::size_t>(verts[a])];
    }
    return value;
}

} // namespace embedhom
