#include "embedhom/mesh.hpp"

#include <Eigen/Dense>

#include "embedhom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace embedhom {

void Discretization::validate() const
{
    if (dim != 1 && dim != 2) {
        throw std::invalid_argument("discretization: dim must be 1 or 2 for the finite element solver");
    }
    if (!(L >= 2.0) || !std::isfinite(L)) {
        throw std::invalid_argument("discretization: L must be >= 2 (unit ball must be strictly interior)");
    }
    if (!(h > 0.0) || !std::isfinite(h)) {
        throw std::invalid_argument("discretization: h must be positive");
    }
    if (!(cg_tol > 0.0 && cg_tol < 1.0)) {
        throw std::invalid_argument("discretization: cg_tol must lie in (0, 1)");
    }
    if (quad_order < 1 || quad_order > 16) {
        throw std::invalid_argument("discretization: quad_order must lie in [1, 16]");
    }
    if (cg_max_iter < 0) {
        throw std::invalid_argument("discretization: cg_max_iter must be >= 0");
    }
}

int Discretization::cells_per_side() const
{
    // The small relative slack absorbs representation error in ratios such as 16 / 0.02.
    return std::max(1, static_cast<int>(std::ceil(2.0 * L / h * (1.0 - 1e-12))));
}

int Discretization::resolved_cg_max_iter(std::size_t num_dofs) const
{
    if (cg_max_iter > 0) {
        return cg_max_iter;
    }
    return static_cast<int>(20.0 * std::sqrt(static_cast<double>(num_dofs))) + 1000;
}

Mesh Mesh::box(int dim, double lower, double upper, int n, std::size_t max_vertices)
{
    if (dim != 1 && dim != 2) {
        throw std::invalid_argument("mesh: only d = 1 and d = 2 are supported");
    }
    if (n < 1 || !(upper > lower)) {
        throw std::invalid_argument("mesh: need at least one cell and a non-empty box");
    }
    const double nv_side = static_cast<double>(n) + 1.0;
    const double nv_total = dim == 1 ? nv_side : nv_side * nv_side;
    if (nv_total > static_cast<double>(max_vertices)) {
        std::ostringstream os;
        os << "mesh would have " << static_cast<std::size_t>(nv_total) << " vertices, above the cap of "
           << max_vertices;
        throw MemoryGuardError(os.str());
    }

    Mesh m;
    m.dim_ = dim;
    m.n_ = n;
    m.lower_ = lower;
    m.upper_ = upper;

    // Symmetric placement: coordinate i is center + half * (2i - n) / n, exact at both ends.
    const double center = 0.5 * (lower + upper);
    const double half = 0.5 * (upper - lower);
    std::vector<double> line(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) {
        line[static_cast<std::size_t>(i)] = center + half * static_cast<double>(2 * i - n) / n;
    }
    line.front() = lower;
    line.back() = upper;

    if (dim == 1) {
        m.coords_ = line;
        m.boundary_.assign(line.size(), 0);
        m.boundary_.front() = 1;
        m.boundary_.back() = 1;
        m.elements_.reserve(2 * static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            m.elements_.push_back(i);
            m.elements_.push_back(i + 1);
        }
        return m;
    }

    const auto side = static_cast<std::size_t>(n) + 1;
    m.coords_.resize(2 * side * side);
    m.boundary_.assign(side * side, 0);
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i <= n; ++i) {
            const auto v = static_cast<std::size_t>(m.vertex_at(i, j));
            m.coords_[2 * v] = line[static_cast<std::size_t>(i)];
            m.coords_[2 * v + 1] = line[static_cast<std::size_t>(j)];
            m.boundary_[v] = (i == 0 || j == 0 || i == n || j == n) ? 1 : 0;
        }
    }
    m.elements_.reserve(6 * static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int v00 = m.vertex_at(i, j);
            const int v10 = m.vertex_at(i + 1, j);
            const int v01 = m.vertex_at(i, j + 1);
            const int v11 = m.vertex_at(i + 1, j + 1);
            if ((i + j) % 2 == 0) {
                m.elements_.insert(m.elements_.end(), {v00, v10, v11, v00, v11, v01});
            } else {
                m.elements_.insert(m.elements_.end(), {v00, v10, v01, v10, v11, v01});
            }
        }
    }
    return m;
}

std::vector<int> Mesh::boundary_vertices() const
{
    std::vector<int> out;
    for (int v = 0; v < num_vertices(); ++v) {
        if (on_boundary(v)) {
            out.push_back(v);
        }
    }
    return out;
}

std::array<int, 2> Mesh::grid_index(int v) const
{
    if (dim_ == 1) {
        return {v, 0};
    }
    return {v % (n_ + 1), v / (n_ + 1)};
}

ElementGeometry Mesh::geometry(int e) const
{
    const auto verts = element(e);
    ElementGeometry g;
    if (dim_ == 1) {
        const double x0 = vertex(verts[0])[0];
        const double x1 = vertex(verts[1])[0];
        const double len = x1 - x0;
        g.measure = std::abs(len);
        g.gradients.resize(1, 2);
        g.gradients(0, 0) = -1.0 / len;
        g.gradients(0, 1) = 1.0 / len;
        return g;
    }
    const auto p0 = vertex(verts[0]);
    const auto p1 = vertex(verts[1]);
    const auto p2 = vertex(verts[2]);
    Eigen::Matrix2d jac;
    jac << p1[0] - p0[0], p2[0] - p0[0], p1[1] - p0[1], p2[1] - p0[1];
    const double det = jac.determinant();
    g.measure = 0.5 * std::abs(det);
    const Eigen::Matrix2d inv_t = jac.inverse().transpose();
    g.gradients.resize(2, 3);
    g.gradients.col(1) = inv_t.col(0);
    g.gradients.col(2) = inv_t.col(1);
    g.gradients.col(0) = -(inv_t.col(0) + inv_t.col(1));
    return g;
}

PointLocation Mesh::locate(std::span<const double> x) const
{
    const double hx = spacing();
    auto cell = [&](double c) {
        const int i = static_cast<int>(std::floor((c - lower_) / hx));
        return std::clamp(i, 0, n_ - 1);
    };
    PointLocation loc;
    if (dim_ == 1) {
        const int i = cell(x[0]);
        loc.element = i;
        const double x0 = vertex(i)[0];
        const double x1 = vertex(i + 1)[0];
        const double t = std::clamp((x[0] - x0) / (x1 - x0), 0.0, 1.0);
        loc.barycentric = {1.0 - t, t, 0.0, 0.0};
        return loc;
    }
    const int i = cell(x[0]);
    const int j = cell(x[1]);
    const auto base = vertex(vertex_at(i, j));
    const double s = std::clamp((x[0] - base[0]) / hx, 0.0, 1.0);
    const double t = std::clamp((x[1] - base[1]) / hx, 0.0, 1.0);
    const int first = 2 * (i + n_ * j);
    if ((i + j) % 2 == 0) {
        // (v00, v10, v11) below the diagonal, (v00, v11, v01) above
        if (s >= t) {
            loc.element = first;
            loc.barycentric = {1.0 - s, s - t, t, 0.0};
        } else {
            loc.element = first + 1;
            loc.barycentric = {1.0 - t, s, t - s, 0.0};
        }
    } else {
        // (v00, v10, v01) below the anti-diagonal, (v10, v11, v01) above
        if (s + t <= 1.0) {
            loc.element = first;
            loc.barycentric = {1.0 - s - t, s, t, 0.0};
        } else {
            loc.element = first + 1;
            loc.barycentric = {1.0 - t, s + t - 1.0, 1.0 - s, 0.0};
        }
    }
    return loc;
}

Mesh build_mesh(const Discretization& disc)
{
    disc.validate();
    return Mesh::box(disc.dim, -disc.L, disc.L, disc.cells_per_side(), disc.max_vertices);
}

std::vector<QuadraturePoint> simplex_rule(int dim, int order)
{
    if (order < 1) {
        throw std::invalid_argument("quadrature order must be >= 1");
    }
    std::vector<QuadraturePoint> rule;
    if (dim == 1) {
        for (int k = 0; k < order; ++k) {
            const double t = (k + 0.5) / order;
            rule.push_back({{1.0 - t, t, 0.0, 0.0}, 1.0 / order});
        }
        return rule;
    }
    if (dim != 2) {
        throw std::invalid_argument("quadrature: only d = 1 and d = 2 are supported");
    }
    if (order == 1) {
        rule.push_back({{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0}, 1.0});
        return rule;
    }
    if (order == 2) {
        const double a = 2.0 / 3;
        const double b = 1.0 / 6;
        rule.push_back({{a, b, b, 0.0}, 1.0 / 3});
        rule.push_back({{b, a, b, 0.0}, 1.0 / 3});
        rule.push_back({{b, b, a, 0.0}, 1.0 / 3});
        return rule;
    }
    const int m = order;
    const double w = 1.0 / (static_cast<double>(m) * m);
    auto push = [&](double l1, double l2) { rule.push_back({{1.0 - l1 - l2, l1, l2, 0.0}, w}); };
    for (int i = 0; i < m; ++i) {
        for (int j = 0; i + j < m; ++j) {
            push((i + 1.0 / 3) / m, (j + 1.0 / 3) / m);
            if (i + j < m - 1) {
                push((i + 2.0 / 3) / m, (j + 2.0 / 3) / m);
            }
        }
    }
    return rule;
}

} // namespace embedhom
