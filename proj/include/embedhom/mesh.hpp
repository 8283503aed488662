#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace embedhom {

/// Truncated computational box [-L, L]^d and solver settings.
struct Discretization {
    int dim = 2;
    /// Truncation half-width; the unit ball must be strictly interior.
    double L = 5.0;
    double h = 0.05;
    int quad_order = 2;
    double cg_tol = 1e-10;
    /// 0 selects 20 sqrt(#dof) + 1000.
    int cg_max_iter = 0;
    std::size_t max_vertices = 12'000'000;

    /// Throws std::invalid_argument on violated constraints.
    void validate() const;
    /// Number of cells per side, ceil(2L/h), so that the spacing never exceeds h.
    [[nodiscard]] int cells_per_side() const;
    [[nodiscard]] int resolved_cg_max_iter(std::size_t num_dofs) const;
};

/// Gradients of the d+1 barycentric basis functions (one column each).
using GradientMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 4>;

struct ElementGeometry {
    double measure = 0.0;
    GradientMatrix gradients;
};

struct PointLocation {
    int element = -1;
    std::array<double, 4> barycentric{};
};

/// Structured simplicial mesh of a cube [lower, upper]^d, d in {1, 2}.
///
/// In 2D every grid cell is split along a diagonal whose orientation alternates
/// with the parity of i + j, so the triangulation has no preferred direction.
class Mesh {
public:
    static Mesh box(int dim, double lower, double upper, int cells_per_side, std::size_t max_vertices);

    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] int cells_per_side() const noexcept { return n_; }
    [[nodiscard]] double lower() const noexcept { return lower_; }
    [[nodiscard]] double upper() const noexcept { return upper_; }
    [[nodiscard]] double spacing() const noexcept { return (upper_ - lower_) / n_; }

    [[nodiscard]] int num_vertices() const noexcept { return static_cast<int>(coords_.size()) / dim_; }
    [[nodiscard]] int num_elements() const noexcept
    {
        return static_cast<int>(elements_.size()) / vertices_per_element();
    }
    [[nodiscard]] int vertices_per_element() const noexcept { return dim_ + 1; }

    [[nodiscard]] std::span<const double> vertex(int v) const
    {
        return {coords_.data() + static_cast<std::size_t>(v) * dim_, static_cast<std::size_t>(dim_)};
    }
    [[nodiscard]] std::span<const int> element(int e) const
    {
        const auto nv = static_cast<std::size_t>(vertices_per_element());
        return {elements_.data() + static_cast<std::size_t>(e) * nv, nv};
    }
    [[nodiscard]] bool on_boundary(int v) const { return boundary_[static_cast<std::size_t>(v)] != 0; }
    [[nodiscard]] std::vector<int> boundary_vertices() const;

    /// Grid index (i, j) of a vertex.
    [[nodiscard]] std::array<int, 2> grid_index(int v) const;
    [[nodiscard]] int vertex_at(int i, int j = 0) const { return i + (n_ + 1) * j; }

    [[nodiscard]] ElementGeometry geometry(int e) const;
    [[nodiscard]] double element_measure(int e) const { return geometry(e).measure; }

    /// Element containing x (clamped to the box) and the barycentric coordinates of x in it.
    [[nodiscard]] PointLocation locate(std::span<const double> x) const;

private:
    Mesh() = default;

    int dim_ = 1;
    int n_ = 1;
    double lower_ = 0.0;
    double upper_ = 1.0;
    std::vector<double> coords_;
    std::vector<int> elements_;
    std::vector<char> boundary_;
};

/// Mesh of [-L, L]^d with spacing <= h. Throws MemoryGuardError above disc.max_vertices.
[[nodiscard]] Mesh build_mesh(const Discretization& disc);

/// Quadrature point on the reference simplex; weight is a fraction of the element measure.
struct QuadraturePoint {
    std::array<double, 4> barycentric{};
    double weight = 0.0;
};

/// Rules with interior points only, so piecewise-constant data aligned with
/// element faces is never sampled on a face.
///   1D: composite midpoint rule with `order` sub-intervals.
///   2D: order 1 centroid; order 2 the degree-2 three-point rule at
///       barycentric (2/3, 1/6, 1/6); order m >= 3 composite centroid rule on
///       the m^2 congruent sub-triangles.
[[nodiscard]] std::vector<QuadraturePoint> simplex_rule(int dim, int order);

} // namespace embedhom
