#pragma once

#include "embedhom/coeff_fields.hpp"
#include "embedhom/linalg.hpp"
#include "embedhom/mesh.hpp"
#include "embedhom/sparse.hpp"

#include <functional>
#include <span>
#include <vector>

namespace embedhom {

/// Vertex to unknown numbering; -1 marks a vertex whose value is fixed to zero.
struct DofMap {
    std::vector<int> vertex_to_dof;
    int num_dofs = 0;

    [[nodiscard]] int dof(int vertex) const { return vertex_to_dof[static_cast<std::size_t>(vertex)]; }
};

/// Homogeneous Dirichlet condition on the outer boundary of the box.
[[nodiscard]] DofMap dirichlet_dofs(const Mesh& mesh);

/// Opposite faces identified; with pin_first the unknown at the lower corner is fixed to zero.
[[nodiscard]] DofMap periodic_dofs(const Mesh& mesh, bool pin_first);

/// Sparsity of the P1 stiffness matrix over the free unknowns, with the position
/// of every element-local pair precomputed so that re-assembly is a scatter.
class StiffnessPattern {
public:
    StiffnessPattern(const Mesh& mesh, const DofMap& dofs);

    /// Pattern with all values zero.
    [[nodiscard]] const CsrMatrix& skeleton() const noexcept { return skeleton_; }
    /// Position in values() of local pair (a, b) of element e, -1 when either end is fixed.
    [[nodiscard]] int slot(int e, int a, int b) const
    {
        return scatter_[(static_cast<std::size_t>(e) * nv_ + static_cast<std::size_t>(a)) * nv_ +
                        static_cast<std::size_t>(b)];
    }

    /// values += sum_e G_e^T M_e G_e, with M_e the d x d row-major moment of element e.
    void accumulate(const Mesh& mesh, std::span<const double> moments, std::span<double> values) const;
    /// Same, scaling each element's constant d x d matrix `m` by weights[e].
    void accumulate_scaled(const Mesh& mesh, const SmallMatrix& m, std::span<const double> weights,
                           std::span<double> values) const;

    [[nodiscard]] CsrMatrix assemble(const Mesh& mesh, std::span<const double> moments) const;

private:
    std::size_t nv_ = 0;
    CsrMatrix skeleton_;
    std::vector<int> scatter_;
};

/// x -> coefficient at a quadrature point.
using CompositeCoefficient = std::function<SmallMatrix(std::span<const double>)>;

/// Per-element d x d moments, sum over quadrature points of w_q |e| A(x_q).
/// Throws InvalidCoefficientError when A(x_q) is not symmetric positive definite.
[[nodiscard]] std::vector<double> element_moments(const Mesh& mesh, const CompositeCoefficient& coefficient,
                                                  int quad_order);

/// K_ij = sum_e sum_q w_q grad(phi_i)(x_q) . A(x_q) grad(phi_j)(x_q) over the free unknowns.
[[nodiscard]] CsrMatrix assemble_system(const Mesh& mesh, const DofMap& dofs,
                                        const CompositeCoefficient& coefficient, int quad_order);

[[nodiscard]] bool in_unit_ball(std::span<const double> x);

/// Quadrature data of a field restricted to the unit ball, per element:
///   ball_moment  = sum_{q in B} w_q |e| A(x_q)  (d x d, row-major)
///   ball_measure = sum_{q in B} w_q |e|
///   ext_measure  = sum_{q not in B} w_q |e|
/// Ball membership is decided per quadrature point.
struct BallMoments {
    int dim = 0;
    std::vector<double> ball_moment;
    std::vector<double> ball_measure;
    std::vector<double> ext_measure;

    [[nodiscard]] Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
    moment(int e) const
    {
        return {ball_moment.data() + static_cast<std::size_t>(e) * dim * dim, dim, dim};
    }
};

[[nodiscard]] BallMoments ball_moments(const Mesh& mesh, const CoefficientField& field, int quad_order);

/// F_i = -int_B grad(phi_i) . (A(x) - A_ext) p, the volume form of the interface load.
[[nodiscard]] std::vector<double> assemble_load(const Mesh& mesh, const DofMap& dofs, const CoefficientField& field,
                                                const SmallMatrix& a_ext, const SmallVector& p, int quad_order);

/// Same load from precomputed ball moments.
[[nodiscard]] std::vector<double> assemble_load(const Mesh& mesh, const DofMap& dofs, const BallMoments& moments,
                                                const SmallMatrix& a_ext, const SmallVector& p);

enum class Region { ball, exterior, all };

using QuadratureIntegrand = std::function<double(std::span<const double> x, int element)>;

/// Quadrature sum of the integrand over the points of `region`.
[[nodiscard]] double integrate(const Mesh& mesh, const QuadratureIntegrand& integrand, Region region,
                               int quad_order);

/// Values on every vertex, fixed vertices set to zero.
[[nodiscard]] std::vector<double> expand_to_vertices(const Mesh& mesh, const DofMap& dofs,
                                                     std::span<const double> dof_values);

/// Constant gradient of a P1 function on element e.
[[nodiscard]] SmallVector element_gradient(const Mesh& mesh, int e, std::span<const double> nodal);

/// Point value of a P1 function given by its vertex values.
[[nodiscard]] double interpolate(const Mesh& mesh, std::span<const double> nodal, std::span<const double> x);

} // namespace embedhom
