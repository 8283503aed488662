#pragma once

#include "embedhom/linalg.hpp"

#include <vector>

namespace embedhom {

/// Value and supergradient of A -> sum_i J_{e_i}(A).
struct TraceObjective {
    double value = 0.0;
    /// Symmetric matrix S with D_E value = <S, E>_F for symmetric directions E.
    SmallMatrix gradient;
    /// J_{e_i}(A) for each i.
    std::vector<double> energies;
};

/// Source of the corrector energies J_p(A) for a fixed interior field.
///
/// The estimators only talk to this interface, so the same algorithms run on
/// the finite element discretization and on closed-form special cases.
class EnergyModel {
public:
    virtual ~EnergyModel() = default;

    [[nodiscard]] virtual int dim() const = 0;
    [[nodiscard]] virtual const EllipticityBounds& bounds() const = 0;
    /// (1/|B|) int_B A(x) dx
    [[nodiscard]] virtual SmallMatrix mean_coefficient() const = 0;
    /// J_p(A)
    [[nodiscard]] virtual double energy(const SmallMatrix& a_ext, const SmallVector& p) const = 0;
    [[nodiscard]] virtual TraceObjective trace_objective(const SmallMatrix& a_ext) const = 0;
    /// G(A), the symmetric matrix of the quadratic form p -> J_p(A).
    [[nodiscard]] virtual SmallMatrix g_matrix(const SmallMatrix& a_ext) const = 0;
};

} // namespace embedhom
