#pragma once

#include <Eigen/Dense>

#include <utility>

namespace embedhom {

/// Dense matrices and vectors of dimension at most 3, stored inline.
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using SmallVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;

/// Uniform ellipticity bounds 0 < alpha <= beta of the admissible set M.
class EllipticityBounds {
public:
    EllipticityBounds() = default;
    EllipticityBounds(double alpha, double beta);

    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] double beta() const noexcept { return beta_; }

    /// Scales both bounds by c > 0.
    [[nodiscard]] EllipticityBounds scaled(double c) const;

private:
    double alpha_ = 1.0;
    double beta_ = 1.0;
};

/// Relative tolerance used when checking membership in M.
inline constexpr double kAdmissibleRelTol = 1e-12;

/// Symmetric matrix whose spectrum lies in [alpha, beta]; validated on construction.
class SpdMatrix {
public:
    /// Throws InvalidCoefficientError when m is not symmetric or its spectrum leaves the bounds.
    SpdMatrix(const SmallMatrix& m, const EllipticityBounds& bounds);

    static SpdMatrix scalar(int dim, double value, const EllipticityBounds& bounds);

    [[nodiscard]] const SmallMatrix& matrix() const noexcept { return m_; }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(m_.rows()); }

private:
    SmallMatrix m_;
};

[[nodiscard]] bool is_symmetric(const SmallMatrix& m, double rel_tol = kAdmissibleRelTol);

/// Smallest and largest eigenvalue of the symmetric part of m.
[[nodiscard]] std::pair<double, double> spectrum_range(const SmallMatrix& m);

/// Throws InvalidCoefficientError unless m is in M(bounds).
void check_admissible(const SmallMatrix& m, const EllipticityBounds& bounds);

/// Euclidean projection onto M: symmetrize, then clamp eigenvalues to [alpha, beta].
[[nodiscard]] SmallMatrix project_to_admissible(const SmallMatrix& m, const EllipticityBounds& bounds);

[[nodiscard]] inline SmallMatrix identity(int dim)
{
    return SmallMatrix::Identity(dim, dim);
}

[[nodiscard]] inline SmallVector unit_vector(int dim, int i)
{
    SmallVector e = SmallVector::Zero(dim);
    e(i) = 1.0;
    return e;
}

[[nodiscard]] inline double frobenius_inner(const SmallMatrix& a, const SmallMatrix& b)
{
    return (a.array() * b.array()).sum();
}

} // namespace embedhom
