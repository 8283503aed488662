#include "embedhom/linalg.hpp"

#include "embedhom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace embedhom {

EllipticityBounds::EllipticityBounds(double alpha, double beta) : alpha_(alpha), beta_(beta)
{
    if (!(alpha > 0.0) || !(beta >= alpha) || !std::isfinite(beta)) {
        std::ostringstream os;
        os << "ellipticity bounds require 0 < alpha <= beta < inf (got alpha=" << alpha
           << ", beta=" << beta << ")";
        throw std::invalid_argument(os.str());
    }
}

EllipticityBounds EllipticityBounds::scaled(double c) const
{
    return {c * alpha_, c * beta_};
}

SpdMatrix::SpdMatrix(const SmallMatrix& m, const EllipticityBounds& bounds)
{
    check_admissible(m, bounds);
    m_ = 0.5 * (m + m.transpose());
}

SpdMatrix SpdMatrix::scalar(int dim, double value, const EllipticityBounds& bounds)
{
    return {value * identity(dim), bounds};
}

bool is_symmetric(const SmallMatrix& m, double rel_tol)
{
    if (m.rows() != m.cols()) {
        return false;
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

std::pair<double, double> spectrum_range(const SmallMatrix& m)
{
    const SmallMatrix sym = 0.5 * (m + m.transpose());
    if (sym.rows() == 1) {
        return {sym(0, 0), sym(0, 0)};
    }
    Eigen::SelfAdjointEigenSolver<SmallMatrix> eig(sym, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    return {ev.minCoeff(), ev.maxCoeff()};
}

void check_admissible(const SmallMatrix& m, const EllipticityBounds& bounds)
{
    if (m.rows() < 1 || m.rows() > 3 || m.rows() != m.cols()) {
        throw InvalidCoefficientError("coefficient must be a square matrix of dimension 1, 2 or 3");
    }
    if (!m.allFinite()) {
        throw InvalidCoefficientError("coefficient has non-finite entries");
    }
    if (!is_symmetric(m)) {
        throw InvalidCoefficientError("coefficient is not symmetric");
    }
    const auto [lo, hi] = spectrum_range(m);
    const double slack = kAdmissibleRelTol * bounds.beta();
    if (lo < bounds.alpha() - slack || hi > bounds.beta() + slack) {
        std::ostringstream os;
        os << "coefficient spectrum [" << lo << ", " << hi << "] leaves [" << bounds.alpha() << ", "
           << bounds.beta() << "]";
        throw InvalidCoefficientError(os.str());
    }
}

SmallMatrix project_to_admissible(const SmallMatrix& m, const EllipticityBounds& bounds)
{
    const SmallMatrix sym = 0.5 * (m + m.transpose());
    if (sym.rows() == 1) {
        SmallMatrix out(1, 1);
        out(0, 0) = std::clamp(sym(0, 0), bounds.alpha(), bounds.beta());
        return out;
    }
    Eigen::SelfAdjointEigenSolver<SmallMatrix> eig(sym);
    SmallVector ev = eig.eigenvalues();
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        ev(i) = std::clamp(ev(i), bounds.alpha(), bounds.beta());
    }
    const SmallMatrix& q = eig.eigenvectors();
    SmallMatrix out = q * ev.asDiagonal() * q.transpose();
    return 0.5 * (out + out.transpose());
}

} // namespace embedhom
