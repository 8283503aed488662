#include "embedhom/sparse.hpp"

#include "embedhom/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace embedhom {

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const
{
    const int* rp = row_ptr.data();
    const int* ci = cols.data();
    const double* av = values.data();
    const double* xv = x.data();
    for (int i = 0; i < rows; ++i) {
        double sum = 0.0;
        for (int k = rp[i]; k < rp[i + 1]; ++k) {
            sum += av[k] * xv[ci[k]];
        }
        y[static_cast<std::size_t>(i)] = sum;
    }
}

double CsrMatrix::coeff(int i, int j) const
{
    const auto begin = cols.begin() + row_ptr[static_cast<std::size_t>(i)];
    const auto end = cols.begin() + row_ptr[static_cast<std::size_t>(i) + 1];
    const auto it = std::lower_bound(begin, end, j);
    if (it == end || *it != j) {
        return 0.0;
    }
    return values[static_cast<std::size_t>(it - cols.begin())];
}

std::vector<double> CsrMatrix::diagonal() const
{
    std::vector<double> d(static_cast<std::size_t>(rows), 0.0);
    for (int i = 0; i < rows; ++i) {
        d[static_cast<std::size_t>(i)] = coeff(i, i);
    }
    return d;
}

double symmetry_defect(const CsrMatrix& a)
{
    double defect = 0.0;
    for (int i = 0; i < a.rows; ++i) {
        for (int k = a.row_ptr[static_cast<std::size_t>(i)]; k < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            const int j = a.cols[static_cast<std::size_t>(k)];
            defect = std::max(defect, std::abs(a.values[static_cast<std::size_t>(k)] - a.coeff(j, i)));
        }
    }
    return defect;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

} // namespace

CgResult solve_cg(const CsrMatrix& a, std::span<const double> b, const CgOptions& opts,
                  std::span<const double> initial_guess)
{
    const auto n = static_cast<std::size_t>(a.rows);
    if (b.size() != n) {
        throw std::invalid_argument("solve_cg: right-hand side size mismatch");
    }
    CgResult res;
    res.x.assign(n, 0.0);
    const double b_norm = std::sqrt(dot(b, b));
    if (b_norm == 0.0) {
        return res;
    }

    std::vector<double> inv_diag = a.diagonal();
    for (double& d : inv_diag) {
        if (!(d > 0.0)) {
            throw std::invalid_argument("solve_cg: matrix has a non-positive diagonal entry");
        }
        d = 1.0 / d;
    }

    std::vector<double> r(b.begin(), b.end());
    std::vector<double> q(n);
    if (initial_guess.size() == n) {
        std::copy(initial_guess.begin(), initial_guess.end(), res.x.begin());
        a.multiply(res.x, q);
        for (std::size_t i = 0; i < n; ++i) {
            r[i] -= q[i];
        }
    }

    const double target = opts.rel_tol * b_norm;
    double r_norm = std::sqrt(dot(r, r));
    std::vector<double> z(n);
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = inv_diag[i] * r[i];
    }
    p = z;
    double rz = dot(r, z);

    int it = 0;
    while (r_norm > target) {
        if (it >= opts.max_iter) {
            std::ostringstream os;
            os << "conjugate gradients did not converge in " << it << " iterations (relative residual "
               << r_norm / b_norm << ", tolerance " << opts.rel_tol << ")";
            throw ConvergenceError(os.str(), r_norm / b_norm, it);
        }
        a.multiply(p, q);
        const double alpha = rz / dot(p, q);
        for (std::size_t i = 0; i < n; ++i) {
            res.x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        double rz_new = 0.0;
        double rr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            z[i] = inv_diag[i] * r[i];
            rz_new += r[i] * z[i];
            rr += r[i] * r[i];
        }
        r_norm = std::sqrt(rr);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = z[i] + beta * p[i];
        }
        ++it;
    }

    a.multiply(res.x, q);
    double true_rr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ri = b[i] - q[i];
        true_rr += ri * ri;
    }
    res.iterations = it;
    res.relative_residual = std::sqrt(true_rr) / b_norm;
    return res;
}

} // namespace embedhom
