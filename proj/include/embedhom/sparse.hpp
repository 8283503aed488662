#pragma once

#include <span>
#include <vector>

namespace embedhom {

/// Compressed-row sparse matrix.
struct CsrMatrix {
    int rows = 0;
    std::vector<int> row_ptr{0};
    std::vector<int> cols;
    std::vector<double> values;

    [[nodiscard]] int nnz() const noexcept { return static_cast<int>(cols.size()); }
    /// y = A x
    void multiply(std::span<const double> x, std::span<double> y) const;
    /// Entry (i, j), zero when not stored.
    [[nodiscard]] double coeff(int i, int j) const;
    [[nodiscard]] std::vector<double> diagonal() const;
};

/// max |A_ij - A_ji| over the stored pattern.
[[nodiscard]] double symmetry_defect(const CsrMatrix& a);

struct CgOptions {
    double rel_tol = 1e-10;
    int max_iter = 1000;
};

struct CgResult {
    std::vector<double> x;
    int iterations = 0;
    /// ||b - A x|| / ||b|| recomputed from x at exit.
    double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients for SPD systems.
/// Stops once ||r|| <= rel_tol ||b||; b = 0 returns x = 0. Throws ConvergenceError at max_iter.
[[nodiscard]] CgResult solve_cg(const CsrMatrix& a, std::span<const double> b, const CgOptions& opts,
                                std::span<const double> initial_guess = {});

} // namespace embedhom
