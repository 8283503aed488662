#pragma once

#include "embedhom/linalg.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace embedhom {

enum class FieldKind { constant, laminate, checkerboard, inclusions, one_dim_piecewise };

[[nodiscard]] std::string to_string(FieldKind kind);

/// One atom of a discrete law over coefficient values.
struct WeightedValue {
    SmallMatrix value;
    double probability = 1.0;
};

/// One ball per unit cell, radius uniform on [r_min, r_max], interior value drawn from a law.
struct InclusionSpec {
    double r_min = 0.0;
    double r_max = 0.0;
    std::vector<WeightedValue> interior;
    /// When false every ball is centered in its cell.
    bool jitter = true;
};

/// Immutable matrix-valued map x -> A(x) in M, defined on all of R^d.
///
/// Random kinds draw one sample per unit cell k + [0,1)^d from a counter-based
/// hash of (seed, k), so eval is a pure function of x. Copies share state.
class CoefficientField {
public:
    [[nodiscard]] int dim() const noexcept;
    [[nodiscard]] FieldKind kind() const noexcept;
    [[nodiscard]] const EllipticityBounds& bounds() const noexcept;
    [[nodiscard]] std::uint64_t seed() const noexcept;
    /// Accumulated rescaling factor R, so that eval(x) = base(R x).
    [[nodiscard]] double scale() const noexcept { return scale_; }

    [[nodiscard]] SmallMatrix eval(const SmallVector& x) const;
    [[nodiscard]] SmallMatrix eval(std::span<const double> x) const;

    /// Sorted points of (a, b) where a one-dimensional field may jump.
    /// Every kind is piecewise constant in 1D; throws std::logic_error when dim() != 1.
    [[nodiscard]] std::vector<double> breakpoints_1d(double a, double b) const;

    friend CoefficientField make_constant(const EllipticityBounds&, const SmallMatrix&);
    friend CoefficientField make_checkerboard(const EllipticityBounds&, int, std::vector<WeightedValue>,
                                              std::uint64_t);
    friend CoefficientField make_inclusions(const EllipticityBounds&, int, const SmallMatrix&,
                                            InclusionSpec, std::uint64_t);
    friend CoefficientField make_laminate(const EllipticityBounds&, int, const SmallMatrix&,
                                          const SmallMatrix&, int, double);
    friend CoefficientField make_one_dim_piecewise(const EllipticityBounds&, std::vector<double>,
                                                   std::vector<double>);
    friend CoefficientField rescale(const CoefficientField&, double);

    struct Impl;

private:
    explicit CoefficientField(std::shared_ptr<const Impl> impl, double scale = 1.0)
        : impl_(std::move(impl)), scale_(scale)
    {
    }

    std::shared_ptr<const Impl> impl_;
    double scale_ = 1.0;
};

[[nodiscard]] CoefficientField make_constant(const EllipticityBounds& bounds, const SmallMatrix& a);

/// Values drawn i.i.d. per unit cell; probabilities must sum to one within 1e-12.
[[nodiscard]] CoefficientField make_checkerboard(const EllipticityBounds& bounds, int dim,
                                                 std::vector<WeightedValue> values, std::uint64_t seed);

/// Throws GeometryError when r_max >= 1/2.
[[nodiscard]] CoefficientField make_inclusions(const EllipticityBounds& bounds, int dim,
                                               const SmallMatrix& a_ext, InclusionSpec spec,
                                               std::uint64_t seed);

/// Slabs normal to `axis`: a1 on [0, period/2) + period Z, a2 on the rest.
[[nodiscard]] CoefficientField make_laminate(const EllipticityBounds& bounds, int dim,
                                             const SmallMatrix& a1, const SmallMatrix& a2, int axis,
                                             double period);

/// Scalar field on (-1,1): values[i] between breakpoints[i-1] and breakpoints[i],
/// extended by the end values outside.
[[nodiscard]] CoefficientField make_one_dim_piecewise(const EllipticityBounds& bounds,
                                                      std::vector<double> breakpoints,
                                                      std::vector<double> values);

/// x -> field(R x); rescale(rescale(f, R), S) evaluates f((R S) x).
[[nodiscard]] CoefficientField rescale(const CoefficientField& field, double factor);

/// Counter-based hashing used to draw per-cell samples.
namespace cell_rng {

[[nodiscard]] std::uint64_t mix(std::uint64_t z) noexcept;

/// Hash of (seed, cell, stream); identical inputs give identical outputs on every platform.
[[nodiscard]] std::uint64_t hash(std::uint64_t seed, std::span<const std::int64_t> cell,
                                 std::uint64_t stream) noexcept;

/// Maps a hash to a double uniform on [0, 1) using its top 53 bits.
[[nodiscard]] double to_unit(std::uint64_t h) noexcept;

} // namespace cell_rng

} // namespace embedhom
