#include "embedhom/coeff_fields.hpp"

#include "embedhom/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <variant>

namespace embedhom {

namespace cell_rng {

std::uint64_t mix(std::uint64_t z) noexcept
{
    // splitmix64 finalizer
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t hash(std::uint64_t seed, std::span<const std::int64_t> cell, std::uint64_t stream) noexcept
{
    std::uint64_t h = mix(seed ^ mix(stream + 0x632be59bd9b4e019ULL));
    for (const std::int64_t c : cell) {
        h = mix(h ^ static_cast<std::uint64_t>(c));
    }
    return h;
}

double to_unit(std::uint64_t h) noexcept
{
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

} // namespace cell_rng

namespace {

struct ConstantData {
    SmallMatrix a;
};

struct Law {
    std::vector<SmallMatrix> values;
    std::vector<double> cumulative;

    [[nodiscard]] const SmallMatrix& draw(double u) const
    {
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()),
                                               values.size() - 1);
        return values[idx];
    }
};

struct CheckerboardData {
    Law law;
};

struct InclusionData {
    SmallMatrix a_ext;
    double r_min = 0.0;
    double r_max = 0.0;
    Law interior;
    bool jitter = true;
};

struct LaminateData {
    SmallMatrix a1;
    SmallMatrix a2;
    int axis = 0;
    double period = 1.0;
};

struct PiecewiseData {
    std::vector<double> breakpoints;
    std::vector<SmallMatrix> values;
};

using CellIndex = std::array<std::int64_t, 3>;

CellIndex cell_of(std::span<const double> y)
{
    CellIndex k{0, 0, 0};
    for (std::size_t i = 0; i < y.size(); ++i) {
        k[i] = static_cast<std::int64_t>(std::floor(y[i]));
    }
    return k;
}

enum Stream : std::uint64_t { kValue = 0, kRadius = 1, kInteriorValue = 2, kCenter = 3 };

struct Ball {
    std::array<double, 3> center{};
    double radius = 0.0;
};

Ball ball_in_cell(const InclusionData& d, std::uint64_t seed, std::span<const std::int64_t> k)
{
    Ball b;
    b.radius = d.r_min + cell_rng::to_unit(cell_rng::hash(seed, k, kRadius)) * (d.r_max - d.r_min);
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double base = static_cast<double>(k[i]);
        if (d.jitter) {
            const double u = cell_rng::to_unit(cell_rng::hash(seed, k, kCenter + i));
            b.center[i] = base + b.radius + u * (1.0 - 2.0 * b.radius);
        } else {
            b.center[i] = base + 0.5;
        }
    }
    return b;
}

Law make_law(const EllipticityBounds& bounds, int dim, std::vector<WeightedValue> atoms, const char* what)
{
    if (atoms.empty()) {
        throw std::invalid_argument(std::string(what) + ": value list is empty");
    }
    Law law;
    double total = 0.0;
    for (auto& atom : atoms) {
        if (atom.value.rows() != dim) {
            throw InvalidCoefficientError(std::string(what) + ": value has wrong dimension");
        }
        check_admissible(atom.value, bounds);
        if (!(atom.probability >= 0.0)) {
            throw std::invalid_argument(std::string(what) + ": negative probability");
        }
        total += atom.probability;
        law.values.push_back(0.5 * (atom.value + atom.value.transpose()));
        law.cumulative.push_back(total);
    }
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream os;
        os.precision(17);
        os << what << ": probabilities sum to " << total << ", expected 1";
        throw std::invalid_argument(os.str());
    }
    return law;
}

void check_dim(int dim)
{
    if (dim < 1 || dim > 3) {
        throw std::invalid_argument("field dimension must be 1, 2 or 3");
    }
}

} // namespace

struct CoefficientField::Impl {
    int dim = 1;
    FieldKind kind = FieldKind::constant;
    EllipticityBounds bounds;
    std::uint64_t seed = 0;
    std::variant<ConstantData, CheckerboardData, InclusionData, LaminateData, PiecewiseData> data;
};

std::string to_string(FieldKind kind)
{
    switch (kind) {
    case FieldKind::constant: return "constant";
    case FieldKind::laminate: return "laminate";
    case FieldKind::checkerboard: return "checkerboard";
    case FieldKind::inclusions: return "inclusions";
    case FieldKind::one_dim_piecewise: return "one_dim_piecewise";
    }
    return "unknown";
}

int CoefficientField::dim() const noexcept { return impl_->dim; }
FieldKind CoefficientField::kind() const noexcept { return impl_->kind; }
const EllipticityBounds& CoefficientField::bounds() const noexcept { return impl_->bounds; }
std::uint64_t CoefficientField::seed() const noexcept { return impl_->seed; }

SmallMatrix CoefficientField::eval(const SmallVector& x) const
{
    return eval(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

SmallMatrix CoefficientField::eval(std::span<const double> x) const
{
    const auto d = static_cast<std::size_t>(impl_->dim);
    if (x.size() != d) {
        throw std::invalid_argument("eval: point dimension does not match field dimension");
    }
    std::array<double, 3> y{};
    for (std::size_t i = 0; i < d; ++i) {
        y[i] = scale_ * x[i];
    }
    const std::span<const double> ys(y.data(), d);

    return std::visit(
        [&](const auto& data) -> SmallMatrix {
            using T = std::decay_t<decltype(data)>;
            if constexpr (std::is_same_v<T, ConstantData>) {
                return data.a;
            } else if constexpr (std::is_same_v<T, CheckerboardData>) {
                const CellIndex k = cell_of(ys);
                const std::span<const std::int64_t> ks(k.data(), d);
                return data.law.draw(cell_rng::to_unit(cell_rng::hash(impl_->seed, ks, kValue)));
            } else if constexpr (std::is_same_v<T, InclusionData>) {
                const CellIndex k = cell_of(ys);
                const std::span<const std::int64_t> ks(k.data(), d);
                const Ball b = ball_in_cell(data, impl_->seed, ks);
                double r2 = 0.0;
                for (std::size_t i = 0; i < d; ++i) {
                    r2 += (ys[i] - b.center[i]) * (ys[i] - b.center[i]);
                }
                if (r2 < b.radius * b.radius) {
                    return data.interior.draw(
                        cell_rng::to_unit(cell_rng::hash(impl_->seed, ks, kInteriorValue)));
                }
                return data.a_ext;
            } else if constexpr (std::is_same_v<T, LaminateData>) {
                const double s = ys[static_cast<std::size_t>(data.axis)] / data.period;
                return (s - std::floor(s) < 0.5) ? data.a1 : data.a2;
            } else {
                const auto it = std::upper_bound(data.breakpoints.begin(), data.breakpoints.end(), ys[0]);
                return data.values[static_cast<std::size_t>(it - data.breakpoints.begin())];
            }
        },
        impl_->data);
}

std::vector<double> CoefficientField::breakpoints_1d(double a, double b) const
{
    if (impl_->dim != 1) {
        throw std::logic_error("breakpoints_1d requires a one-dimensional field");
    }
    // Jumps are located in base coordinates y = scale * x.
    const double ya = scale_ * a;
    const double yb = scale_ * b;
    std::vector<double> jumps;
    std::visit(
        [&](const auto& data) {
            using T = std::decay_t<decltype(data)>;
            if constexpr (std::is_same_v<T, CheckerboardData>) {
                for (auto k = static_cast<std::int64_t>(std::ceil(ya)); static_cast<double>(k) <= yb; ++k) {
                    jumps.push_back(static_cast<double>(k));
                }
            } else if constexpr (std::is_same_v<T, InclusionData>) {
                for (auto k = static_cast<std::int64_t>(std::floor(ya)); static_cast<double>(k) <= yb; ++k) {
                    const std::array<std::int64_t, 1> ks{k};
                    const Ball ball = ball_in_cell(data, impl_->seed, ks);
                    if (ball.radius > 0.0) {
                        jumps.push_back(ball.center[0] - ball.radius);
                        jumps.push_back(ball.center[0] + ball.radius);
                    }
                }
            } else if constexpr (std::is_same_v<T, LaminateData>) {
                const double half = 0.5 * data.period;
                for (auto k = static_cast<std::int64_t>(std::ceil(ya / half));
                     static_cast<double>(k) * half <= yb; ++k) {
                    jumps.push_back(static_cast<double>(k) * half);
                }
            } else if constexpr (std::is_same_v<T, PiecewiseData>) {
                jumps = data.breakpoints;
            }
        },
        impl_->data);

    std::vector<double> out;
    for (const double y : jumps) {
        const double x = y / scale_;
        if (x > a && x < b) {
            out.push_back(x);
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

CoefficientField make_constant(const EllipticityBounds& bounds, const SmallMatrix& a)
{
    check_admissible(a, bounds);
    auto impl = std::make_shared<CoefficientField::Impl>();
    impl->dim = static_cast<int>(a.rows());
    impl->kind = FieldKind::constant;
    impl->bounds = bounds;
    impl->data = ConstantData{0.5 * (a + a.transpose())};
    return CoefficientField(std::move(impl));
}

CoefficientField make_checkerboard(const EllipticityBounds& bounds, int dim, std::vector<WeightedValue> values,
                                   std::uint64_t seed)
{
    check_dim(dim);
    auto impl = std::make_shared<CoefficientField::Impl>();
    impl->dim = dim;
    impl->kind = FieldKind::checkerboard;
    impl->bounds = bounds;
    impl->seed = seed;
    impl->data = CheckerboardData{make_law(bounds, dim, std::move(values), "checkerboard")};
    return CoefficientField(std::move(impl));
}

CoefficientField make_inclusions(const EllipticityBounds& bounds, int dim, const SmallMatrix& a_ext,
                                 InclusionSpec spec, std::uint64_t seed)
{
    check_dim(dim);
    if (a_ext.rows() != dim) {
        throw InvalidCoefficientError("inclusions: exterior value has wrong dimension");
    }
    check_admissible(a_ext, bounds);
    if (!(spec.r_min >= 0.0) || !(spec.r_max >= spec.r_min)) {
        throw std::invalid_argument("inclusions: radius law needs 0 <= r_min <= r_max");
    }
    if (spec.r_max >= 0.5) {
        throw GeometryError("inclusions: r_max must be < 1/2 so that balls stay inside their cell");
    }
    InclusionData data;
    data.a_ext = 0.5 * (a_ext + a_ext.transpose());
    data.r_min = spec.r_min;
    data.r_max = spec.r_max;
    data.jitter = spec.jitter;
    if (spec.interior.empty() && spec.r_max == 0.0) {
        spec.interior.push_back({data.a_ext, 1.0});
    }
    data.interior = make_law(bounds, dim, std::move(spec.interior), "inclusions");

    auto impl = std::make_shared<CoefficientField::Impl>();
    impl->dim = dim;
    impl->kind = FieldKind::inclusions;
    impl->bounds = bounds;
    impl->seed = seed;
    impl->data = std::move(data);
    return CoefficientField(std::move(impl));
}

CoefficientField make_laminate(const EllipticityBounds& bounds, int dim, const SmallMatrix& a1,
                               const SmallMatrix& a2, int axis, double period)
{
    check_dim(dim);
    if (!(period > 0.0) || !std::isfinite(period)) {
        throw std::invalid_argument("laminate: period must be positive");
    }
    if (axis < 0 || axis >= dim) {
        throw std::invalid_argument("laminate: axis out of range");
    }
    if (a1.rows() != dim || a2.rows() != dim) {
        throw InvalidCoefficientError("laminate: phase has wrong dimension");
    }
    check_admissible(a1, bounds);
    check_admissible(a2, bounds);
    auto impl = std::make_shared<CoefficientField::Impl>();
    impl->dim = dim;
    impl->kind = FieldKind::laminate;
    impl->bounds = bounds;
    impl->data = LaminateData{0.5 * (a1 + a1.transpose()), 0.5 * (a2 + a2.transpose()), axis, period};
    return CoefficientField(std::move(impl));
}

CoefficientField make_one_dim_piecewise(const EllipticityBounds& bounds, std::vector<double> breakpoints,
                                        std::vector<double> values)
{
    if (values.size() != breakpoints.size() + 1) {
        throw std::invalid_argument("one_dim_piecewise: need exactly one more value than breakpoints");
    }
    if (!std::is_sorted(breakpoints.begin(), breakpoints.end()) ||
        std::adjacent_find(breakpoints.begin(), breakpoints.end()) != breakpoints.end()) {
        throw std::invalid_argument("one_dim_piecewise: breakpoints must be strictly increasing");
    }
    for (const double b : breakpoints) {
        if (!(b > -1.0 && b < 1.0)) {
            throw std::invalid_argument("one_dim_piecewise: breakpoints must lie in (-1, 1)");
        }
    }
    PiecewiseData data;
    data.breakpoints = std::move(breakpoints);
    for (const double v : values) {
        SmallMatrix m(1, 1);
        m(0, 0) = v;
        check_admissible(m, bounds);
        data.values.push_back(m);
    }
    auto impl = std::make_shared<CoefficientField::Impl>();
    impl->dim = 1;
    impl->kind = FieldKind::one_dim_piecewise;
    impl->bounds = bounds;
    impl->data = std::move(data);
    return CoefficientField(std::move(impl));
}

CoefficientField rescale(const CoefficientField& field, double factor)
{
    if (!(factor > 0.0) || !std::isfinite(factor)) {
        throw std::invalid_argument("rescale: factor must be positive");
    }
    return CoefficientField(field.impl_, field.scale_ * factor);
}

} // namespace embedhom
