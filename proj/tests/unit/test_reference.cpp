#include <gtest/gtest.h>

#include "embedhom/errors.hpp"
#include "embedhom/reference.hpp"

#include <cmath>
#include <random>

using namespace embedhom;

namespace {

const EllipticityBounds kBounds(1.0, 4.0);

CoefficientField split_field()
{
    return make_one_dim_piecewise(kBounds, {0.0}, {1.0, 4.0});
}

SmallVector vec2(double a, double b)
{
    SmallVector v(2);
    v << a, b;
    return v;
}

} // namespace

TEST(HarmonicMean, TwoEqualHalves)
{
    // 2 / (1/1 + 1/4) = 1.6
    EXPECT_NEAR(harmonic_mean_1d(split_field()), 1.6, 1e-15);
    EXPECT_NEAR(arithmetic_mean_1d(split_field()), 2.5, 1e-15);
}

TEST(HarmonicMean, ConstantAndRepeatedValues)
{
    EXPECT_NEAR(harmonic_mean_1d(make_constant(kBounds, 2.7 * identity(1))), 2.7, 1e-15);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(1.0, 4.0);
    for (int t = 0; t < 10; ++t) {
        const double a = u(rng);
        EXPECT_NEAR(harmonic_mean_1d(make_one_dim_piecewise(kBounds, {0.3}, {a, a})), a, 1e-14);
    }
}

TEST(HarmonicMean, MatchesDirectSumForRandomPieces)
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(1.0, 4.0);
    std::uniform_real_distribution<double> pos(-0.95, 0.95);
    for (int t = 0; t < 20; ++t) {
        std::vector<double> breaks;
        for (int i = 0; i < 5; ++i) {
            breaks.push_back(pos(rng));
        }
        std::sort(breaks.begin(), breaks.end());
        std::vector<double> values;
        for (int i = 0; i < 6; ++i) {
            values.push_back(u(rng));
        }
        double inv = 0.0;
        double prev = -1.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double next = i < breaks.size() ? breaks[i] : 1.0;
            inv += (next - prev) / values[i];
            prev = next;
        }
        EXPECT_NEAR(harmonic_mean_1d(make_one_dim_piecewise(kBounds, breaks, values)), 2.0 / inv, 1e-13);
    }
}

TEST(HarmonicMean, RescaledCheckerboardUsesJumps)
{
    // R = 2 puts the unit cells [k, k+1) at [k/2, (k+1)/2); four half-length pieces cover (-1, 1).
    const CoefficientField f =
        rescale(make_checkerboard(kBounds, 1, {{identity(1), 0.5}, {4.0 * identity(1), 0.5}}, 5), 2.0);
    double inv = 0.0;
    for (int k = -2; k < 2; ++k) {
        const double mid = (k + 0.5) / 2.0;
        inv += 0.5 / f.eval(std::span<const double>(&mid, 1))(0, 0);
    }
    EXPECT_NEAR(harmonic_mean_1d(f), 2.0 / inv, 1e-14);
    EXPECT_THROW((void)harmonic_mean_1d(make_constant(kBounds, identity(2))), std::invalid_argument);
}

TEST(AnalyticJ1d, ClosedFormValues)
{
    const CoefficientField f = split_field();
    EXPECT_NEAR(analytic_j_1d(f, 1.6), 1.6, 1e-15);
    EXPECT_NEAR(analytic_j_1d(f, 1.0), 1.375, 1e-15);
    EXPECT_EQ(analytic_j_1d(f, 0.0), 0.0);
    EXPECT_NEAR(analytic_j_1d(f, 1.0, 2.0), 4.0 * 1.375, 1e-14);
}

TEST(OneDimAnalyticModel, GradientIsDerivativeOfValue)
{
    const OneDimAnalyticModel model(split_field());
    for (const double a : {1.0, 1.6, 2.5, 4.0}) {
        const TraceObjective obj = model.trace_objective(SmallMatrix::Constant(1, 1, a));
        const double s = 1e-6;
        const double fd = (model.trace_objective(SmallMatrix::Constant(1, 1, a + s)).value -
                           model.trace_objective(SmallMatrix::Constant(1, 1, a - s)).value) /
                          (2 * s);
        EXPECT_NEAR(obj.gradient(0, 0), fd, 1e-8);
        EXPECT_NEAR(model.g_matrix(SmallMatrix::Constant(1, 1, a))(0, 0), obj.value, 1e-15);
    }
    EXPECT_NEAR(model.trace_objective(SmallMatrix::Constant(1, 1, 1.6)).gradient(0, 0), 0.0, 1e-15);
}

TEST(Eshelby, ContrastValues)
{
    EXPECT_NEAR(eshelby_contrast(1.0, 2.0, 2), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(eshelby_contrast(2.0, 2.0, 3), 0.0);
    // d = 1 recovers w' = A / a - 1.
    EXPECT_NEAR(eshelby_contrast(1.6, 2.4, 1), 2.4 / 1.6 - 1.0, 1e-15);
    EXPECT_THROW((void)eshelby_contrast(0.0, 1.0, 2), std::invalid_argument);
}

TEST(Eshelby, CorrectorInteriorGradientAndContinuity)
{
    const SmallVector p = vec2(0.6, -0.8);
    const PointValue inside = eshelby_corrector(1.0, 2.0, p, vec2(0.2, 0.3));
    EXPECT_NEAR((inside.gradient - p / 3.0).norm(), 0.0, 1e-15);
    for (int k = 0; k < 16; ++k) {
        const double t = 2.0 * M_PI * k / 16;
        const SmallVector on = vec2(std::cos(t), std::sin(t));
        const double in_value = eshelby_corrector(1.0, 2.0, p, on * (1.0 - 1e-12)).value;
        const double out_value = eshelby_corrector(1.0, 2.0, p, on * (1.0 + 1e-12)).value;
        EXPECT_NEAR(in_value, out_value, 1e-11);
    }
    EXPECT_EQ(eshelby_corrector(1.5, 1.5, p, vec2(3.0, 1.0)).value, 0.0);
}

TEST(Eshelby, ExteriorGradientMatchesFiniteDifferences)
{
    const SmallVector p = vec2(1.0, 0.5);
    const SmallVector x = vec2(1.3, -0.7);
    const PointValue pv = eshelby_corrector(1.0, 3.0, p, x);
    const double s = 1e-6;
    for (int i = 0; i < 2; ++i) {
        SmallVector e = SmallVector::Zero(2);
        e(i) = s;
        const double fd =
            (eshelby_corrector(1.0, 3.0, p, x + e).value - eshelby_corrector(1.0, 3.0, p, x - e).value) / (2 * s);
        EXPECT_NEAR(pv.gradient(i), fd, 1e-8);
    }
}

TEST(Eshelby, ExteriorIsHarmonic)
{
    // Discrete Laplacian of C p.x / |x|^2 vanishes away from the ball.
    const SmallVector p = vec2(0.4, 1.0);
    const SmallVector x = vec2(1.7, 0.9);
    const double s = 1e-3;
    double lap = 0.0;
    for (int i = 0; i < 2; ++i) {
        SmallVector e = SmallVector::Zero(2);
        e(i) = s;
        lap += eshelby_corrector(1.0, 2.0, p, x + e).value + eshelby_corrector(1.0, 2.0, p, x - e).value -
               2.0 * eshelby_corrector(1.0, 2.0, p, x).value;
    }
    EXPECT_NEAR(lap / (s * s), 0.0, 1e-6);
}

TEST(Eshelby, TraceAndBracketFunction)
{
    const EshelbyTrace same = eshelby_trace_g(1.3, 1.3, 2);
    EXPECT_NEAR(same.trace_over_d, 1.3, 1e-15);
    EXPECT_EQ(same.f_alpha, 0.0);
    const EshelbyTrace t = eshelby_trace_g(1.0, 2.0, 2);
    EXPECT_NEAR(t.trace_over_d, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(t.f_alpha, -4.0 / 3.0, 1e-15);
    // f_alpha(gamma) = (1/d) Tr G - gamma for every d and gamma.
    for (int d = 1; d <= 3; ++d) {
        for (const double g : {0.5, 1.0, 2.0, 3.5}) {
            const EshelbyTrace e = eshelby_trace_g(1.2, g, d);
            EXPECT_NEAR(e.f_alpha, e.trace_over_d - g, 1e-14);
        }
    }
}

TEST(Eshelby, SignPatternOnTheAdmissibleInterval)
{
    const double alpha = 1.0;
    const double beta = 4.0;
    for (int d = 1; d <= 3; ++d) {
        for (int k = 0; k <= 20; ++k) {
            const double g = alpha + (beta - alpha) * k / 20.0;
            EXPECT_LE(eshelby_trace_g(alpha, g, d).f_alpha, 1e-15);
            EXPECT_GE(eshelby_trace_g(beta, g, d).f_alpha, -1e-15);
        }
    }
}

TEST(PeriodicEffective, ConstantFieldIsExact)
{
    SmallMatrix a(2, 2);
    a << 2.0, 0.4, 0.4, 3.0;
    Discretization disc;
    disc.h = 0.1;
    const PeriodicResult res = periodic_effective(make_constant(kBounds, a), 3.0, disc);
    EXPECT_LT((res.matrix - a).norm(), 1e-12);
    EXPECT_LT(res.asymmetry, 1e-12);
}

TEST(PeriodicEffective, OneDimHarmonicMean)
{
    // R = 1 on (-1/2, 1/2): the field takes 1 on (-1/2, 0) and 4 on (0, 1/2).
    Discretization disc;
    disc.dim = 1;
    disc.h = 0.01;
    const PeriodicResult res = periodic_effective(split_field(), 1.0, disc);
    EXPECT_NEAR(res.matrix(0, 0), 1.6, 1e-9);
}

TEST(PeriodicEffective, LaminateMeans)
{
    // Slabs normal to x with two periods per cell: harmonic mean 1.6 across, arithmetic 2.5 along.
    const CoefficientField f = make_laminate(kBounds, 2, identity(2), 4.0 * identity(2), 0, 1.0);
    Discretization disc;
    disc.h = 1.0 / 32;
    const PeriodicResult res = periodic_effective(f, 2.0, disc);
    EXPECT_NEAR(res.matrix(0, 0), 1.6, 1e-8);
    EXPECT_NEAR(res.matrix(1, 1), 2.5, 1e-8);
    EXPECT_NEAR(res.matrix(0, 1), 0.0, 1e-8);
}

TEST(PeriodicEffective, CheckerboardBetweenHarmonicAndArithmeticMeans)
{
    const CoefficientField f =
        make_checkerboard(kBounds, 2, {{identity(2), 0.5}, {4.0 * identity(2), 0.5}}, 12);
    Discretization disc;
    disc.h = 1.0 / 32;
    const PeriodicResult res = periodic_effective(f, 4.0, disc);
    const auto [lo, hi] = spectrum_range(res.matrix);
    EXPECT_GE(lo, 1.0);
    EXPECT_LE(hi, 4.0);
    EXPECT_LT(res.asymmetry, 1e-8);
    EXPECT_THROW((void)periodic_effective(f, 0.0, disc), std::invalid_argument);
}
