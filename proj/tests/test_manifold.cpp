#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "slowfast/manifold.hpp"
#include "slowfast/reduced.hpp"

using namespace slowfast;

namespace {

ExampleModel deterministic_example(double a = 1.0, double eps = 0.01)
{
    ExampleModel ex;
    ex.a = a;
    ex.eps = eps;
    ex.sigma = 0.0;
    return ex;
}

SlowFastModel linear_fast_model(double b, double c)
{
    SlowFastModel m;
    m.A = Matrix::Zero(1, 1);
    m.B = Matrix::Constant(1, 1, -b);
    m.f = [](const Vector&, const Vector&, const Params&) { return Vector::Zero(1).eval(); };
    m.g = [c](const Vector& x, const Vector&, const Params&) { return Vector::Constant(1, c * x(0)); };
    m.g_x = [c](const Vector&, const Vector&, const Params&) { return Matrix::Constant(1, 1, c); };
    m.g_y = [](const Vector&, const Vector&, const Params&) { return Matrix::Zero(1, 1).eval(); };
    m.sigma = 0.0;
    return m;
}

FastWindow window_for(const SlowFastModel& m, std::size_t steps = 2000)
{
    return deterministic_window(default_truncation(fast_decay_rate(m.B)), steps, 1);
}

Vector v1(double x) { return Vector::Constant(1, x); }

}  // namespace

TEST(SolveY0, ExampleAuxiliaryPathIsConstant)
{
    const SlowFastModel m = deterministic_example().model();
    const AuxiliaryPath aux = solve_y0(m, v1(10.0), window_for(m));
    for (const auto& y : aux.y0) EXPECT_NEAR(y(0), 100.0 / 600.0, 1e-12);
    // the kernel integral is cut at -T, which drops a tail e^{-T}
    const double T = default_truncation(1.0);
    EXPECT_NEAR(aux.h_d(0), (1.0 - std::exp(-T)) * 100.0 / 600.0, 1e-12);
    EXPECT_LT(aux.residual_y0, 1e-6);
    EXPECT_EQ(aux.iterations_y0, 1u);  // g independent of y: one pass settles the path
}

TEST(SolveY0, ZeroArgumentGivesZero)
{
    const SlowFastModel m = deterministic_example().model();
    const AuxiliaryPath aux = solve_y0(m, v1(0.0), window_for(m));
    for (const auto& y : aux.y0) EXPECT_EQ(y(0), 0.0);
}

TEST(SolveY0, LinearForcingHasStationarySolution)
{
    const double b = 2.5, c = 0.7, xi = 3.0;
    const SlowFastModel m = linear_fast_model(b, c);
    const AuxiliaryPath aux = solve_y0(m, v1(xi), window_for(m));
    for (const auto& y : aux.y0) EXPECT_NEAR(y(0), c * xi / b, 1e-12);
    EXPECT_NEAR(aux.h_d(0), c * xi / b, 1e-7 * c * xi / b);
}

TEST(SolveY1, ExampleMatchesVariationOfConstants)
{
    const double a = 1.0, xi = 10.0;
    const SlowFastModel m = deterministic_example(a).model();
    const FastWindow w = window_for(m);
    AuxiliaryPath aux = solve_y0(m, v1(xi), w);
    solve_y1(m, v1(xi), w, aux);
    // forcing (ξ/300)(0.001 ξ τ - a ξ³ τ/600) = k τ
    const double k = (xi * xi / 300.0) * (0.001 - a * xi * xi / 600.0);
    for (std::size_t i = 0; i < aux.y1.size(); i += 97) {
        const double ref = oracle::linear_forcing_solution(k, aux.node(i));
        EXPECT_NEAR(aux.y1[i](0), ref, 1e-10 * std::max(1.0, std::abs(ref))) << aux.node(i);
    }
    // ∫_{-T}^0 s e^s ds = -(1 - e^{-T}(1 + T))
    const double T = default_truncation(1.0);
    EXPECT_NEAR(aux.h_1(0), -k * (1.0 - std::exp(-T) * (1.0 + T)), 1e-8 * std::abs(k));
    EXPECT_LT(aux.residual_y1, 1e-6);
}

TEST(SolveY1, ZeroForcingAndZeroArgument)
{
    SlowFastModel m = deterministic_example().model();
    const FastWindow w = window_for(m);
    AuxiliaryPath aux = solve_y0(m, v1(0.0), w);
    solve_y1(m, v1(0.0), w, aux);
    for (const auto& y : aux.y1) EXPECT_EQ(y(0), 0.0);

    m.g = [](const Vector&, const Vector&, const Params&) { return Vector::Zero(1).eval(); };
    m.g_x = [](const Vector&, const Vector&, const Params&) { return Matrix::Zero(1, 1).eval(); };
    AuxiliaryPath aux2 = solve_y0(m, v1(4.0), w);
    solve_y1(m, v1(4.0), w, aux2);
    for (const auto& y : aux2.y1) EXPECT_EQ(y(0), 0.0);
}

TEST(FirstOrderTerm, VanishesForLinearCouplingWithoutSlowDynamics)
{
    const SlowFastModel m = linear_fast_model(1.5, 2.0);
    EXPECT_NEAR(h_1(m, v1(3.0), window_for(m))(0), 0.0, 1e-14);
    EXPECT_NEAR(h_d(m, v1(3.0), window_for(m))(0), 4.0, 1e-7 * 4.0);
}

TEST(FirstOrderTerm, QuarticContributionOfExample)
{
    // (ξ/300)(-aξ³/600) ∫ s e^s ds with the integral equal to -1
    const double quartic = 10000.0 / 180000.0;
    EXPECT_NEAR(quartic, 0.055556, 1e-6);
    const SlowFastModel m = deterministic_example(1.0).model();
    const double h1 = h_1(m, v1(10.0), window_for(m))(0);
    const double T = default_truncation(1.0);
    EXPECT_NEAR(h1, (quartic - 100.0 * 0.001 / 300.0) * (1.0 - std::exp(-T) * (1.0 + T)), 1e-9);
}

TEST(ClosedForm, ArithmeticValues)
{
    EXPECT_EQ(h_hat_example(0.0, 1.0, 0.01, 0.01, -1.0), 0.0);
    EXPECT_NEAR(h_hat_example(10.0, 1.0, 0.01, 0.0, 0.0), 0.16721889, 5e-9);
    EXPECT_NEAR(h_hat_example(10.0, 1.0, 0.01, 0.01, -1.0), 0.16725222, 5e-9);
    EXPECT_EQ(h_hat_example(7.0, 1.0, 0.0, 0.01, 0.3), 49.0 / 600.0);
}

TEST(GenericManifold, QuadratureConverges)
{
    const SlowFastModel m = deterministic_example(1.0).model();
    for (double xi : {2.0, 10.0}) {
        AuxiliaryPath coarse = solve_y0(m, v1(xi), window_for(m, 2000));
        solve_y1(m, v1(xi), window_for(m, 2000), coarse);
        AuxiliaryPath fine = solve_y0(m, v1(xi), window_for(m, 4000));
        solve_y1(m, v1(xi), window_for(m, 4000), fine);
        EXPECT_LT(std::abs(coarse.h_d(0) - fine.h_d(0)), 1e-8 * std::abs(fine.h_d(0)));
        EXPECT_LT(std::abs(coarse.h_1(0) - fine.h_1(0)), 1e-8 * std::abs(fine.h_1(0)));
    }
}

TEST(GenericManifold, DeterministicPartIsUnaffectedByNoise)
{
    ExampleModel ex;
    const double T = default_truncation(1.0);
    const NoisePath path = coupled_path(ex.eps, 2e-4, 0.0, T, 3);
    const GenericManifold gm(ex.model(), path);
    for (double xi : {-10.0, -3.0, 5.0, 10.0}) {
        const AuxiliaryPath aux = gm.auxiliary(v1(xi));
        EXPECT_NEAR(aux.h_d(0), xi * xi / 600.0, 1e-6 * xi * xi / 600.0);
    }
}

TEST(GenericManifold, FullManifoldDecomposition)
{
    ExampleModel ex;
    const double T = default_truncation(1.0);
    const NoisePath path = coupled_path(ex.eps, 2e-4, 0.1, T, 4);
    const GenericManifold gm(ex.model(), path);
    EXPECT_EQ(full_manifold(gm, v1(3.0))(0), ex.sigma * gm.eta()(0) + gm.h_hat(v1(3.0))(0));
    EXPECT_NEAR(full_manifold(gm, v1(0.0))(0), ex.sigma * gm.eta()(0), 1e-18);
    EXPECT_EQ(gm.full(v1(2.0), 0.05)(0), ex.sigma * gm.eta(0.05)(0) + gm.h_hat(v1(2.0), 0.05)(0));
    EXPECT_THROW(gm.h_hat(v1(1.0), 0.5), DomainError);

    const GenericManifold det(deterministic_example().model());
    EXPECT_EQ(full_manifold(det, v1(3.0))(0), det.h_hat(v1(3.0))(0));
}

TEST(GenericManifold, FirstOrderNoiseVarianceFollowsIsometry)
{
    const double a = 1.0, xi = 6.0;
    ExampleModel ex;
    ex.a = a;
    const ExampleModel quiet = deterministic_example(a);
    const double T = default_truncation(1.0);
    const GenericManifold det(quiet.model());
    const double base = det.auxiliary(v1(xi)).h_1(0);
    std::vector<double> scaled;
    for (std::uint64_t s = 0; s < 600; ++s) {
        const GenericManifold gm(ex.model(), coupled_path(ex.eps, 4e-4, 0.0, T, 1000 + s));
        scaled.push_back((gm.auxiliary(v1(xi)).h_1(0) - base) / ex.sigma);
    }
    const auto var = oracle::variance_with_se(scaled);
    const double target = std::pow(a * xi * xi / 300.0, 2) * 0.25;
    EXPECT_LT(std::abs(var.value - target), 3.0 * var.se) << var.value << " vs " << target;
}

TEST(GenericManifold, AgreesWithClosedFormOnSharedNoise)
{
    ExampleModel ex;
    ex.a = 1.0;
    const double T = default_truncation(1.0);
    const NoisePath path = coupled_path(ex.eps, 2e-4, 0.05, T, 11);
    const GenericManifold gm(ex.model(), path);
    const ExampleManifold cf(ex, filtered_from_path(path, ex.eps, T));
    // η: exact OU gain versus midpoint weight, a relative gap of about h²/12 per step
    const double h = 2e-4 / ex.eps;
    const double gain_gap = std::abs(std::sqrt(-std::expm1(-2.0 * h) / (2.0 * h)) - std::exp(-0.5 * h));
    for (double t : {0.0, 0.05}) {
        const double eta = cf.eta(t)(0);
        EXPECT_LT(std::abs(gm.eta(t)(0) - eta), 10.0 * gain_gap * (1.0 + std::abs(eta))) << t;
        for (double xi = -10.0; xi <= 10.0; xi += 2.5) {
            EXPECT_NEAR(gm.h_hat(v1(xi), t)(0), cf.h_hat(v1(xi), t)(0), 1e-7) << xi << " " << t;
        }
    }
}

TEST(GenericManifold, CouplingStrengthChangesCurve)
{
    // a = 0.1 versus a = 1 on one realization differ through the ε-terms
    ExampleModel lo, hi;
    lo.a = 0.1;
    hi.a = 1.0;
    const double T = default_truncation(1.0);
    const NoisePath path = coupled_path(lo.eps, 2e-4, 0.0, T, 6);
    const ExampleManifold a(lo, filtered_from_path(path, lo.eps, T));
    const ExampleManifold b(hi, filtered_from_path(path, hi.eps, T));
    double worst = 0.0;
    for (double xi = -10.0; xi <= 10.0; xi += 0.5) {
        worst = std::max(worst, std::abs(a.full(v1(xi))(0) - b.full(v1(xi))(0)));
    }
    EXPECT_GT(worst, 1e-4);
}

TEST(GenericManifold, ErrorsAreTyped)
{
    EXPECT_THROW(GenericManifold(ExampleModel{}.model()), ConfigError);  // σ > 0 without noise
    SlowFastModel unstable = linear_fast_model(-1.0, 1.0);
    EXPECT_THROW(GenericManifold{unstable}, HypothesisError);

    // fast coupling stronger than the decay: the fixed point does not contract
    SlowFastModel strong = linear_fast_model(1.0, 1.0);
    strong.g = [](const Vector& x, const Vector& y, const Params&) { return Vector::Constant(1, x(0) + 2.0 * y(0)); };
    strong.g_y = [](const Vector&, const Vector&, const Params&) { return Matrix::Constant(1, 1, 2.0); };
    EXPECT_THROW(solve_y0(strong, v1(1.0), window_for(strong)), ConvergenceError);
}

TEST(GenericManifold, WeakFastCouplingConverges)
{
    SlowFastModel m = linear_fast_model(1.0, 1.0);
    m.g = [](const Vector& x, const Vector& y, const Params&) { return Vector::Constant(1, x(0) + 0.3 * y(0)); };
    m.g_y = [](const Vector&, const Vector&, const Params&) { return Matrix::Constant(1, 1, 0.3); };
    const AuxiliaryPath aux = solve_y0(m, v1(2.0), window_for(m));
    // stationary Y0 = ξ/(1 - 0.3)
    EXPECT_NEAR(aux.h_d(0), 2.0 / 0.7, 1e-6);
    EXPECT_GT(aux.iterations_y0, 1u);
    EXPECT_LT(aux.residual_y0, 1e-6);
}

TEST(ExampleManifold, ChecksRealization)
{
    ExampleModel ex;
    EXPECT_THROW(ExampleManifold{ex}, ConfigError);
    const FilteredNoise fn = filtered_exact(TimeGrid{0.0, 0.01, 10}, 0.02, 1);
    EXPECT_THROW(ExampleManifold(ex, fn), DomainError);
    const ExampleManifold ok(ex, filtered_exact(TimeGrid{0.0, 0.01, 10}, ex.eps, 1));
    EXPECT_THROW(ok.h_hat(v1(1.0), 0.005), DomainError);
    EXPECT_NEAR(ok.full(v1(0.0))(0), ex.sigma * ok.eta()(0), 0.0);
}

TEST(ExampleManifold, MatchesInvariantManifoldOracleAtSecondOrder)
{
    const ExampleModel ex = deterministic_example(1.0, 0.01);
    const GenericManifold gm(ex.model());
    const double h = gm.h_hat(v1(10.0))(0);
    const double ref = oracle::invariant_manifold({1.0, 0.01}, 10.0);
    EXPECT_LT(std::abs(h - ref), 1e-4);
}
