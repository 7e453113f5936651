#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "slowfast/model.hpp"
#include "slowfast/noise.hpp"

using namespace slowfast;

namespace {

SlowFastModel linear_model(double b, double c)
{
    SlowFastModel m;
    m.A = Matrix::Zero(1, 1);
    m.B = Matrix::Constant(1, 1, -b);
    m.f = [](const Vector& x, const Vector&, const Params&) { return Vector::Zero(x.size()).eval(); };
    m.g = [c](const Vector& x, const Vector&, const Params&) { return Vector::Constant(1, c * x(0)); };
    m.g_x = [c](const Vector&, const Vector&, const Params&) { return Matrix::Constant(1, 1, c); };
    m.g_y = [](const Vector&, const Vector&, const Params&) { return Matrix::Zero(1, 1).eval(); };
    m.sigma = 0.0;
    return m;
}

}  // namespace

TEST(Model, ExampleSatisfiesSpectralHypothesis)
{
    const ModelReport r = validate_model(ExampleModel{}.model());
    EXPECT_DOUBLE_EQ(r.spectral.beta, 1.0);
    EXPECT_DOUBLE_EQ(r.spectral.alpha, 0.001);
    EXPECT_FALSE(r.h2_checked);
}

TEST(Model, UnstableFastPartIsRejected)
{
    SlowFastModel m = linear_model(-0.5, 1.0);
    EXPECT_THROW(validate_model(m), HypothesisError);
}

TEST(Model, LipschitzFailureIsOnlyAWarning)
{
    SlowFastModel m = linear_model(1.0, 1.0);
    m.lipschitz = LipschitzBounds{1.0, 5.0};
    const ModelReport r = validate_model(m);
    EXPECT_TRUE(r.h2_checked);
    EXPECT_FALSE(r.h2_holds);
    ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Model, MissingDriftIsAConfigError)
{
    SlowFastModel m = linear_model(1.0, 1.0);
    m.g_y = nullptr;
    EXPECT_THROW(validate_model(m), ConfigError);
    SlowFastModel n = linear_model(1.0, 1.0);
    n.eps = 0.0;
    EXPECT_THROW(validate_model(n), ConfigError);
}

TEST(Model, ExampleJacobiansMatchFiniteDifferences)
{
    EXPECT_LT(jacobian_mismatch(ExampleModel{}.model(), 50, 3, 10.0), 1e-7);
}

TEST(Model, StiffnessGuard)
{
    EXPECT_NO_THROW(check_stiffness(2e-4, 0.01));
    try {
        check_stiffness(2.5e-4, 0.01);
        FAIL();
    } catch (const StiffnessError& e) {
        EXPECT_DOUBLE_EQ(e.suggested_dt(), 2e-4);
        EXPECT_NE(std::string(e.what()).find("stiffness guard"), std::string::npos);
    }
}

TEST(Model, GenericAndScalarIntegratorsAgreeBitwise)
{
    const ExampleModel ex;
    const TimeGrid grid{0.0, 2e-4, 5000};
    const NoisePath path = sample_wiener(grid, 1, 42);
    const Trajectory a = simulate_full(ex.model(), Vector::Constant(1, 10.0), Vector::Constant(1, 1.0 / 6.0), grid, path);
    const Trajectory b = simulate_example(ex, 10.0, 1.0 / 6.0, grid, path);
    ASSERT_EQ(a.slow.size(), grid.n_steps + 1);
    for (std::size_t k = 0; k <= grid.n_steps; ++k) {
        ASSERT_EQ(a.slow[k](0), b.slow[k](0)) << k;
        ASSERT_EQ(a.fast[k](0), b.fast[k](0)) << k;
    }
}

TEST(Model, OriginIsInvariantWithoutNoise)
{
    ExampleModel ex;
    ex.sigma = 0.0;
    const TimeGrid grid{0.0, 2e-4, 1000};
    const Trajectory t = simulate_example(ex, 0.0, 0.0, grid, NoisePath{});
    for (std::size_t k = 0; k <= grid.n_steps; ++k) {
        EXPECT_EQ(t.slow[k](0), 0.0);
        EXPECT_EQ(t.fast[k](0), 0.0);
    }
}

TEST(Model, DivergenceIsReported)
{
    ExampleModel ex;
    ex.sigma = 0.0;
    try {
        simulate_example(ex, 1e5, -1e5, TimeGrid{0.0, 2e-4, 100}, NoisePath{});
        FAIL();
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.exit_code(), 3);
        EXPECT_GE(e.step(), 1u);
    }
}

TEST(Model, NoiseMustCoverGrid)
{
    const ExampleModel ex;
    const NoisePath path = sample_wiener(TimeGrid{0.0, 2e-4, 10}, 1, 1);
    EXPECT_THROW(simulate_example(ex, 1.0, 0.0, TimeGrid{0.0, 2e-4, 20}, path), DomainError);
    EXPECT_THROW(simulate_example(ex, 1.0, 0.0, TimeGrid{0.0, 1e-4, 10}, path), DomainError);
}

TEST(Model, RandomTransformRoundTrip)
{
    const ExampleModel ex;
    const TimeGrid grid{0.0, 2e-4, 2000};
    const NoisePath path = sample_wiener(grid, 1, 9);
    const Trajectory traj = simulate_example(ex, 10.0, 1.0 / 6.0, grid, path);
    const StationaryPath eta = ou_stationary_path(Matrix::Constant(1, 1, -1.0), ex.eps, path);
    const Trajectory back = inverse_transform_random(transform_random(traj, eta, ex.sigma), eta, ex.sigma);
    for (std::size_t k = 0; k <= grid.n_steps; ++k) {
        EXPECT_EQ(back.slow[k](0), traj.slow[k](0));
        const double scale = std::max(std::abs(traj.fast[k](0)), std::abs(ex.sigma * eta(k)));
        EXPECT_LE(std::abs(back.fast[k](0) - traj.fast[k](0)), 2.0 * std::numeric_limits<double>::epsilon() * scale);
    }
    const Trajectory same = transform_random(traj, eta, 0.0);
    EXPECT_EQ(same.fast[5](0), traj.fast[5](0));
}

TEST(Model, TransformedFastVariableSolvesRandomEquation)
{
    // Y = y - σ η^ε obeys dY = (1/ε)(-Y + g(x)) dt. With Euler–Maruyama for y and
    // the exact OU step for η, one step of Y leaves the residual
    //   σ (1/√ε - γ/√dt) ΔW/dt + σ η ((1 - φ)/dt - 1/ε),
    // φ = e^{-dt/ε}, γ² = (1 - φ²)/2.
    const ExampleModel ex;
    const TimeGrid grid{0.0, 2e-5, 5000};
    const NoisePath path = sample_wiener(grid, 1, 13);
    const Trajectory traj = simulate_example(ex, 10.0, 1.0 / 6.0, grid, path);
    const StationaryPath eta = ou_stationary_path(Matrix::Constant(1, 1, -1.0), ex.eps, path);
    const Trajectory Y = transform_random(traj, eta, ex.sigma);
    const double phi = std::exp(-grid.dt / ex.eps);
    const double gamma = std::sqrt((1.0 - phi * phi) / 2.0);
    double worst = 0.0, largest = 0.0;
    for (std::size_t k = 0; k + 1 < grid.n_steps; ++k) {
        const double x = traj.slow[k](0);
        const double drift = (-Y.fast[k](0) + ex.coupling * x * x) / ex.eps;
        const double lhs = (Y.fast[k + 1](0) - Y.fast[k](0)) / grid.dt;
        const double residual = ex.sigma * (1.0 / std::sqrt(ex.eps) - gamma / std::sqrt(grid.dt)) * path(k) / grid.dt +
                                ex.sigma * eta(k) * ((1.0 - phi) / grid.dt - 1.0 / ex.eps);
        worst = std::max(worst, std::abs(lhs - drift - residual));
        largest = std::max(largest, std::abs(lhs));
    }
    EXPECT_LT(worst, 1e-9 * largest);
}

TEST(Model, AbsorbingBoundHoldsForSmallEnsemble)
{
    const ExampleModel ex;
    const TimeGrid grid{0.0, 2e-4, 5000};
    std::vector<Trajectory> ensemble;
    for (std::uint64_t s = 0; s < 20; ++s) {
        ensemble.push_back(simulate_example(ex, 10.0, 1.0 / 6.0, grid, sample_wiener(grid, 1, s)));
    }
    const AbsorbingReport rep = absorbing_diagnostic(ex, ensemble);
    EXPECT_EQ(rep.violations, 0u);
    EXPECT_EQ(rep.paths, 20u);
    EXPECT_NEAR(rep.bound_constant, 2.0 / (0.1 * 1e-4) + 2.0 * 0.1 * 1e-4 * 1e-4, 1e-9);
    EXPECT_LE(rep.max_ratio, 1.0);
    EXPECT_THROW(absorbing_diagnostic(ex, std::vector<Trajectory>{}), DomainError);
}

TEST(Model, RingOfOrbitsContractsForUnitCoupling)
{
    // ε = 1/6, a = 1: orbits started on a circle of radius 10 move into |x| < 7.
    ExampleModel ex;
    ex.a = 1.0;
    ex.eps = 1.0 / 6.0;
    ex.sigma = 0.0;
    const double dt = ex.eps / 50.0;
    const TimeGrid grid{0.0, dt, static_cast<std::size_t>(std::llround(50.0 / dt))};
    for (int i = 0; i < 8; ++i) {
        const double th = 2.0 * M_PI * i / 8.0;
        const double x0 = 10.0 * std::cos(th);
        if (std::abs(x0) < 1e-9) continue;
        const Trajectory t = simulate_example(ex, x0, 10.0 * std::sin(th), grid, NoisePath{});
        const double x_end = t.slow.back()(0);
        EXPECT_LT(std::abs(x_end), 7.0) << i;
        EXPECT_LT(std::abs(x_end), std::abs(x0)) << i;
        EXPECT_GT(std::abs(x_end), std::sqrt(0.6)) << i;  // still above the equilibrium
    }
}
