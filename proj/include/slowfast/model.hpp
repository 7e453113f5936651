#pragma once

// The slow-fast system
//   dx = (A x + f(x, y)) dt
//   dy = (1/ε)(B y + g(x, y)) dt + (σ/√ε) dW
// its Euler–Maruyama integration, the random change of variables to (X, Y),
// and the mean-square absorbing-set diagnostic for the scalar example.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/rng.hpp"

namespace slowfast {

using Params = std::map<std::string, double>;
using Drift = std::function<Vector(const Vector& x, const Vector& y, const Params& p)>;
using DriftJacobian = std::function<Matrix(const Vector& x, const Vector& y, const Params& p)>;

struct LipschitzBounds {
    double L_f = 0.0;
    double L_g = 0.0;
};

/// Constants of the exponential dichotomy: |e^{At}x| <= K e^{αt}|x| for t <= 0,
/// |e^{Bt}y| <= K e^{-βt}|y| for t >= 0.
struct SpectralBounds {
    double alpha = 0.0;
    double beta = 0.0;
    double K = 1.0;
};

struct SlowFastModel {
    Matrix A;
    Matrix B;
    Drift f;
    Drift g;
    DriftJacobian g_x;
    DriftJacobian g_y;
    double eps = 0.01;
    double sigma = 0.0;
    Params params;
    std::optional<LipschitzBounds> lipschitz;
    std::optional<SpectralBounds> spectral;

    Eigen::Index slow_dim() const noexcept { return A.rows(); }
    Eigen::Index fast_dim() const noexcept { return B.rows(); }
};

inline SpectralBounds estimate_spectral_bounds(const Matrix& A, const Matrix& B)
{
    SpectralBounds s;
    s.beta = fast_decay_rate(B);
    s.alpha = spectral_floor(A);
    s.K = std::max(transient_constant(A), transient_constant(B));
    return s;
}

struct ModelReport {
    SpectralBounds spectral;
    bool h2_checked = false;
    bool h2_holds = true;
    std::vector<std::string> warnings;
};

/// Checks parameters and the spectral hypotheses. H1 failures throw; an H2
/// failure (β <= K L_g) is reported as a warning because the nonlinearities of
/// interest are only locally Lipschitz.
inline ModelReport validate_model(const SlowFastModel& model)
{
    if (!(model.eps > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(model.sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
    if (model.A.rows() == 0 || model.A.rows() != model.A.cols()) {
        throw ConfigError("slow linear part A must be a non-empty square matrix");
    }
    if (!model.f || !model.g || !model.g_x || !model.g_y) {
        throw ConfigError("model drifts f, g and Jacobians g_x, g_y must all be set");
    }
    ModelReport report;
    report.spectral = model.spectral.value_or(estimate_spectral_bounds(model.A, model.B));
    if (report.spectral.beta <= 0.0) throw HypothesisError("H1 violated: beta must be positive");
    if (model.lipschitz) {
        report.h2_checked = true;
        report.h2_holds = report.spectral.beta > report.spectral.K * model.lipschitz->L_g;
        if (!report.h2_holds) {
            std::ostringstream msg;
            msg << "H2 not satisfied: beta = " << report.spectral.beta << " <= K L_g = "
                << report.spectral.K * model.lipschitz->L_g;
            report.warnings.push_back(msg.str());
        }
    }
    return report;
}

/// Largest relative mismatch between the analytic Jacobians of g and central
/// differences, over random points with coordinates uniform in [-scale, scale].
inline double jacobian_mismatch(const SlowFastModel& model, std::size_t samples, std::uint64_t seed,
                                double scale = 1.0)
{
    Xoshiro256 gen(seed);
    const auto n = model.slow_dim();
    const auto m = model.fast_dim();
    double worst = 0.0;
    auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
    };
    for (std::size_t s = 0; s < samples; ++s) {
        Vector x(n), y(m);
        for (auto& v : x) v = scale * (2.0 * gen.uniform() - 1.0);
        for (auto& v : y) v = scale * (2.0 * gen.uniform() - 1.0);
        const Matrix jx = model.g_x(x, y, model.params);
        const Matrix jy = model.g_y(x, y, model.params);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
            Vector xp = x, xm = x;
            xp(j) += h;
            xm(j) -= h;
            const Vector col = (model.g(xp, y, model.params) - model.g(xm, y, model.params)) / (2.0 * h);
            for (Eigen::Index i = 0; i < m; ++i) worst = std::max(worst, rel(jx(i, j), col(i)));
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(y(j)));
            Vector yp = y, ym = y;
            yp(j) += h;
            ym(j) -= h;
            const Vector col = (model.g(x, yp, model.params) - model.g(x, ym, model.params)) / (2.0 * h);
            for (Eigen::Index i = 0; i < m; ++i) worst = std::max(worst, rel(jy(i, j), col(i)));
        }
    }
    return worst;
}

struct Trajectory {
    TimeGrid grid;
    std::vector<Vector> slow;
    std::vector<Vector> fast;
};

inline constexpr double kStiffnessRatio = 50.0;
inline constexpr double kDivergenceThreshold = 1e8;

/// Explicit stepping of the fast equation needs dt <= ε/50.
inline void check_stiffness(double dt, double eps)
{
    const double limit = eps / kStiffnessRatio;
    if (dt > limit * (1.0 + 1e-9)) {
        std::ostringstream msg;
        msg << "stiffness guard: dt = " << dt << " exceeds epsilon/50 = " << limit
            << "; use dt <= " << limit;
        throw StiffnessError(msg.str(), limit);
    }
}

namespace detail {
inline void check_state(double norm, std::size_t step)
{
    if (!std::isfinite(norm) || norm > kDivergenceThreshold) {
        std::ostringstream msg;
        msg << "state diverged at step " << step << " (norm " << norm << ")";
        throw DivergenceError(msg.str(), step);
    }
}

/// Offset of grid's first step inside path, validating alignment and support.
inline std::size_t path_offset(const TimeGrid& grid, const NoisePath& path)
{
    if (std::abs(path.grid.dt - grid.dt) > 1e-12 * grid.dt) {
        throw DomainError("noise path step does not match the simulation grid");
    }
    const auto start = path.grid.index_of(grid.t_start);
    if (!start || *start + grid.n_steps > path.grid.n_steps) {
        throw DomainError("noise path does not cover the simulation grid");
    }
    return *start;
}
}  // namespace detail

/// Euler–Maruyama on the coupled system.
///   x_{k+1} = x_k + dt (A x_k + f(x_k, y_k))
///   y_{k+1} = y_k + (dt/ε)(B y_k + g(x_k, y_k)) + (σ/√ε) ΔW_k
/// With σ = 0 the noise path is never read.
inline Trajectory simulate_full(const SlowFastModel& model, const Vector& x0, const Vector& y0,
                                const TimeGrid& grid, const NoisePath& path)
{
    grid.validate();
    if (!(model.eps > 0.0)) throw ConfigError("epsilon must be positive");
    check_stiffness(grid.dt, model.eps);
    if (x0.size() != model.slow_dim() || y0.size() != model.fast_dim()) {
        throw DomainError("initial condition dimensions do not match the model");
    }
    std::size_t offset = 0;
    if (model.sigma != 0.0) {
        if (path.dim != static_cast<std::size_t>(model.fast_dim())) {
            throw DomainError("noise dimension does not match the fast dimension");
        }
        offset = detail::path_offset(grid, path);
    }

    Trajectory traj{grid, {}, {}};
    traj.slow.reserve(grid.n_steps + 1);
    traj.fast.reserve(grid.n_steps + 1);
    traj.slow.push_back(x0);
    traj.fast.push_back(y0);
    const double rate = grid.dt / model.eps;
    const double kick = model.sigma / std::sqrt(model.eps);
    Vector x = x0;
    Vector y = y0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        Vector x_next = x + grid.dt * (model.A * x + model.f(x, y, model.params));
        Vector y_next = y + rate * (model.B * y + model.g(x, y, model.params));
        if (model.sigma != 0.0) y_next += kick * path.increment(offset + k);
        x = std::move(x_next);
        y = std::move(y_next);
        detail::check_state(std::max(x.lpNorm<Eigen::Infinity>(), y.lpNorm<Eigen::Infinity>()), k + 1);
        traj.slow.push_back(x);
        traj.fast.push_back(y);
    }
    return traj;
}

/// The scalar example
///   dx = (0.001 x - a x y) dt
///   dy = (1/ε)(-y + x²/600) dt + (σ/√ε) dW
struct ExampleModel {
    double a = 0.1;
    double eps = 0.01;
    double sigma = 0.01;
    double slow_rate = 0.001;
    double coupling = 1.0 / 600.0;

    void validate() const
    {
        if (!(a > 0.0)) throw ConfigError("example parameter a must be positive");
        if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
        if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
    }

    /// General form with A = slow_rate, B = -1, f = -a x y, g = coupling x².
    SlowFastModel model() const
    {
        SlowFastModel m;
        m.A = Matrix::Constant(1, 1, slow_rate);
        m.B = Matrix::Constant(1, 1, -1.0);
        m.eps = eps;
        m.sigma = sigma;
        m.params = {{"a", a}};
        const double c = coupling;
        m.f = [](const Vector& x, const Vector& y, const Params& p) {
            return Vector::Constant(1, -p.at("a") * x(0) * y(0));
        };
        m.g = [c](const Vector& x, const Vector&, const Params&) {
            return Vector::Constant(1, c * x(0) * x(0));
        };
        m.g_x = [c](const Vector& x, const Vector&, const Params&) {
            return Matrix::Constant(1, 1, 2.0 * c * x(0));
        };
        m.g_y = [](const Vector&, const Vector&, const Params&) { return Matrix::Zero(1, 1).eval(); };
        return m;
    }
};

/// Scalar Euler–Maruyama for the example with the same update order as
/// simulate_full. visit(k, x, y) sees every node k = 0..n.
template <class Visit>
void integrate_example(const ExampleModel& ex, double x0, double y0, double dt,
                       std::span<const double> increments, Visit&& visit)
{
    const double rate = dt / ex.eps;
    const double kick = ex.sigma / std::sqrt(ex.eps);
    double x = x0;
    double y = y0;
    visit(std::size_t{0}, x, y);
    for (std::size_t k = 0; k < increments.size(); ++k) {
        const double x_next = x + dt * (ex.slow_rate * x + (-ex.a * x * y));
        double y_next = y + rate * (-1.0 * y + ex.coupling * x * x);
        if (ex.sigma != 0.0) y_next += kick * increments[k];
        x = x_next;
        y = y_next;
        detail::check_state(std::max(std::abs(x), std::abs(y)), k + 1);
        visit(k + 1, x, y);
    }
}

inline Trajectory simulate_example(const ExampleModel& ex, double x0, double y0, const TimeGrid& grid,
                                   const NoisePath& path)
{
    grid.validate();
    ex.validate();
    check_stiffness(grid.dt, ex.eps);
    std::span<const double> dw;
    std::vector<double> zeros;
    if (ex.sigma != 0.0) {
        if (path.dim != 1) throw DomainError("example model needs a scalar noise path");
        const auto offset = detail::path_offset(grid, path);
        dw = std::span<const double>(path.increments).subspan(offset, grid.n_steps);
    } else {
        zeros.assign(grid.n_steps, 0.0);
        dw = zeros;
    }
    Trajectory traj{grid, {}, {}};
    traj.slow.reserve(grid.n_steps + 1);
    traj.fast.reserve(grid.n_steps + 1);
    integrate_example(ex, x0, y0, grid.dt, dw, [&](std::size_t, double x, double y) {
        traj.slow.push_back(Vector::Constant(1, x));
        traj.fast.push_back(Vector::Constant(1, y));
    });
    return traj;
}

/// (X, Y) = (x, y - σ η^ε(θ_t ω)) nodewise.
inline Trajectory transform_random(const Trajectory& traj, const StationaryPath& eta, double sigma)
{
    if (!traj.grid.same_as(eta.grid)) throw DomainError("trajectory and eta grids differ");
    if (!traj.fast.empty() && static_cast<std::size_t>(traj.fast.front().size()) != eta.dim) {
        throw DomainError("eta dimension does not match the fast dimension");
    }
    Trajectory out = traj;
    if (sigma == 0.0) return out;
    for (std::size_t k = 0; k < out.fast.size(); ++k) out.fast[k] -= sigma * eta.value(k);
    return out;
}

/// (x, y) = (X, Y + σ η^ε(θ_t ω)).
inline Trajectory inverse_transform_random(const Trajectory& traj, const StationaryPath& eta, double sigma)
{
    if (!traj.grid.same_as(eta.grid)) throw DomainError("trajectory and eta grids differ");
    Trajectory out = traj;
    if (sigma == 0.0) return out;
    for (std::size_t k = 0; k < out.fast.size(); ++k) out.fast[k] += sigma * eta.value(k);
    return out;
}

struct AbsorbingReport {
    std::vector<double> t;
    std::vector<double> mean_v;
    std::vector<double> bound;
    double bound_constant = 0.0;  // 2/(a ε²) + 2 a ε² σ²
    double max_ratio = 0.0;       // max_t V(t)/bound(t)
    std::size_t violations = 0;
    std::size_t paths = 0;
};

/// Mean-square Lyapunov function of the example,
///   V = 2c ε x² + 2 a ε² (y - 1/(a ε²))²   (2c ε = ε/300 for c = 1/600),
/// checked against its Gronwall bound V(0) e^{-t/ε} + 2/(a ε²) + 2 a ε² σ².
inline AbsorbingReport absorbing_diagnostic(const ExampleModel& ex, std::span<const Trajectory> ensemble)
{
    if (ensemble.empty()) throw DomainError("absorbing diagnostic needs at least one trajectory");
    ex.validate();
    const TimeGrid& grid = ensemble.front().grid;
    for (const auto& tr : ensemble) {
        if (!tr.grid.same_as(grid) || tr.slow.size() != grid.n_steps + 1) {
            throw DomainError("ensemble trajectories must share one grid");
        }
    }
    const double eps = ex.eps;
    const double shift = 1.0 / (ex.a * eps * eps);
    const double xw = 2.0 * ex.coupling * eps;
    const double yw = 2.0 * ex.a * eps * eps;

    AbsorbingReport rep;
    rep.paths = ensemble.size();
    rep.bound_constant = 2.0 / (ex.a * eps * eps) + 2.0 * ex.a * eps * eps * ex.sigma * ex.sigma;
    for (std::size_t k = 0; k <= grid.n_steps; ++k) {
        double sum = 0.0;
        for (const auto& tr : ensemble) {
            const double x = tr.slow[k](0);
            const double dy = tr.fast[k](0) - shift;
            sum += xw * x * x + yw * dy * dy;
        }
        const double v = sum / static_cast<double>(ensemble.size());
        const double t = grid.node(k) - grid.t_start;
        rep.t.push_back(grid.node(k));
        rep.mean_v.push_back(v);
        const double b = rep.mean_v.front() * std::exp(-t / eps) + rep.bound_constant;
        rep.bound.push_back(b);
        rep.max_ratio = std::max(rep.max_ratio, v / b);
        if (v > b) ++rep.violations;
    }
    return rep;
}

}  // namespace slowfast
