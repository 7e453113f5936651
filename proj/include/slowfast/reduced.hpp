#pragma once

// The slow system on the approximate random slow manifold,
//   ẋ = A x + f(x, ĥ(x, θ_t ω) + σ η(ψ_ε ω)),
// and the distance of full-system orbits to the manifold.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/manifold.hpp"
#include "slowfast/model.hpp"
#include "slowfast/noise.hpp"

namespace slowfast {

struct SlowOptions {
    /// Use η(θ_t ψ_ε ω) instead of the time-frozen η(ψ_ε ω). Off by default;
    /// meant for sensitivity studies.
    bool time_varying_eta = false;
};

struct SlowTrajectory {
    TimeGrid grid;
    std::vector<Vector> states;
};

namespace detail {
template <class Manifold>
void check_support(const TimeGrid& grid, const Manifold& approx)
{
    grid.validate();
    if (grid.t_start < -1e-12 || grid.t_end() > approx.t_end() * (1.0 + 1e-12) + 1e-12) {
        std::ostringstream msg;
        msg << "grid mismatch: [" << grid.t_start << ", " << grid.t_end()
            << "] is not covered by the manifold realization (ends at " << approx.t_end() << ")";
        throw DomainError(msg.str());
    }
}
}  // namespace detail

/// Explicit Euler on the reduced system. The fast drift g is never evaluated
/// here; the fast variable enters only through the manifold.
template <class Manifold>
SlowTrajectory simulate_slow(const SlowFastModel& model, const Manifold& approx, const Vector& x0,
                             const TimeGrid& grid, SlowOptions opts = {})
{
    detail::check_support(grid, approx);
    if (x0.size() != model.slow_dim()) throw DomainError("x0 dimension does not match the slow dimension");
    SlowTrajectory out{grid, {}};
    out.states.reserve(grid.n_steps + 1);
    out.states.push_back(x0);
    const Vector frozen = approx.eta(0.0);
    Vector x = x0;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double t = grid.node(k);
        Vector y = approx.h_hat(x, t);
        if (model.sigma != 0.0) y += model.sigma * (opts.time_varying_eta ? approx.eta(t) : frozen);
        x = x + grid.dt * (model.A * x + model.f(x, y, model.params));
        detail::check_state(x.lpNorm<Eigen::Infinity>(), k + 1);
        out.states.push_back(x);
    }
    return out;
}

/// Scalar reduced example driven directly by a closed-form manifold; the
/// manifold's noise grid must contain every slow node. visit(k, x) sees every
/// node k = 0..n_steps.
template <class Visit>
void integrate_slow_example(const ExampleManifold& approx, double x0, const TimeGrid& grid, SlowOptions opts,
                            Visit&& visit)
{
    detail::check_support(grid, approx);
    const ExampleModel& ex = approx.example();
    std::size_t first = approx.node_at(grid.t_start);
    std::size_t stride = 1;
    if (approx.noise()) {
        const double r = grid.dt / approx.noise()->grid.dt;
        const double rr = std::round(r);
        if (rr < 1.0 || std::abs(r - rr) > 1e-9 * r) {
            throw DomainError("grid mismatch: slow step is not a multiple of the noise realization step");
        }
        stride = static_cast<std::size_t>(rr);
    }
    const double frozen = approx.eta_node(0);
    double x = x0;
    visit(std::size_t{0}, x);
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const std::size_t node = first + k * stride;
        const double eta = opts.time_varying_eta ? approx.eta_node(node) : frozen;
        const double y = approx.h_hat_node(x, node) + ex.sigma * eta;
        x = x + grid.dt * (ex.slow_rate * x + (-ex.a * x * y));
        detail::check_state(std::abs(x), k + 1);
        visit(k + 1, x);
    }
}

/// Two-sided scalar path at step dt covering [-T ε, horizon], where T is a
/// manifold truncation in fast time. The full system, the closed-form manifold
/// (filtered_from_path) and the generic manifold can all be driven by it, which
/// realizes the ψ_ε coupling between the full and the reduced systems.
inline NoisePath coupled_path(double eps, double dt, double horizon, double truncation_T, std::uint64_t seed)
{
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(horizon >= 0.0)) throw ConfigError("horizon must be non-negative");
    const auto back = static_cast<std::size_t>(std::ceil(truncation_T * eps / dt - 1e-9));
    const auto forward = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
    const TimeGrid grid{-static_cast<double>(back) * dt, dt, back + forward};
    grid.validate();
    return sample_wiener(grid, 1, seed);
}

struct AttractionSeries {
    std::vector<double> t;
    std::vector<double> d;
};

/// d(t_k) = |y(t_k) - 𝔥(x(t_k), θ_{t_k} ω)|.
template <class Manifold>
AttractionSeries attraction_distance(const Trajectory& full, const Manifold& approx)
{
    detail::check_support(full.grid, approx);
    AttractionSeries out;
    out.t.reserve(full.slow.size());
    out.d.reserve(full.slow.size());
    for (std::size_t k = 0; k < full.slow.size(); ++k) {
        const double t = full.grid.node(k);
        out.t.push_back(t);
        out.d.push_back((full.fast[k] - approx.full(full.slow[k], t)).norm());
    }
    return out;
}

}  // namespace slowfast
