#pragma once

// Wiener paths, the sample-rescaling map, stationary Ornstein–Uhlenbeck paths
// and truncated stationary stochastic integrals over (-inf, 0].
//
// Gaussian generation: each stream is xoshiro256** seeded through SplitMix64
// from derive_seed(seed, {stream}); normals come from Box–Muller. A two-sided
// path uses stream 0 for steps starting at t >= 0 (counted forward from t = 0)
// and stream 1 for steps starting at t < 0 (counted backward from t = 0), so
// any two grids aligned with t = 0 see the same increment on shared steps.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "slowfast/errors.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/rng.hpp"

namespace slowfast {

inline constexpr std::uint64_t kPositiveTimeStream = 0;
inline constexpr std::uint64_t kNegativeTimeStream = 1;
inline constexpr std::uint64_t kStationaryInitStream = 2;

struct TimeGrid {
    double t_start = 0.0;
    double dt = 0.0;
    std::size_t n_steps = 0;

    double node(std::size_t k) const noexcept { return t_start + static_cast<double>(k) * dt; }
    double t_end() const noexcept { return node(n_steps); }

    void validate() const
    {
        if (!(dt > 0.0) || !std::isfinite(dt) || !std::isfinite(t_start)) {
            std::ostringstream msg;
            msg << "invalid time grid: dt must be positive and finite (dt = " << dt << ")";
            throw ConfigError(msg.str());
        }
    }

    /// Index of the node nearest to t = 0, counted from t_start.
    long long origin_offset() const noexcept { return std::llround(t_start / dt); }

    /// Node index of t when t lands on a node (relative tolerance 1e-9 of dt).
    std::optional<std::size_t> index_of(double t) const noexcept
    {
        const double r = (t - t_start) / dt;
        const double k = std::round(r);
        if (std::abs(r - k) > 1e-9 * std::max(1.0, std::abs(r))) return std::nullopt;
        if (k < 0.0 || k > static_cast<double>(n_steps)) return std::nullopt;
        return static_cast<std::size_t>(k);
    }

    bool same_as(const TimeGrid& other) const noexcept
    {
        return n_steps == other.n_steps && std::abs(dt - other.dt) <= 1e-12 * dt &&
               std::abs(t_start - other.t_start) <= 1e-9 * dt;
    }
};

/// Discrete Wiener increments ΔW_k on a grid, stored row-major (step, component).
struct NoisePath {
    TimeGrid grid;
    std::size_t dim = 1;
    std::uint64_t seed = 0;
    std::vector<double> increments;

    std::size_t size() const noexcept { return grid.n_steps; }
    double operator()(std::size_t k, std::size_t c = 0) const noexcept { return increments[k * dim + c]; }
    Eigen::Map<const Vector> increment(std::size_t k) const
    {
        return Eigen::Map<const Vector>(increments.data() + k * dim, static_cast<Eigen::Index>(dim));
    }
    std::span<const double> scalar_increments() const noexcept { return increments; }
};

inline NoisePath sample_wiener(const TimeGrid& grid, std::size_t dim, std::uint64_t seed)
{
    grid.validate();
    if (dim == 0) throw ConfigError("noise dimension must be at least 1");

    NoisePath path{grid, dim, seed, std::vector<double>(grid.n_steps * dim)};
    const double scale = std::sqrt(grid.dt);
    const long long first = grid.origin_offset();
    const long long last = first + static_cast<long long>(grid.n_steps);  // one past
    const auto d = static_cast<long long>(dim);

    if (first < 0) {
        GaussianStream negative(derive_seed(seed, {kNegativeTimeStream}));
        const long long stop = std::min(last, 0LL);
        for (long long back = 0; back < -first; ++back) {
            const long long j = -back - 1;  // step [j dt, (j+1) dt]
            for (long long c = 0; c < d; ++c) {
                const double z = negative();
                if (j < stop) path.increments[static_cast<std::size_t>((j - first) * d + c)] = scale * z;
            }
        }
    }
    if (last > 0) {
        GaussianStream positive(derive_seed(seed, {kPositiveTimeStream}));
        for (long long j = 0; j < last; ++j) {
            for (long long c = 0; c < d; ++c) {
                const double z = positive();
                if (j >= first) path.increments[static_cast<std::size_t>((j - first) * d + c)] = scale * z;
            }
        }
    }
    return path;
}

/// Realizes W_τ(ψ_ε ω) = W_{τε}(ω)/√ε on a fast-time grid. The default target
/// is the full source support at step dt/ε; a coarser target step aggregates
/// target.dt·ε/dt source increments per output step.
inline NoisePath rescale_noise(const NoisePath& path, double eps,
                               std::optional<TimeGrid> target = std::nullopt)
{
    if (!(eps > 0.0)) throw ConfigError("rescaling requires epsilon > 0");
    const TimeGrid& src = path.grid;
    const TimeGrid out = target.value_or(TimeGrid{src.t_start / eps, src.dt / eps, src.n_steps});
    out.validate();

    const double ratio_real = out.dt * eps / src.dt;
    const double ratio_round = std::round(ratio_real);
    if (ratio_round < 1.0 || std::abs(ratio_real - ratio_round) > 1e-9 * ratio_real) {
        throw DomainError("rescaled step must be a whole multiple of the source step divided by epsilon");
    }
    const double offset_real = (out.t_start * eps - src.t_start) / src.dt;
    const double offset_round = std::round(offset_real);
    if (std::abs(offset_real - offset_round) > 1e-9 * std::max(1.0, std::abs(offset_real))) {
        throw DomainError("rescaled window start does not fall on a source node");
    }
    const auto ratio = static_cast<std::size_t>(ratio_round);
    if (offset_round < 0.0 ||
        static_cast<std::size_t>(offset_round) + ratio * out.n_steps > src.n_steps) {
        throw DomainError("requested rescaled window exceeds source path support");
    }
    const auto offset = static_cast<std::size_t>(offset_round);

    NoisePath result{out, path.dim, path.seed, std::vector<double>(out.n_steps * path.dim)};
    const double inv_sqrt_eps = 1.0 / std::sqrt(eps);
    for (std::size_t k = 0; k < out.n_steps; ++k) {
        for (std::size_t c = 0; c < path.dim; ++c) {
            double sum = 0.0;
            for (std::size_t r = 0; r < ratio; ++r) sum += path(offset + k * ratio + r, c);
            result.increments[k * path.dim + c] = sum * inv_sqrt_eps;
        }
    }
    return result;
}

enum class ProcessTag { eta_eps, eta_rescaled };

/// Values of a stationary process at every node of a grid.
struct StationaryPath {
    TimeGrid grid;
    std::size_t dim = 1;
    ProcessTag tag = ProcessTag::eta_eps;
    std::vector<double> values;  // (n_steps + 1) * dim

    std::size_t nodes() const noexcept { return grid.n_steps + 1; }
    double operator()(std::size_t k, std::size_t c = 0) const noexcept { return values[k * dim + c]; }
    Eigen::Map<const Vector> value(std::size_t k) const
    {
        return Eigen::Map<const Vector>(values.data() + k * dim, static_cast<Eigen::Index>(dim));
    }
};

/// Stationary solution η^ε of dη = (B/ε) η dt + (1/√ε) dW by its exact linear
/// recursion η_{k+1} = e^{B dt/ε} η_k + ζ_k, Cov ζ_k = Σ_∞ - e^{B dt/ε} Σ_∞ e^{Bᵀ dt/ε},
/// where B Σ_∞ + Σ_∞ Bᵀ = -I. ζ_k is the Cholesky image of ΔW_k/√dt; the first
/// node is drawn from N(0, Σ_∞) on the path's stationary-init stream.
inline StationaryPath ou_stationary_path(const Matrix& B, double eps, const NoisePath& path)
{
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    const auto m = static_cast<std::size_t>(B.rows());
    if (m != path.dim) throw DomainError("noise dimension does not match B");
    fast_decay_rate(B);  // H1 check

    const TimeGrid& grid = path.grid;
    StationaryPath out{grid, m, eps == 1.0 ? ProcessTag::eta_rescaled : ProcessTag::eta_eps,
                       std::vector<double>((grid.n_steps + 1) * m)};
    GaussianStream init(derive_seed(path.seed, {kStationaryInitStream}));
    const double inv_sqrt_dt = 1.0 / std::sqrt(grid.dt);

    if (m == 1) {
        const double b = -B(0, 0);
        const double z = b * grid.dt / eps;
        const double phi = std::exp(-z);
        const double s_inf = 0.5 / b;
        const double s_dt = -std::expm1(-2.0 * z) * s_inf;
        const double gain = std::sqrt(s_dt) * inv_sqrt_dt;
        double eta = std::sqrt(s_inf) * init();
        out.values[0] = eta;
        for (std::size_t k = 0; k < grid.n_steps; ++k) {
            eta = phi * eta + gain * path(k);
            out.values[k + 1] = eta;
        }
        return out;
    }

    const Matrix phi = expm(B * (grid.dt / eps));
    const Matrix s_inf = stationary_covariance(B);
    const Matrix s_dt = s_inf - phi * s_inf * phi.transpose();
    const Matrix gain = covariance_factor(0.5 * (s_dt + s_dt.transpose())) * inv_sqrt_dt;
    Vector z(static_cast<Eigen::Index>(m));
    for (auto& v : z) v = init();
    Vector eta = covariance_factor(s_inf) * z;
    Eigen::Map<Vector>(out.values.data(), static_cast<Eigen::Index>(m)) = eta;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        eta = phi * eta + gain * path.increment(k);
        Eigen::Map<Vector>(out.values.data() + (k + 1) * m, static_cast<Eigen::Index>(m)) = eta;
    }
    return out;
}

/// Truncation horizon ln(1/tol)/β_min for kernels decaying like e^{β_min s}.
inline double default_truncation(double beta_min, double tol = 1e-8)
{
    if (!(beta_min > 0.0)) throw HypothesisError("H1 violated: decay rate must be positive");
    return std::log(1.0 / tol) / beta_min;
}

/// Σ_k kernel(s_k) ΔW_k over the steps inside [-T, 0], with s_k the step
/// midpoint. Scalar paths only.
template <class Kernel>
double stationary_integral(Kernel&& kernel, const NoisePath& path, double truncation_T)
{
    if (!(truncation_T > 0.0)) throw ConfigError("truncation horizon must be positive");
    if (path.dim != 1) throw DomainError("stationary_integral expects a scalar noise path");
    const TimeGrid& g = path.grid;
    const double slack = 1e-9 * g.dt;
    if (g.t_start > -truncation_T + slack || g.t_end() < -slack) {
        std::ostringstream msg;
        msg << "noise path support [" << g.t_start << ", " << g.t_end()
            << "] does not cover the truncation window [" << -truncation_T << ", 0]";
        throw DomainError(msg.str());
    }
    const auto first = static_cast<std::size_t>(
        std::max(0.0, std::ceil((-truncation_T - g.t_start) / g.dt - 1e-9)));
    const auto stop = static_cast<std::size_t>(std::floor((0.0 - g.t_start) / g.dt + 1e-9));
    double sum = 0.0;
    for (std::size_t k = first; k < stop; ++k) {
        sum += kernel(g.node(k) + 0.5 * g.dt) * path(k);
    }
    return sum;
}

/// The two shifted stationary integrals carried by the example manifold,
/// sampled on a physical-time grid t_k >= 0 with τ = t/ε:
///   eta[k] = ∫_{-∞}^0 e^{s} dW_s(θ_τ ψ_ε ω)
///   ise[k] = ∫_{-∞}^0 s e^{s} dW_s(θ_τ ψ_ε ω)
struct FilteredNoise {
    TimeGrid grid;
    double eps = 1.0;
    std::vector<double> eta;
    std::vector<double> ise;

    std::size_t node_at(double t) const
    {
        const auto k = grid.index_of(t);
        if (!k) {
            std::ostringstream msg;
            msg << "time " << t << " is not a node of the noise realization grid [" << grid.t_start
                << ", " << grid.t_end() << "] step " << grid.dt;
            throw DomainError(msg.str());
        }
        return *k;
    }
};

/// Builds FilteredNoise from a two-sided physical path by the exact recursion
/// of the midpoint sums used by stationary_integral; values coincide with
/// stationary_integral on the rescaled path up to rounding.
inline FilteredNoise filtered_from_path(const NoisePath& path, double eps, double truncation_T,
                                        std::size_t stride = 1)
{
    if (path.dim != 1) throw DomainError("filtered noise needs a scalar path");
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    if (stride == 0) throw ConfigError("stride must be at least 1");
    const TimeGrid& g = path.grid;
    const auto origin = g.index_of(0.0);
    const double h = g.dt / eps;
    if (!origin || static_cast<double>(*origin) * h < truncation_T * (1.0 - 1e-9)) {
        throw DomainError("noise path does not reach back over the truncation window before t = 0");
    }
    const double decay = std::exp(-h);
    const double mid = std::exp(-0.5 * h);
    const double inv_sqrt_eps = 1.0 / std::sqrt(eps);

    FilteredNoise out;
    out.eps = eps;
    const std::size_t n_out = (g.n_steps - *origin) / stride;
    out.grid = TimeGrid{0.0, g.dt * static_cast<double>(stride), n_out};
    out.eta.reserve(n_out + 1);
    out.ise.reserve(n_out + 1);

    double s0 = 0.0;
    double s1 = 0.0;
    for (std::size_t k = 0;; ++k) {
        if (k >= *origin && (k - *origin) % stride == 0) {
            out.eta.push_back(s0);
            out.ise.push_back(s1);
            if (out.eta.size() == n_out + 1) break;
        }
        if (k == g.n_steps) break;
        const double dw = path(k) * inv_sqrt_eps;
        s1 = decay * (s1 - h * s0) - 0.5 * h * mid * dw;
        s0 = decay * s0 + mid * dw;
    }
    return out;
}

namespace detail {
// ∫_0^Δ v^p e^{-2v} dv for p = 0, 1, 2.
inline double exp_moment(int p, double delta)
{
    if (delta < 1.0) {
        double sum = 0.0;
        double coef = 1.0;  // (-2)^n / n!
        for (int n = 0; n < 40; ++n) {
            sum += coef * std::pow(delta, n + p + 1) / (n + p + 1);
            coef *= -2.0 / (n + 1);
        }
        return sum;
    }
    const double e = std::exp(-2.0 * delta);
    switch (p) {
    case 0: return 0.5 * (1.0 - e);
    case 1: return 0.25 * (1.0 - e * (1.0 + 2.0 * delta));
    default: return 0.25 * (1.0 - e * (1.0 + 2.0 * delta + 2.0 * delta * delta));
    }
}
}  // namespace detail

/// Exact joint simulation of (eta, ise) at the nodes of a physical grid,
/// started from their joint stationary law (variances 1/2, 1/4, covariance -1/4).
inline FilteredNoise filtered_exact(const TimeGrid& grid, double eps, std::uint64_t seed)
{
    grid.validate();
    if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
    const double delta = grid.dt / eps;
    const double decay = std::exp(-delta);
    const double m0 = detail::exp_moment(0, delta);
    const double m1 = detail::exp_moment(1, delta);
    const double m2 = detail::exp_moment(2, delta);
    const double l00 = std::sqrt(m0);
    const double l10 = -m1 / l00;
    const double l11 = std::sqrt(std::max(m2 - l10 * l10, 0.0));

    GaussianStream normal(derive_seed(seed, {kPositiveTimeStream}));
    FilteredNoise out;
    out.grid = grid;
    out.eps = eps;
    out.eta.resize(grid.n_steps + 1);
    out.ise.resize(grid.n_steps + 1);
    const double z0 = normal();
    const double z1 = normal();
    double j0 = std::sqrt(0.5) * z0;
    double j1 = -std::sqrt(2.0) / 4.0 * z0 + std::sqrt(0.125) * z1;
    out.eta[0] = j0;
    out.ise[0] = j1;
    for (std::size_t k = 0; k < grid.n_steps; ++k) {
        const double a = normal();
        const double b = normal();
        const double next0 = decay * j0 + l00 * a;
        const double next1 = decay * (j1 - delta * j0) + l10 * a + l11 * b;
        j0 = next0;
        j1 = next1;
        out.eta[k + 1] = j0;
        out.ise[k + 1] = j1;
    }
    return out;
}

}  // namespace slowfast
