#pragma once

// First-order approximation ĥ = h_d + ε h_1 of the random slow manifold.
//
// Both auxiliary paths Y0, Y1 live on the fast-time window s ∈ [-T, 0]. Each is
// the bounded solution of a linear-in-B equation Z' = B Z + q(s), written as
// the fixed point of
//     Z(s) = ∫_{-∞}^s e^{B(s-r)} q(r; Z) dr
// and found by Picard iteration. A sweep uses the exponential integrator that
// is exact for q linear on each step, and the quadratures h_d = ∫ e^{-Bs} q ds,
// h_1 = ∫ e^{-Bs} q ds use the same weights, so Y(0) and the quadrature agree
// up to the e^{-βT} tail.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/model.hpp"
#include "slowfast/noise.hpp"

namespace slowfast {

struct ManifoldOptions {
    double truncation_tol = 1e-8;
    std::optional<double> truncation_T;  // fast time; default ln(1/tol)/β
    std::size_t quad_steps = 2000;       // used when no noise path fixes the step
    double picard_tol = 1e-13;           // sup-norm change relative to max(1, |Z|)
    std::size_t max_picard = 50;
    double residual_tol = 1e-6;
};

/// Noise seen by the auxiliary equations: η(θ_s ψ_ε ω) at s_k = -T + k h,
/// k = 0..steps. An empty span means η ≡ 0.
struct FastWindow {
    double h = 0.0;
    std::size_t steps = 0;
    std::size_t dim = 1;
    std::span<const double> eta;

    double node(std::size_t k) const noexcept
    {
        return -static_cast<double>(steps - k) * h;
    }
    bool noisy() const noexcept { return !eta.empty(); }
    Eigen::Map<const Vector> eta_at(std::size_t k) const
    {
        return Eigen::Map<const Vector>(eta.data() + k * dim, static_cast<Eigen::Index>(dim));
    }
};

inline FastWindow deterministic_window(double truncation_T, std::size_t steps, std::size_t dim)
{
    if (!(truncation_T > 0.0) || steps == 0) throw ConfigError("quadrature window must be non-empty");
    return FastWindow{truncation_T / static_cast<double>(steps), steps, dim, {}};
}

struct AuxiliaryPath {
    double h = 0.0;
    std::size_t steps = 0;
    std::vector<Vector> y0;
    std::vector<Vector> y1;
    Vector h_d;
    Vector h_1;
    std::size_t iterations_y0 = 0;
    std::size_t iterations_y1 = 0;
    double residual_y0 = 0.0;
    double residual_y1 = 0.0;

    double node(std::size_t k) const noexcept { return -static_cast<double>(steps - k) * h; }
};

inline double resolve_truncation(const Matrix& B, const ManifoldOptions& opts)
{
    if (opts.truncation_T) {
        if (!(*opts.truncation_T > 0.0)) throw ConfigError("truncation_T must be positive");
        return *opts.truncation_T;
    }
    return default_truncation(fast_decay_rate(B), opts.truncation_tol);
}

namespace detail {

inline std::vector<Vector> exponential_sweep(const ExponentialWeights& w, const std::vector<Vector>& q,
                                             const Vector& start)
{
    std::vector<Vector> z;
    z.reserve(q.size());
    z.push_back(start);
    for (std::size_t k = 0; k + 1 < q.size(); ++k) {
        z.push_back(w.phi * z.back() + w.w0 * q[k] + w.w1 * q[k + 1]);
    }
    return z;
}

/// ∫_{-T}^0 e^{-Bs} q(s) ds for piecewise-linear q.
inline Vector exponential_quadrature(const ExponentialWeights& w, const std::vector<Vector>& q)
{
    Vector acc = Vector::Zero(q.front().size());
    for (std::size_t k = 0; k + 1 < q.size(); ++k) acc = w.phi * acc + w.w0 * q[k] + w.w1 * q[k + 1];
    return acc;
}

/// Bounded solution at s = -T of Z' = B Z + q0 + q1 (s + T), the linear
/// extrapolation of the forcing into the past.
inline Vector bounded_start(const Eigen::PartialPivLU<Matrix>& B_lu, const Vector& q0, const Vector& q1,
                            double h)
{
    const Vector slope = (q1 - q0) / h;
    const Vector b_inv_slope = B_lu.solve(slope);
    return -B_lu.solve(q0) - B_lu.solve(b_inv_slope);
}

inline double sup_norm(const std::vector<Vector>& v)
{
    double m = 0.0;
    for (const auto& x : v) m = std::max(m, x.lpNorm<Eigen::Infinity>());
    return m;
}

/// Picard iteration Z <- sweep(q(Z)). Returns the converged path and the
/// number of passes that changed it.
template <class Forcing>
std::pair<std::vector<Vector>, std::size_t> picard(const ExponentialWeights& w,
                                                    const Eigen::PartialPivLU<Matrix>& B_lu, double h,
                                                    std::size_t nodes, Eigen::Index dim, Forcing&& forcing,
                                                    const ManifoldOptions& opts, const char* what)
{
    std::vector<Vector> z(nodes, Vector::Zero(dim));
    std::vector<Vector> q(nodes);
    for (std::size_t it = 1; it <= opts.max_picard; ++it) {
        for (std::size_t k = 0; k < nodes; ++k) q[k] = forcing(k, z[k]);
        std::vector<Vector> next = exponential_sweep(w, q, bounded_start(B_lu, q[0], q[1], h));
        double change = 0.0;
        for (std::size_t k = 0; k < nodes; ++k) {
            change = std::max(change, (next[k] - z[k]).lpNorm<Eigen::Infinity>());
        }
        z = std::move(next);
        if (!std::isfinite(change)) break;
        if (change <= opts.picard_tol * std::max(1.0, sup_norm(z))) return {std::move(z), it - 1};
    }
    std::ostringstream msg;
    msg << what << ": Picard iteration did not converge within " << opts.max_picard << " passes";
    throw ConvergenceError(msg.str());
}

inline void check_window(const SlowFastModel& model, const FastWindow& window)
{
    if (window.steps < 2) throw ConfigError("quadrature window needs at least two steps");
    if (window.noisy()) {
        if (window.dim != static_cast<std::size_t>(model.fast_dim()) ||
            window.eta.size() != (window.steps + 1) * window.dim) {
            throw DomainError("noise window does not match the fast dimension or step count");
        }
    }
}

inline Vector fast_argument(const Vector& y, const FastWindow& window, double sigma, std::size_t k)
{
    if (!window.noisy() || sigma == 0.0) return y;
    return y + sigma * window.eta_at(k);
}

}  // namespace detail

/// Y0' = B Y0 + g(ξ, Y0 + σ η(θ_s ψ_ε ω)) on [-T, 0] with Y0(0) = h_d(ξ, ω).
/// Fills y0, h_d, iterations_y0 and residual_y0 = |Y0(0) - h_d|.
inline AuxiliaryPath solve_y0(const SlowFastModel& model, const Vector& xi, const FastWindow& window,
                              const ManifoldOptions& opts = {})
{
    fast_decay_rate(model.B);
    detail::check_window(model, window);
    if (xi.size() != model.slow_dim()) throw DomainError("xi dimension does not match the slow dimension");
    const auto m = model.fast_dim();
    const std::size_t nodes = window.steps + 1;
    const ExponentialWeights w = exponential_weights(model.B, window.h);
    const Eigen::PartialPivLU<Matrix> B_lu(model.B);

    auto forcing = [&](std::size_t k, const Vector& y) {
        return model.g(xi, detail::fast_argument(y, window, model.sigma, k), model.params);
    };
    auto [path, iterations] = detail::picard(w, B_lu, window.h, nodes, m, forcing, opts, "solve_y0");

    std::vector<Vector> q(nodes);
    for (std::size_t k = 0; k < nodes; ++k) q[k] = forcing(k, path[k]);
    AuxiliaryPath aux;
    aux.h = window.h;
    aux.steps = window.steps;
    aux.h_d = detail::exponential_quadrature(w, q);
    aux.residual_y0 = (path.back() - aux.h_d).lpNorm<Eigen::Infinity>();
    aux.iterations_y0 = iterations;
    aux.y0 = std::move(path);
    if (aux.residual_y0 > opts.residual_tol) {
        std::ostringstream msg;
        msg << "solve_y0: fixed-point residual " << aux.residual_y0 << " exceeds " << opts.residual_tol;
        throw ConvergenceError(msg.str());
    }
    return aux;
}

/// Y1' = (B + g_y) Y1 + g_x {A s ξ + ∫_0^s f(ξ, Y0 + σ η) dr} on [-T, 0] with
/// Y1(0) = h_1(ξ, ω). The inner integral is a nested trapezoid on the same grid.
inline void solve_y1(const SlowFastModel& model, const Vector& xi, const FastWindow& window,
                     AuxiliaryPath& aux, const ManifoldOptions& opts = {})
{
    detail::check_window(model, window);
    const std::size_t nodes = window.steps + 1;
    if (aux.y0.size() != nodes) throw DomainError("Y0 path does not match the quadrature window");
    const auto m = model.fast_dim();
    const ExponentialWeights w = exponential_weights(model.B, window.h);
    const Eigen::PartialPivLU<Matrix> B_lu(model.B);

    std::vector<Vector> drive(nodes);
    std::vector<Matrix> coupling(nodes);
    {
        std::vector<Vector> fval(nodes);
        std::vector<Matrix> gx(nodes);
        for (std::size_t k = 0; k < nodes; ++k) {
            const Vector y = detail::fast_argument(aux.y0[k], window, model.sigma, k);
            fval[k] = model.f(xi, y, model.params);
            gx[k] = model.g_x(xi, y, model.params);
            coupling[k] = model.g_y(xi, y, model.params);
        }
        // G(s) = ∫_0^s f dr, accumulated backward from G(0) = 0.
        Vector inner = Vector::Zero(model.slow_dim());
        std::vector<Vector> G(nodes);
        G[nodes - 1] = inner;
        for (std::size_t k = nodes - 1; k-- > 0;) {
            inner -= 0.5 * window.h * (fval[k] + fval[k + 1]);
            G[k] = inner;
        }
        for (std::size_t k = 0; k < nodes; ++k) {
            drive[k] = gx[k] * (model.A * xi * window.node(k) + G[k]);
        }
    }
    auto forcing = [&](std::size_t k, const Vector& y1) -> Vector { return drive[k] + coupling[k] * y1; };
    auto [path, iterations] = detail::picard(w, B_lu, window.h, nodes, m, forcing, opts, "solve_y1");

    std::vector<Vector> q(nodes);
    for (std::size_t k = 0; k < nodes; ++k) q[k] = forcing(k, path[k]);
    aux.h_1 = detail::exponential_quadrature(w, q);
    aux.residual_y1 = (path.back() - aux.h_1).lpNorm<Eigen::Infinity>();
    aux.iterations_y1 = iterations;
    aux.y1 = std::move(path);
    if (aux.residual_y1 > opts.residual_tol) {
        std::ostringstream msg;
        msg << "solve_y1: fixed-point residual " << aux.residual_y1 << " exceeds " << opts.residual_tol;
        throw ConvergenceError(msg.str());
    }
}

inline Vector h_d(const SlowFastModel& model, const Vector& xi, const FastWindow& window,
                  const ManifoldOptions& opts = {})
{
    return solve_y0(model, xi, window, opts).h_d;
}

inline Vector h_1(const SlowFastModel& model, const Vector& xi, const FastWindow& window,
                  const ManifoldOptions& opts = {})
{
    AuxiliaryPath aux = solve_y0(model, xi, window, opts);
    solve_y1(model, xi, window, aux, opts);
    return aux.h_1;
}

/// ĥ = h_d + ε h_1 on one noise realization.
inline Vector h_hat(const SlowFastModel& model, const Vector& xi, const FastWindow& window,
                    const ManifoldOptions& opts = {})
{
    AuxiliaryPath aux = solve_y0(model, xi, window, opts);
    solve_y1(model, xi, window, aux, opts);
    return aux.h_d + model.eps * aux.h_1;
}

/// Closed form of ĥ for the scalar example, with I_se = ∫_{-∞}^0 s e^s dW_s(ψ_ε ω):
///   ξ²/600 + ε(-(ξ²/300)·0.001 + (ξ⁴/180000)·a - (ξ²/300)·a·σ·I_se)
/// written for general slow_rate r and coupling c (c = 1/600, r = 0.001 above).
inline double h_hat_example(double xi, double a, double eps, double sigma, double i_se,
                            double slow_rate = 0.001, double coupling = 1.0 / 600.0)
{
    const double xi2 = xi * xi;
    const double two_c = 2.0 * coupling;
    return coupling * xi2 +
           eps * (-(two_c * xi2) * slow_rate + two_c * coupling * xi2 * xi2 * a - two_c * xi2 * a * sigma * i_se);
}

/// ĥ and η from a numerically solved auxiliary problem, for any model
/// satisfying the spectral split. The realization is a two-sided physical
/// noise path; evaluation at time t uses the window ending at τ = t/ε.
class GenericManifold {
public:
    explicit GenericManifold(SlowFastModel model, ManifoldOptions opts = {})
        : model_(std::move(model)), opts_(opts)
    {
        validate_model(model_);
        if (model_.sigma != 0.0) {
            throw ConfigError("a manifold with sigma > 0 needs a noise realization");
        }
        T_ = resolve_truncation(model_.B, opts_);
        steps_ = opts_.quad_steps;
        h_ = T_ / static_cast<double>(steps_);
    }

    GenericManifold(SlowFastModel model, const NoisePath& physical_path, ManifoldOptions opts = {})
        : model_(std::move(model)), opts_(opts)
    {
        validate_model(model_);
        T_ = resolve_truncation(model_.B, opts_);
        const NoisePath fast = rescale_noise(physical_path, model_.eps);
        eta_fast_ = ou_stationary_path(model_.B, 1.0, fast);
        h_ = fast.grid.dt;
        steps_ = static_cast<std::size_t>(std::ceil(T_ / h_ - 1e-9));
        const auto origin = fast.grid.index_of(0.0);
        if (!origin || *origin < steps_) {
            throw DomainError("noise path does not reach back over the truncation window before t = 0");
        }
        origin_ = *origin;
    }

    const SlowFastModel& model() const noexcept { return model_; }
    double sigma() const noexcept { return model_.sigma; }
    double eps() const noexcept { return model_.eps; }
    double truncation() const noexcept { return static_cast<double>(steps_) * h_; }
    double step() const noexcept { return h_; }
    bool noisy() const noexcept { return eta_fast_.has_value(); }

    double t_end() const noexcept
    {
        if (!eta_fast_) return std::numeric_limits<double>::infinity();
        return static_cast<double>(eta_fast_->grid.n_steps - origin_) * h_ * model_.eps;
    }

    FastWindow window(double t = 0.0) const
    {
        if (!eta_fast_) return FastWindow{h_, steps_, static_cast<std::size_t>(model_.fast_dim()), {}};
        const std::size_t end = node_of(t);
        const std::size_t m = eta_fast_->dim;
        std::span<const double> all(eta_fast_->values);
        return FastWindow{h_, steps_, m, all.subspan((end - steps_) * m, (steps_ + 1) * m)};
    }

    AuxiliaryPath auxiliary(const Vector& xi, double t = 0.0) const
    {
        const FastWindow w = window(t);
        AuxiliaryPath aux = solve_y0(model_, xi, w, opts_);
        solve_y1(model_, xi, w, aux, opts_);
        return aux;
    }

    Vector h_hat(const Vector& xi, double t = 0.0) const
    {
        const AuxiliaryPath aux = auxiliary(xi, t);
        return aux.h_d + model_.eps * aux.h_1;
    }

    /// η(θ_τ ψ_ε ω) at τ = t/ε.
    Vector eta(double t = 0.0) const
    {
        if (!eta_fast_) return Vector::Zero(model_.fast_dim());
        return eta_fast_->value(node_of(t));
    }

    /// σ η(θ_t ψ_ε ω) + ĥ(ξ, θ_t ω).
    Vector full(const Vector& xi, double t = 0.0) const { return model_.sigma * eta(t) + h_hat(xi, t); }

    const std::optional<StationaryPath>& eta_path() const noexcept { return eta_fast_; }

private:
    std::size_t node_of(double t) const
    {
        const double tau_steps = t / (model_.eps * h_);
        const double k = std::round(tau_steps);
        if (k < 0.0 || std::abs(tau_steps - k) > 1e-6 || origin_ + static_cast<std::size_t>(k) > eta_fast_->grid.n_steps) {
            std::ostringstream msg;
            msg << "time " << t << " is outside the noise realization or off its grid";
            throw DomainError(msg.str());
        }
        return origin_ + static_cast<std::size_t>(k);
    }

    SlowFastModel model_;
    ManifoldOptions opts_;
    double T_ = 0.0;
    double h_ = 0.0;
    std::size_t steps_ = 0;
    std::optional<StationaryPath> eta_fast_;
    std::size_t origin_ = 0;
};

/// Closed-form manifold of the scalar example on a FilteredNoise realization.
class ExampleManifold {
public:
    explicit ExampleManifold(ExampleModel ex) : ex_(ex)
    {
        ex_.validate();
        if (ex_.sigma != 0.0) throw ConfigError("a manifold with sigma > 0 needs a noise realization");
    }

    ExampleManifold(ExampleModel ex, FilteredNoise noise) : ex_(ex), noise_(std::move(noise))
    {
        ex_.validate();
        if (std::abs(noise_->eps - ex_.eps) > 1e-15 * ex_.eps) {
            throw DomainError("noise realization was built for a different epsilon");
        }
    }

    const ExampleModel& example() const noexcept { return ex_; }
    double sigma() const noexcept { return ex_.sigma; }
    double eps() const noexcept { return ex_.eps; }
    const std::optional<FilteredNoise>& noise() const noexcept { return noise_; }

    double t_end() const noexcept
    {
        return noise_ ? noise_->grid.t_end() : std::numeric_limits<double>::infinity();
    }

    std::size_t node_at(double t) const { return noise_ ? noise_->node_at(t) : 0; }
    double eta_node(std::size_t k) const noexcept { return noise_ ? noise_->eta[k] : 0.0; }
    double ise_node(std::size_t k) const noexcept { return noise_ ? noise_->ise[k] : 0.0; }

    double h_hat_node(double xi, std::size_t k) const noexcept
    {
        return h_hat_example(xi, ex_.a, ex_.eps, ex_.sigma, ise_node(k), ex_.slow_rate, ex_.coupling);
    }

    Vector h_hat(const Vector& xi, double t = 0.0) const
    {
        return Vector::Constant(1, h_hat_node(xi(0), node_at(t)));
    }
    Vector eta(double t = 0.0) const { return Vector::Constant(1, eta_node(node_at(t))); }
    Vector full(const Vector& xi, double t = 0.0) const
    {
        const std::size_t k = node_at(t);
        return Vector::Constant(1, ex_.sigma * eta_node(k) + h_hat_node(xi(0), k));
    }

private:
    ExampleModel ex_;
    std::optional<FilteredNoise> noise_;
};

/// 𝔥(ξ) = σ η(ψ_ε ω) + ĥ(ξ, ω) on the unshifted realization.
template <class Manifold>
Vector full_manifold(const Manifold& approx, const Vector& xi)
{
    return approx.full(xi, 0.0);
}

}  // namespace slowfast
