#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the manifold or estimation code under test.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace oracle {

/// Invariant slow manifold of the deterministic example by shooting: start at
/// (x_s, x_s²/600) at time -T_b, integrate the coupled system with RK4 up to 0,
/// and adjust x_s by secant iteration until x(0) = ξ. Returns y(0).
struct ExampleSystem {
    double a = 1.0;
    double eps = 0.01;
    double slow_rate = 0.001;
    double coupling = 1.0 / 600.0;
};

inline void rk4_flow(const ExampleSystem& s, double& x, double& y, double span, std::size_t steps)
{
    const double h = span / static_cast<double>(steps);
    auto fx = [&](double xx, double yy) { return s.slow_rate * xx - s.a * xx * yy; };
    auto fy = [&](double xx, double yy) { return (-yy + s.coupling * xx * xx) / s.eps; };
    for (std::size_t k = 0; k < steps; ++k) {
        const double k1x = fx(x, y), k1y = fy(x, y);
        const double k2x = fx(x + 0.5 * h * k1x, y + 0.5 * h * k1y), k2y = fy(x + 0.5 * h * k1x, y + 0.5 * h * k1y);
        const double k3x = fx(x + 0.5 * h * k2x, y + 0.5 * h * k2y), k3y = fy(x + 0.5 * h * k2x, y + 0.5 * h * k2y);
        const double k4x = fx(x + h * k3x, y + h * k3y), k4y = fy(x + h * k3x, y + h * k3y);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
    }
}

inline double invariant_manifold(const ExampleSystem& s, double xi, double back_in_eps = 40.0,
                                 double steps_per_eps = 200.0)
{
    if (xi == 0.0) return 0.0;
    const double span = back_in_eps * s.eps;
    const auto steps = static_cast<std::size_t>(back_in_eps * steps_per_eps);
    auto shoot = [&](double xs, double* y_end) {
        double x = xs, y = s.coupling * xs * xs;
        rk4_flow(s, x, y, span, steps);
        if (y_end) *y_end = y;
        return x - xi;
    };
    double x0 = xi, x1 = xi * 1.01;
    double r0 = shoot(x0, nullptr), r1 = shoot(x1, nullptr);
    for (int it = 0; it < 60 && std::abs(r1) > 1e-14 * std::max(1.0, std::abs(xi)); ++it) {
        const double x2 = x1 - r1 * (x1 - x0) / (r1 - r0);
        x0 = x1;
        r0 = r1;
        x1 = x2;
        r1 = shoot(x1, nullptr);
    }
    double y = 0.0;
    shoot(x1, &y);
    return y;
}

/// Bounded solution of Y' = -Y + k τ (variation of constants): Y(τ) = k(τ - 1).
inline double linear_forcing_solution(double k, double tau) { return k * (tau - 1.0); }

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Kolmogorov–Smirnov distance of the sample to N(mean, sd²).
inline double ks_normal(std::vector<double> v, double mean, double sd)
{
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double f = normal_cdf((v[i] - mean) / sd);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

/// Critical KS distance at level 0.01 (asymptotic).
inline double ks_critical_001(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

inline double mean(const std::vector<double>& v)
{
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v)
{
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

/// Variance estimate and its standard error from i.i.d. samples (fourth-moment form).
struct Estimate {
    double value;
    double se;
};

inline Estimate variance_with_se(const std::vector<double>& v)
{
    const double m = mean(v);
    const double n = static_cast<double>(v.size());
    double m2 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = (x - m) * (x - m);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    return {m2 * n / (n - 1.0), std::sqrt(std::max(m4 - m2 * m2, 0.0) / n)};
}

/// Estimate of E[f(X_t)] for a correlated stationary series by batch means.
inline Estimate batch_means(const std::vector<double>& series, std::size_t batches)
{
    const std::size_t len = series.size() / batches;
    if (len == 0) throw std::invalid_argument("too many batches");
    std::vector<double> means(batches);
    for (std::size_t b = 0; b < batches; ++b) {
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) s += series[b * len + i];
        means[b] = s / static_cast<double>(len);
    }
    return {mean(means), std::sqrt(variance(means) / static_cast<double>(batches))};
}

/// Composite Simpson rule on [lo, hi] with an even number of panels.
inline double simpson(const std::function<double(double)>& f, double lo, double hi, std::size_t panels)
{
    if (panels % 2) ++panels;
    const double h = (hi - lo) / static_cast<double>(panels);
    double s = f(lo) + f(hi);
    for (std::size_t i = 1; i < panels; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(i));
    return s * h / 3.0;
}

}  // namespace oracle
