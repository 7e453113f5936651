#pragma once

// Nelder–Mead simplex search and its stochastic variant for noisy objectives.
//
// Both share one move routine (reflection 1, expansion 2, outside/inside
// contraction 1/2, shrink 1/2). The stochastic search keeps a running mean per
// vertex; at iteration k every vertex, old or new, receives N(k) = max(1, ⌊√k⌋)
// fresh samples. A local stall (same incumbent for stall_window iterations)
// triggers a global step that redraws the worst vertex uniformly in the search box.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/linalg.hpp"
#include "slowfast/rng.hpp"

namespace slowfast {

struct NelderMeadOptions {
    double tol_x = 1e-4;
    double tol_f = 1e-6;
    std::size_t max_iter = 500;
    double reflection = 1.0;
    double expansion = 2.0;
    double contraction = 0.5;
    double shrink = 0.5;
};

enum class Termination { tolerance, max_iter, stall };

inline const char* to_string(Termination t) noexcept
{
    switch (t) {
    case Termination::tolerance: return "tolerance";
    case Termination::max_iter: return "max_iter";
    case Termination::stall: return "stall";
    }
    return "unknown";
}

enum class Move { none, reflection, expansion, outside_contraction, inside_contraction, shrink, restart };

inline const char* to_string(Move m) noexcept
{
    switch (m) {
    case Move::none: return "none";
    case Move::reflection: return "reflection";
    case Move::expansion: return "expansion";
    case Move::outside_contraction: return "outside_contraction";
    case Move::inside_contraction: return "inside_contraction";
    case Move::shrink: return "shrink";
    case Move::restart: return "restart";
    }
    return "unknown";
}

struct Vertex {
    Vector x;
    double value = 0.0;  // running mean of the samples
    std::uint64_t id = 0;
    std::size_t samples = 0;

    void add_sample(double v) noexcept
    {
        ++samples;
        if (!std::isfinite(v) || !std::isfinite(value)) {
            value = std::numeric_limits<double>::infinity();
            return;
        }
        if (samples == 1) {
            value = v;
        } else {
            value += (v - value) / static_cast<double>(samples);
        }
    }
};

struct SimplexState {
    std::size_t iteration = 0;
    std::size_t batch = 1;  // samples added per vertex at this iteration
    std::vector<Vertex> vertices;
    Move move = Move::none;  // move applied after this snapshot
};

struct TraceEntry {
    std::size_t iteration = 0;
    Vector best;
    double best_value = 0.0;
};

struct EstimationResult {
    Vector estimate;
    double best_value = 0.0;
    Termination termination = Termination::max_iter;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    std::size_t restarts = 0;
    std::vector<TraceEntry> trace;
    std::vector<SimplexState> history;

    double estimator() const { return estimate(0); }
};

/// N(k) = max(1, ⌊√k⌋), exact in integers.
constexpr std::size_t sample_count(std::size_t k) noexcept
{
    std::size_t r = 0;
    while ((r + 1) * (r + 1) <= k) ++r;
    return std::max<std::size_t>(1, r);
}

namespace detail {

inline void check_simplex(const std::vector<Vector>& vertices)
{
    if (vertices.empty()) throw ConfigError("initial simplex is empty");
    const auto d = vertices.front().size();
    if (d == 0 || vertices.size() != static_cast<std::size_t>(d) + 1) {
        throw ConfigError("initial simplex needs d + 1 vertices in dimension d");
    }
    Matrix edges(d, d);
    double scale = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        if (vertices[i + 1].size() != d) throw ConfigError("simplex vertices differ in dimension");
        edges.col(i) = vertices[i + 1] - vertices[0];
        scale = std::max(scale, edges.col(i).lpNorm<Eigen::Infinity>());
    }
    for (const auto& v : vertices) scale = std::max(scale, v.lpNorm<Eigen::Infinity>());
    Eigen::FullPivLU<Matrix> lu(edges);
    lu.setThreshold(1e-14);
    if (scale == 0.0 || edges.lpNorm<Eigen::Infinity>() <= 1e-14 * scale || lu.rank() < d) {
        throw ConfigError("degenerate initial simplex: vertices are affinely dependent");
    }
}

inline void sort_simplex(std::vector<Vertex>& s)
{
    std::stable_sort(s.begin(), s.end(), [](const Vertex& a, const Vertex& b) {
        const double va = std::isnan(a.value) ? std::numeric_limits<double>::infinity() : a.value;
        const double vb = std::isnan(b.value) ? std::numeric_limits<double>::infinity() : b.value;
        return va < vb;
    });
}

inline double spread_x(const std::vector<Vertex>& s)
{
    double m = 0.0;
    for (std::size_t i = 1; i < s.size(); ++i) m = std::max(m, (s[i].x - s[0].x).lpNorm<Eigen::Infinity>());
    return m;
}

inline double spread_f(const std::vector<Vertex>& s)
{
    double m = 0.0;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i].value == s[0].value) continue;
        const double d = std::abs(s[i].value - s[0].value);
        m = std::max(m, std::isfinite(d) ? d : std::numeric_limits<double>::infinity());
    }
    return m;
}

/// One Nelder–Mead move on a sorted simplex. make(x) creates an evaluated vertex.
template <class Make>
Move nelder_mead_move(std::vector<Vertex>& s, const NelderMeadOptions& o, Make&& make)
{
    const std::size_t d = s.size() - 1;
    Vector centroid = Vector::Zero(s[0].x.size());
    for (std::size_t i = 0; i < d; ++i) centroid += s[i].x;
    centroid /= static_cast<double>(d);
    const Vertex& worst = s[d];

    Vertex r = make(Vector(centroid + o.reflection * (centroid - worst.x)));
    if (r.value < s[0].value) {
        Vertex e = make(Vector(centroid + o.expansion * (r.x - centroid)));
        if (e.value < r.value) {
            s[d] = std::move(e);
            return Move::expansion;
        }
        s[d] = std::move(r);
        return Move::reflection;
    }
    if (r.value < s[d - 1].value) {
        s[d] = std::move(r);
        return Move::reflection;
    }
    if (r.value < worst.value) {
        Vertex c = make(Vector(centroid + o.contraction * (r.x - centroid)));
        if (c.value <= r.value) {
            s[d] = std::move(c);
            return Move::outside_contraction;
        }
    } else {
        Vertex c = make(Vector(centroid + o.contraction * (worst.x - centroid)));
        if (c.value < worst.value) {
            s[d] = std::move(c);
            return Move::inside_contraction;
        }
    }
    for (std::size_t i = 1; i <= d; ++i) {
        s[i] = make(Vector(s[0].x + o.shrink * (s[i].x - s[0].x)));
    }
    return Move::shrink;
}

}  // namespace detail

/// Deterministic Nelder–Mead. Stops when the vertex spread is below tol_x and
/// the value spread below tol_f, or after max_iter moves.
template <class Objective>
EstimationResult nelder_mead(Objective&& objective, const std::vector<Vector>& initial_vertices,
                             const NelderMeadOptions& opts = {})
{
    detail::check_simplex(initial_vertices);
    EstimationResult result;
    std::uint64_t next_id = 0;
    auto make = [&](const Vector& x) {
        Vertex v{x, 0.0, next_id++, 0};
        v.add_sample(objective(x));
        ++result.evaluations;
        return v;
    };
    std::vector<Vertex> s;
    for (const auto& x : initial_vertices) s.push_back(make(x));
    detail::sort_simplex(s);

    for (std::size_t k = 0;; ++k) {
        result.trace.push_back({k, s[0].x, s[0].value});
        result.history.push_back({k, 1, s, Move::none});
        result.iterations = k;
        const double sx = detail::spread_x(s);
        if (sx < opts.tol_x && detail::spread_f(s) < opts.tol_f) {
            result.termination = Termination::tolerance;
            break;
        }
        if (sx == 0.0) {
            result.termination = Termination::stall;
            break;
        }
        if (k == opts.max_iter) {
            result.termination = Termination::max_iter;
            break;
        }
        result.history.back().move = detail::nelder_mead_move(s, opts, make);
        detail::sort_simplex(s);
    }
    result.estimate = s[0].x;
    result.best_value = s[0].value;
    return result;
}

struct SearchBox {
    Vector lower;
    Vector upper;
};

struct StochasticNelderMeadOptions {
    NelderMeadOptions nm{1e-4, 1e-6, 200};
    std::size_t stall_window = 20;
    /// Stop once the vertex spread is below nm.tol_x and the incumbent mean moved
    /// by less than tol_f (relative) over the last stall_window iterations.
    double tol_f = 1e-3;
    std::optional<SearchBox> search_box;
    std::uint64_t seed = 0;
    bool record_history = true;
};

inline constexpr std::uint64_t kRestartStream = 0x7265737461727400ULL;

/// Stochastic Nelder–Mead. sampler(x, seed) returns one noisy evaluation; the
/// seed of sample i for vertex v at iteration k is derive_seed(seed, {v, k, i}).
template <class Sampler>
EstimationResult stochastic_nelder_mead(Sampler&& sampler, const std::vector<Vector>& initial_vertices,
                                        const StochasticNelderMeadOptions& opts = {})
{
    detail::check_simplex(initial_vertices);
    if (opts.stall_window == 0) throw ConfigError("stall_window must be at least 1");
    if (opts.search_box) {
        const auto& b = *opts.search_box;
        const auto d = initial_vertices.front().size();
        if (b.lower.size() != d || b.upper.size() != d || (b.upper.array() <= b.lower.array()).any()) {
            throw ConfigError("search box must have lower < upper in every coordinate");
        }
    }
    EstimationResult result;
    std::uint64_t next_id = 0;
    std::size_t k = 1;
    std::size_t batch = 1;

    auto add_samples = [&](Vertex& v) {
        for (std::size_t i = 0; i < batch; ++i) {
            v.add_sample(sampler(v.x, derive_seed(opts.seed, {v.id, k, i})));
            ++result.evaluations;
        }
    };
    auto make = [&](const Vector& x) {
        Vertex v{x, 0.0, next_id++, 0};
        add_samples(v);
        return v;
    };

    std::vector<Vertex> s;
    std::uint64_t incumbent = 0;
    std::size_t unchanged = 0;
    for (;; ++k) {
        batch = sample_count(k);
        if (k == 1) {
            for (const auto& x : initial_vertices) s.push_back(make(x));
        } else {
            for (auto& v : s) add_samples(v);
        }
        detail::sort_simplex(s);

        if (k > 1 && s[0].id == incumbent) {
            ++unchanged;
        } else {
            unchanged = 0;
            incumbent = s[0].id;
        }
        result.trace.push_back({k, s[0].x, s[0].value});
        if (opts.record_history) result.history.push_back({k, batch, s, Move::none});
        result.iterations = k;

        if (k > opts.stall_window && detail::spread_x(s) < opts.nm.tol_x) {
            const double now = s[0].value;
            const double before = result.trace[result.trace.size() - 1 - opts.stall_window].best_value;
            if (std::isfinite(now) && std::abs(now - before) <= opts.tol_f * std::max(std::abs(now), 1e-300)) {
                result.termination = Termination::tolerance;
                break;
            }
        }
        if (k >= opts.nm.max_iter) {
            result.termination = Termination::max_iter;
            break;
        }

        Move move;
        if (unchanged >= opts.stall_window) {
            if (!opts.search_box) {
                throw ConfigError("global search step needs a parameter search box");
            }
            const auto& b = *opts.search_box;
            Xoshiro256 gen(derive_seed(opts.seed, {kRestartStream, k}));
            Vector x(b.lower.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                x(i) = b.lower(i) + (b.upper(i) - b.lower(i)) * gen.uniform();
            }
            s.back() = make(x);
            ++result.restarts;
            unchanged = 0;
            move = Move::restart;
        } else {
            move = detail::nelder_mead_move(s, opts.nm, make);
        }
        if (opts.record_history) result.history.back().move = move;
        detail::sort_simplex(s);
    }
    result.estimate = s[0].x;
    result.best_value = s[0].value;
    return result;
}

}  // namespace slowfast
