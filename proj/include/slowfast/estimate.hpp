#pragma once

// Monte-Carlo objectives for the example system and the estimation pipeline.
//
// Observation sample j is simulated with noise seed derive_seed(seed, {j}).
// Monte-Carlo path p of an objective evaluation uses derive_seed(sample_seed, {p}),
// so a single path with sample_seed equal to the observation seed reproduces
// observation sample 0 bit for bit.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slowfast/errors.hpp"
#include "slowfast/manifold.hpp"
#include "slowfast/model.hpp"
#include "slowfast/nelder_mead.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/reduced.hpp"
#include "slowfast/rng.hpp"

namespace slowfast {

enum class System { full, slow };

inline const char* to_string(System s) noexcept { return s == System::full ? "full" : "slow"; }

inline System parse_system(const std::string& s)
{
    if (s == "full") return System::full;
    if (s == "slow") return System::slow;
    throw ConfigError("unknown system '" + s + "' (expected full or slow)");
}

struct ObservationMetadata {
    std::optional<double> a_true;
    double eps = 0.01;
    double sigma = 0.01;
    double slow_rate = 0.001;
    double coupling = 1.0 / 600.0;
    double dt = 2e-4;
    std::uint64_t seed = 0;
    double x0 = 10.0;
    double y0 = 1.0 / 6.0;

    bool operator==(const ObservationMetadata&) const = default;
};

/// Observations at times t_1 < ... < t_I, J samples each. Storage is flat,
/// index (i * J + j) for the scalar example.
struct ObservationSet {
    std::vector<double> times;
    std::size_t samples = 0;
    std::vector<double> x;
    std::vector<double> y;
    bool has_fast = false;
    ObservationMetadata meta;

    std::size_t size() const noexcept { return times.size(); }
    double x_at(std::size_t i, std::size_t j) const { return x[i * samples + j]; }
    double y_at(std::size_t i, std::size_t j) const { return y[i * samples + j]; }

    void validate() const
    {
        if (times.empty()) throw ConfigError("observation set has no time instants");
        if (samples == 0) throw ConfigError("observation set has no samples");
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (!std::isfinite(times[i]) || (i > 0 && !(times[i] > times[i - 1]))) {
                throw ConfigError("observation times must be finite and strictly increasing");
            }
        }
        if (x.size() != times.size() * samples) throw ConfigError("slow observation array has the wrong shape");
        if (has_fast ? y.size() != x.size() : !y.empty()) {
            throw ConfigError("fast observations must be present exactly when flagged");
        }
    }

    bool operator==(const ObservationSet&) const = default;
};

namespace detail {

/// Node indices of `times` on the grid {0, dt, 2dt, ...}.
inline std::vector<std::size_t> observation_nodes(std::span<const double> times, double dt)
{
    if (times.empty()) throw ConfigError("at least one observation time is required");
    const TimeGrid probe{0.0, dt, static_cast<std::size_t>(std::llround(times.back() / dt))};
    probe.validate();
    std::vector<std::size_t> nodes;
    nodes.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!(times[i] > 0.0) || (i > 0 && !(times[i] > times[i - 1]))) {
            throw ConfigError("observation times must be positive and strictly increasing");
        }
        const auto k = probe.index_of(times[i]);
        if (!k) {
            std::ostringstream msg;
            msg << "observation time " << times[i] << " is not a node of the grid with dt = " << dt
                << "; choose dt so that every t_i is an integer multiple of it";
            throw ConfigError(msg.str());
        }
        nodes.push_back(*k);
    }
    return nodes;
}

/// One full-system path of the example sampled at `nodes`.
inline void example_path_at_nodes(const ExampleModel& ex, double x0, double y0, double dt,
                                  std::span<const std::size_t> nodes, std::uint64_t seed, double* xs, double* ys)
{
    const TimeGrid grid{0.0, dt, nodes.back()};
    std::vector<double> dw;
    if (ex.sigma != 0.0) {
        dw = sample_wiener(grid, 1, seed).increments;
    } else {
        dw.assign(grid.n_steps, 0.0);
    }
    std::size_t next = 0;
    integrate_example(ex, x0, y0, dt, dw, [&](std::size_t k, double x, double y) {
        while (next < nodes.size() && nodes[next] == k) {
            xs[next] = x;
            ys[next] = y;
            ++next;
        }
    });
}

}  // namespace detail

inline ObservationSet generate_observations(const ExampleModel& ex, double x0, double y0,
                                            std::span<const double> times, std::size_t J, std::uint64_t seed,
                                            double dt = 2e-4, std::size_t threads = 1)
{
    ex.validate();
    if (J == 0) throw ConfigError("observation sample count J must be at least 1");
    check_stiffness(dt, ex.eps);
    const auto nodes = detail::observation_nodes(times, dt);
    const std::size_t I = times.size();

    ObservationSet obs;
    obs.times.assign(times.begin(), times.end());
    obs.samples = J;
    obs.has_fast = true;
    obs.x.assign(I * J, 0.0);
    obs.y.assign(I * J, 0.0);
    obs.meta = {ex.a, ex.eps, ex.sigma, ex.slow_rate, ex.coupling, dt, seed, x0, y0};

    std::vector<double> xs(I * J), ys(I * J);
    parallel_for(J, threads, [&](std::size_t j) {
        detail::example_path_at_nodes(ex, x0, y0, dt, nodes, derive_seed(seed, {j}), &xs[j * I], &ys[j * I]);
    });
    for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t i = 0; i < I; ++i) {
            obs.x[i * J + j] = xs[j * I + i];
            obs.y[i * J + j] = ys[j * I + i];
        }
    }
    return obs;
}

/// Example model with the observation metadata's constants and parameter a.
inline ExampleModel model_from(const ObservationMetadata& meta, double a)
{
    ExampleModel ex;
    ex.a = a;
    ex.eps = meta.eps;
    ex.sigma = meta.sigma;
    ex.slow_rate = meta.slow_rate;
    ex.coupling = meta.coupling;
    return ex;
}

struct ObjectiveSpec {
    System system = System::full;
    const ObservationSet* obs = nullptr;
    std::size_t paths = 30;
    std::uint64_t seed = 0;  // path seeds under common random numbers
    std::string free_parameter = "a";
    double dt_full = 2e-4;
    double dt_slow = 1e-2;
    bool common_random_numbers = false;
    bool time_varying_eta = false;
    std::size_t threads = 1;

    void validate() const
    {
        if (obs == nullptr) throw ConfigError("objective needs an observation set");
        obs->validate();
        if (paths == 0) throw ConfigError("Monte-Carlo path count M must be at least 1");
        if (free_parameter != "a") throw ConfigError("free parameter '" + free_parameter + "' is not in the model");
        if (system == System::full) {
            if (!obs->has_fast) throw ConfigError("the full-system objective needs fast observations");
            check_stiffness(dt_full, obs->meta.eps);
        } else if (!(dt_slow > 0.0)) {
            throw ConfigError("slow step must be positive");
        }
    }
};

namespace detail {

inline std::uint64_t path_seed(const ObjectiveSpec& spec, std::uint64_t sample_seed, std::size_t p)
{
    return derive_seed(spec.common_random_numbers ? spec.seed : sample_seed, {p});
}

inline double average_paths(const ObjectiveSpec& spec, const std::vector<double>& per_path)
{
    double sum = 0.0;
    for (double v : per_path) {
        if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
        sum += v;
    }
    return sum / static_cast<double>(per_path.size());
}

}  // namespace detail

/// F(a): mean over M paths of Σ_i Σ_j (x_i − x_ob_ij)² + (y_i − y_ob_ij)².
inline double objective_full(double a, const ObjectiveSpec& spec, std::uint64_t sample_seed)
{
    if (spec.system != System::full) throw ConfigError("objective_full called with a slow objective spec");
    spec.validate();
    if (!(a > 0.0) || !std::isfinite(a)) return std::numeric_limits<double>::infinity();
    const ObservationSet& obs = *spec.obs;
    const ExampleModel ex = model_from(obs.meta, a);
    const auto nodes = detail::observation_nodes(obs.times, spec.dt_full);
    const std::size_t I = obs.size();
    const std::size_t J = obs.samples;

    std::vector<double> per_path(spec.paths);
    parallel_for(spec.paths, spec.threads, [&](std::size_t p) {
        std::vector<double> xs(I), ys(I);
        try {
            detail::example_path_at_nodes(ex, obs.meta.x0, obs.meta.y0, spec.dt_full, nodes,
                                          detail::path_seed(spec, sample_seed, p), xs.data(), ys.data());
        } catch (const DivergenceError&) {
            per_path[p] = std::numeric_limits<double>::infinity();
            return;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < I; ++i) {
            for (std::size_t j = 0; j < J; ++j) {
                const double dx = xs[i] - obs.x_at(i, j);
                const double dy = ys[i] - obs.y_at(i, j);
                s += dx * dx + dy * dy;
            }
        }
        per_path[p] = s;
    });
    return detail::average_paths(spec, per_path);
}

/// 𝔽(a): mean over M paths of Σ_i Σ_j (X_i − x_ob_ij)² for the reduced system.
inline double objective_slow(double a, const ObjectiveSpec& spec, std::uint64_t sample_seed)
{
    if (spec.system != System::slow) throw ConfigError("objective_slow called with a full objective spec");
    spec.validate();
    if (!(a > 0.0) || !std::isfinite(a)) return std::numeric_limits<double>::infinity();
    const ObservationSet& obs = *spec.obs;
    const ExampleModel ex = model_from(obs.meta, a);
    const auto nodes = detail::observation_nodes(obs.times, spec.dt_slow);
    const std::size_t I = obs.size();
    const std::size_t J = obs.samples;
    const TimeGrid grid{0.0, spec.dt_slow, nodes.back()};
    const SlowOptions opts{spec.time_varying_eta};

    std::vector<double> per_path(spec.paths);
    parallel_for(spec.paths, spec.threads, [&](std::size_t p) {
        std::vector<double> xs(I);
        try {
            const ExampleManifold approx =
                ex.sigma != 0.0
                    ? ExampleManifold(ex, filtered_exact(grid, ex.eps, detail::path_seed(spec, sample_seed, p)))
                    : ExampleManifold(ex);
            std::size_t next = 0;
            integrate_slow_example(approx, obs.meta.x0, grid, opts, [&](std::size_t k, double x) {
                while (next < I && nodes[next] == k) xs[next++] = x;
            });
        } catch (const DivergenceError&) {
            per_path[p] = std::numeric_limits<double>::infinity();
            return;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < I; ++i) {
            for (std::size_t j = 0; j < J; ++j) {
                const double dx = xs[i] - obs.x_at(i, j);
                s += dx * dx;
            }
        }
        per_path[p] = s;
    });
    return detail::average_paths(spec, per_path);
}

inline double objective(double a, const ObjectiveSpec& spec, std::uint64_t sample_seed)
{
    return spec.system == System::full ? objective_full(a, spec, sample_seed) : objective_slow(a, spec, sample_seed);
}

inline constexpr std::uint64_t kInitStream = 0x696e6974ULL;
inline constexpr std::uint64_t kSearchStream = 0x736e6dULL;
inline constexpr std::uint64_t kCommonStream = 0x63726eULL;
inline constexpr std::uint64_t kGridStream = 0x67726964ULL;

struct EstimateConfig {
    std::size_t paths = 30;
    std::pair<double, double> init_box{0.01, 2.0};
    std::optional<std::pair<double, double>> search_box;  // defaults to init_box
    StochasticNelderMeadOptions snm;
    std::uint64_t seed = 0;
    double dt_full = 2e-4;
    double dt_slow = 1e-2;
    bool common_random_numbers = false;
    bool time_varying_eta = false;
    std::size_t threads = 1;

    ObjectiveSpec spec(System system, const ObservationSet& obs) const
    {
        ObjectiveSpec s;
        s.system = system;
        s.obs = &obs;
        s.paths = paths;
        s.seed = derive_seed(seed, {kCommonStream});
        s.dt_full = dt_full;
        s.dt_slow = dt_slow;
        s.common_random_numbers = common_random_numbers;
        s.time_varying_eta = time_varying_eta;
        s.threads = threads;
        return s;
    }
};

/// Two distinct starting values drawn uniformly from the box.
inline std::vector<Vector> initial_guesses(std::pair<double, double> box, std::uint64_t seed)
{
    const auto [lo, hi] = box;
    if (!(hi > lo)) throw ConfigError("initial box must satisfy lower < upper");
    Xoshiro256 gen(derive_seed(seed, {kInitStream}));
    const double a0 = lo + (hi - lo) * gen.uniform();
    double a1 = a0;
    while (std::abs(a1 - a0) < 1e-6 * (hi - lo)) a1 = lo + (hi - lo) * gen.uniform();
    return {Vector::Constant(1, a0), Vector::Constant(1, a1)};
}

inline EstimationResult estimate_parameter(System system, const ObservationSet& obs, const EstimateConfig& config)
{
    const ObjectiveSpec spec = config.spec(system, obs);
    spec.validate();
    StochasticNelderMeadOptions snm = config.snm;
    snm.seed = derive_seed(config.seed, {kSearchStream});
    const auto box = config.search_box.value_or(config.init_box);
    if (!(box.second > box.first)) throw ConfigError("search box must satisfy lower < upper");
    snm.search_box = SearchBox{Vector::Constant(1, box.first), Vector::Constant(1, box.second)};
    auto sampler = [&](const Vector& a, std::uint64_t sample_seed) { return objective(a(0), spec, sample_seed); };
    return stochastic_nelder_mead(sampler, initial_guesses(config.init_box, config.seed), snm);
}

/// Objective values on a grid of a. Every grid point uses the same sample seed
/// derive_seed(seed, {kGridStream}), so the curve is smooth in a.
inline std::vector<double> objective_grid(const ObjectiveSpec& spec, std::span<const double> a_values,
                                          std::uint64_t seed)
{
    std::vector<double> out;
    out.reserve(a_values.size());
    const std::uint64_t common = derive_seed(seed, {kGridStream});
    for (std::size_t i = 0; i < a_values.size(); ++i) {
        out.push_back(objective(a_values[i], spec, common));
    }
    return out;
}

}  // namespace slowfast
