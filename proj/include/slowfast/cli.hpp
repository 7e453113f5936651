#pragma once

// Command-line front end. run_subcommand parses argv, runs one subcommand and
// returns the process exit status; errors are reported as one JSON object on
// the error stream.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slowfast/config.hpp"
#include "slowfast/errors.hpp"
#include "slowfast/estimate.hpp"
#include "slowfast/io.hpp"
#include "slowfast/manifold.hpp"
#include "slowfast/model.hpp"
#include "slowfast/noise.hpp"
#include "slowfast/parallel.hpp"
#include "slowfast/reduced.hpp"
#include "slowfast/rng.hpp"

namespace slowfast {

inline constexpr const char* kOutDirEnv = "SLOWFAST_OUT_DIR";
inline constexpr std::uint64_t kSimulateStream = 0x73696dULL;
inline constexpr std::uint64_t kAbsorbingStream = 0x616273ULL;

struct CliOverrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> system;
    std::optional<double> a_true;
    std::optional<double> epsilon;
    std::optional<double> sigma;
    std::optional<std::string> out_dir;
    std::optional<std::string> obs_dir;
    bool emit_manifold = false;
    std::optional<std::size_t> threads;
};

namespace detail {

inline RunConfig resolve_config(const CliOverrides& o)
{
    RunConfig c = o.config.empty() ? RunConfig{} : parse_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.system) {
        parse_system(*o.system);
        c.simulation.system = *o.system;
        c.estimation.system = *o.system;
    }
    if (o.a_true) c.model.a_true = *o.a_true;
    if (o.epsilon) c.model.epsilon = *o.epsilon;
    if (o.sigma) c.model.sigma = *o.sigma;
    if (o.obs_dir) c.observation.directory = *o.obs_dir;
    if (o.emit_manifold) c.emit_manifold = true;
    if (o.threads) c.threads = *o.threads;
    if (o.out_dir) {
        c.out_dir = *o.out_dir;
    } else if (c.out_dir.empty()) {
        const char* env = std::getenv(kOutDirEnv);
        c.out_dir = (env && *env) ? env : "out";
    }
    c.validate();
    return c;
}

inline ObservationSet load_observations(const RunConfig& c)
{
    if (!c.observation.directory.empty()) return read_observations(c.observation.directory);
    const auto times = c.observation_times();
    return generate_observations(c.example(), c.simulation.x0, c.simulation.y0, times, c.observation.samples, c.seed,
                                 c.simulation.dt, c.threads);
}

inline double truncation_of(const RunConfig& c) { return default_truncation(1.0, c.manifold.truncation_tol); }

inline std::size_t steps_for(double horizon, double dt)
{
    const double r = horizon / dt;
    const double k = std::round(r);
    if (std::abs(r - k) > 1e-9 * std::max(1.0, r)) {
        std::ostringstream msg;
        msg << "horizon " << horizon << " is not a multiple of the step " << dt;
        throw ConfigError(msg.str());
    }
    return static_cast<std::size_t>(k);
}

inline std::size_t stride_of(double coarse, double fine)
{
    const double r = coarse / fine;
    const double k = std::round(r);
    if (k < 1.0 || std::abs(r - k) > 1e-9 * r) {
        throw ConfigError("simulation.dt_slow must be an integer multiple of simulation.dt");
    }
    return static_cast<std::size_t>(k);
}

/// Closed-form manifold on the coupled path (or the deterministic one for σ = 0).
inline ExampleManifold example_manifold(const ExampleModel& ex, const NoisePath* path, double truncation_T,
                                        std::size_t stride = 1)
{
    if (ex.sigma == 0.0 || path == nullptr) return ExampleManifold(ex);
    return ExampleManifold(ex, filtered_from_path(*path, ex.eps, truncation_T, stride));
}

struct Outputs {
    std::vector<std::string> files;
    Json extra = Json::object();
};

inline std::filesystem::path out_file(const RunConfig& c, const char* name) { return std::filesystem::path(c.out_dir) / name; }

inline void emit(Outputs& o, const std::filesystem::path& p, const std::string& text)
{
    write_text(p, text);
    o.files.push_back(p.string());
}

inline Outputs cmd_generate_obs(const RunConfig& c)
{
    Outputs o;
    const auto times = c.observation_times();
    const ObservationSet obs = generate_observations(c.example(), c.simulation.x0, c.simulation.y0, times,
                                                     c.observation.samples, c.seed, c.simulation.dt, c.threads);
    write_observations(obs, c.out_dir);
    o.files = {out_file(c, "obs.json").string(), out_file(c, "obs.csv").string()};
    return o;
}

inline Outputs cmd_simulate(const RunConfig& c)
{
    Outputs o;
    const ExampleModel ex = c.example();
    ex.validate();
    const double T = truncation_of(c);
    const std::uint64_t seed = derive_seed(c.seed, {kSimulateStream});
    const NoisePath path = coupled_path(ex.eps, c.simulation.dt, c.simulation.horizon, T, seed);
    const std::size_t n = steps_for(c.simulation.horizon, c.simulation.dt);

    if (parse_system(c.simulation.system) == System::full) {
        const Trajectory traj = simulate_example(ex, c.simulation.x0, c.simulation.y0, TimeGrid{0.0, c.simulation.dt, n}, path);
        if (c.emit_manifold) {
            const ExampleManifold approx = example_manifold(ex, &path, T);
            std::vector<Vector> h(traj.slow.size());
            for (std::size_t k = 0; k < h.size(); ++k) h[k] = approx.full(traj.slow[k], traj.grid.node(k));
            emit(o, out_file(c, "trajectory.csv"), trajectory_csv(traj.grid, traj.slow, &h));
        } else {
            emit(o, out_file(c, "trajectory.csv"), trajectory_csv(traj));
        }
        return o;
    }

    const std::size_t stride = stride_of(c.simulation.dt_slow, c.simulation.dt);
    const TimeGrid grid{0.0, c.simulation.dt_slow, steps_for(c.simulation.horizon, c.simulation.dt_slow)};
    const ExampleManifold approx = example_manifold(ex, &path, T, stride);
    std::vector<Vector> xs;
    std::vector<Vector> h;
    integrate_slow_example(approx, c.simulation.x0, grid, SlowOptions{c.simulation.time_varying_eta},
                           [&](std::size_t k, double x) {
                               xs.push_back(Vector::Constant(1, x));
                               if (c.emit_manifold) h.push_back(approx.full(xs.back(), grid.node(k)));
                           });
    emit(o, out_file(c, "trajectory.csv"), trajectory_csv(grid, xs, c.emit_manifold ? &h : nullptr));
    return o;
}

inline Outputs cmd_manifold_eval(const RunConfig& c)
{
    Outputs o;
    const ExampleModel ex = c.example();
    ex.validate();
    const double T = truncation_of(c);
    const double t = c.manifold.time;
    const NoisePath path = coupled_path(ex.eps, c.simulation.dt, t, T, derive_seed(c.seed, {kSimulateStream}));
    std::ostringstream csv;
    csv << "xi,h_value\n";
    const auto n = c.manifold.points;
    auto xi_at = [&](std::size_t i) {
        return c.manifold.xi_min + (c.manifold.xi_max - c.manifold.xi_min) * static_cast<double>(i) /
                                       static_cast<double>(n - 1);
    };
    std::vector<double> values(n);
    if (c.manifold.method == "generic") {
        ManifoldOptions mo;
        mo.truncation_tol = c.manifold.truncation_tol;
        mo.quad_steps = c.manifold.quad_steps;
        const SlowFastModel model = ex.model();
        if (ex.sigma == 0.0) {
            const GenericManifold approx(model, mo);
            parallel_for(n, c.threads, [&](std::size_t i) { values[i] = approx.full(Vector::Constant(1, xi_at(i)), t)(0); });
        } else {
            const GenericManifold approx(model, path, mo);
            parallel_for(n, c.threads, [&](std::size_t i) { values[i] = approx.full(Vector::Constant(1, xi_at(i)), t)(0); });
        }
    } else {
        const ExampleManifold approx = example_manifold(ex, &path, T);
        for (std::size_t i = 0; i < n; ++i) values[i] = approx.full(Vector::Constant(1, xi_at(i)), t)(0);
    }
    for (std::size_t i = 0; i < n; ++i) csv << format_double(xi_at(i)) << ',' << format_double(values[i]) << '\n';
    emit(o, out_file(c, "manifold.csv"), csv.str());
    return o;
}

inline std::vector<double> a_grid(const RunConfig& c)
{
    const auto& e = c.estimation;
    const auto n = static_cast<std::size_t>(std::floor((e.grid_stop - e.grid_start) / e.grid_step + 1e-9)) + 1;
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = e.grid_start + static_cast<double>(i) * e.grid_step;
    return a;
}

inline Outputs cmd_objective_grid(const RunConfig& c)
{
    Outputs o;
    const ObservationSet obs = load_observations(c);
    const EstimateConfig ec = c.estimate_config();
    const auto a = a_grid(c);
    const auto full = objective_grid(ec.spec(System::full, obs), a, c.seed);
    const auto slow = objective_grid(ec.spec(System::slow, obs), a, c.seed);
    std::ostringstream csv;
    csv << "a,F_full,F_slow\n";
    for (std::size_t i = 0; i < a.size(); ++i) {
        csv << format_double(a[i]) << ',' << format_double(full[i]) << ',' << format_double(slow[i]) << '\n';
    }
    emit(o, out_file(c, "objective_grid.csv"), csv.str());
    return o;
}

inline Outputs cmd_estimate(const RunConfig& c)
{
    Outputs o;
    const ObservationSet obs = load_observations(c);
    const System system = parse_system(c.estimation.system);
    const EstimateConfig ec = c.estimate_config();
    const EstimationResult r = estimate_parameter(system, obs, ec);
    Json j;
    j["system"] = to_string(system);
    j["estimator_name"] = system == System::full ? "a_E" : "a_E^S";
    const Json body = to_json(r);
    for (auto it = body.begin(); it != body.end(); ++it) j[it.key()] = *it;
    j["seeds"] = {{"master", c.seed},
                  {"observations", obs.meta.seed},
                  {"init", derive_seed(c.seed, {kInitStream})},
                  {"search", derive_seed(c.seed, {kSearchStream})},
                  {"common", derive_seed(c.seed, {kCommonStream})}};
    j["config"] = to_json(c);
    emit(o, out_file(c, "result.json"), j.dump(2) + "\n");
    emit(o, out_file(c, "trace.csv"), trace_csv(r));
    o.extra["estimator"] = r.estimator();
    return o;
}

inline Outputs cmd_attraction(const RunConfig& c)
{
    Outputs o;
    const ExampleModel ex = c.example();
    ex.validate();
    const double T = truncation_of(c);
    const NoisePath path =
        coupled_path(ex.eps, c.simulation.dt, c.simulation.horizon, T, derive_seed(c.seed, {kSimulateStream}));
    const ExampleManifold approx = example_manifold(ex, &path, T);
    const double x0 = c.simulation.x0;
    const double y0 = approx.full(Vector::Constant(1, x0), 0.0)(0) + c.diagnostics.displacement;
    const TimeGrid grid{0.0, c.simulation.dt, steps_for(c.simulation.horizon, c.simulation.dt)};
    const Trajectory traj = simulate_example(ex, x0, y0, grid, path);
    const AttractionSeries d = attraction_distance(traj, approx);
    std::ostringstream csv;
    csv << "t,d\n";
    for (std::size_t k = 0; k < d.t.size(); ++k) csv << format_double(d.t[k]) << ',' << format_double(d.d[k]) << '\n';
    emit(o, out_file(c, "attraction.csv"), csv.str());
    return o;
}

inline Outputs cmd_diagnose_absorbing(const RunConfig& c)
{
    Outputs o;
    const ExampleModel ex = c.example();
    ex.validate();
    const TimeGrid grid{0.0, c.simulation.dt, steps_for(c.simulation.horizon, c.simulation.dt)};
    std::vector<Trajectory> ensemble(c.diagnostics.absorbing_paths);
    parallel_for(ensemble.size(), c.threads, [&](std::size_t p) {
        const NoisePath path = sample_wiener(grid, 1, derive_seed(c.seed, {kAbsorbingStream, p}));
        ensemble[p] = simulate_example(ex, c.simulation.x0, c.simulation.y0, grid, path);
    });
    const AbsorbingReport rep = absorbing_diagnostic(ex, ensemble);
    Json j;
    j["paths"] = rep.paths;
    j["violations"] = rep.violations;
    j["max_ratio"] = rep.max_ratio;
    j["bound_constant"] = rep.bound_constant;
    Json series = Json::array();
    for (std::size_t k = 0; k < rep.t.size(); ++k) {
        series.push_back({{"t", rep.t[k]}, {"mean_v", rep.mean_v[k]}, {"bound", rep.bound[k]}});
    }
    j["series"] = std::move(series);
    j["config"] = to_json(c);
    emit(o, out_file(c, "absorbing.json"), j.dump(2) + "\n");
    o.extra["violations"] = rep.violations;
    return o;
}

inline Json error_json(const std::string& kind, const std::string& message, int code)
{
    return Json{{"error", kind}, {"message", message}, {"exit_code", code}};
}

}  // namespace detail

inline int run_subcommand(int argc, const char* const* argv, std::ostream& out = std::cout,
                          std::ostream& err = std::cerr)
{
    CLI::App app{"Parameter estimation for slow-fast SDEs on a random slow manifold", "slowfast"};
    app.require_subcommand(1);
    CliOverrides o;
    std::optional<std::uint64_t> seed;
    std::optional<double> a_true, epsilon, sigma;
    std::optional<std::string> system, out_dir, obs_dir;
    std::optional<std::size_t> threads;

    using Handler = detail::Outputs (*)(const RunConfig&);
    const std::vector<std::pair<std::string, std::pair<std::string, Handler>>> commands = {
        {"generate-obs", {"Simulate the full system and write observation files", &detail::cmd_generate_obs}},
        {"simulate", {"Write a full or reduced trajectory CSV", &detail::cmd_simulate}},
        {"manifold-eval", {"Write the slow manifold over a xi grid", &detail::cmd_manifold_eval}},
        {"objective-grid", {"Evaluate both objectives over a grid of a", &detail::cmd_objective_grid}},
        {"estimate", {"Run the stochastic simplex search for a", &detail::cmd_estimate}},
        {"attraction", {"Distance of a displaced orbit to the manifold", &detail::cmd_attraction}},
        {"diagnose-absorbing", {"Check the mean-square absorbing bound over an ensemble", &detail::cmd_diagnose_absorbing}},
    };
    std::vector<std::pair<CLI::App*, Handler>> subs;
    for (const auto& [name, info] : commands) {
        CLI::App* sub = app.add_subcommand(name, info.first);
        sub->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--system", system, "full or slow");
        sub->add_option("--a-true,--a", a_true, "true (or simulated) value of a");
        sub->add_option("--epsilon", epsilon, "time-scale ratio");
        sub->add_option("--sigma", sigma, "noise intensity");
        sub->add_option("--out-dir", out_dir, std::string("output directory (default $") + kOutDirEnv + " or out)");
        sub->add_option("--obs", obs_dir, "read observations from this directory");
        sub->add_flag("--emit-manifold", o.emit_manifold, "add manifold values in place of y columns");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        subs.emplace_back(sub, info.second);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << detail::error_json("usage", e.what(), 2).dump() << '\n';
        return 2;
    }
    o.seed = seed;
    o.system = system;
    o.a_true = a_true;
    o.epsilon = epsilon;
    o.sigma = sigma;
    o.out_dir = out_dir;
    o.obs_dir = obs_dir;
    o.threads = threads;

    try {
        for (const auto& [sub, handler] : subs) {
            if (!sub->parsed()) continue;
            const RunConfig cfg = detail::resolve_config(o);
            detail::Outputs result = handler(cfg);
            Json j{{"status", "ok"}, {"subcommand", sub->get_name()}, {"outputs", result.files}};
            for (auto it = result.extra.begin(); it != result.extra.end(); ++it) j[it.key()] = *it;
            out << j.dump() << '\n';
            return 0;
        }
    } catch (const Error& e) {
        err << detail::error_json(e.kind(), e.what(), e.exit_code()).dump() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        err << detail::error_json("internal", e.what(), 1).dump() << '\n';
        return 1;
    }
    err << detail::error_json("usage", "no subcommand given", 2).dump() << '\n';
    return 2;
}

}  // namespace slowfast
