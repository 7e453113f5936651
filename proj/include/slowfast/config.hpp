#pragma once

// Run configuration: strict JSON with defaults for every field. Unknown keys
// are rejected; errors name the field path (e.g. "model.epsilon") and, for
// malformed JSON, the line.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "slowfast/errors.hpp"
#include "slowfast/estimate.hpp"
#include "slowfast/io.hpp"
#include "slowfast/model.hpp"

namespace slowfast {

struct ModelSection {
    double a_true = 0.1;
    double epsilon = 0.01;
    double sigma = 0.01;
    double slow_rate = 0.001;
    double coupling = 1.0 / 600.0;
};

struct SimulationSection {
    double dt = 2e-4;
    double dt_slow = 1e-2;
    double horizon = 1.0;
    double x0 = 10.0;
    double y0 = 1.0 / 6.0;
    std::string system = "full";
    bool time_varying_eta = false;
};

struct ObservationSection {
    std::size_t count = 50;    // I, equispaced on (0, horizon]
    std::size_t samples = 10;  // J
    std::vector<double> times;  // overrides count when non-empty
    std::string directory;      // read observations from here instead of generating
};

struct EstimationSection {
    std::string system = "full";
    std::size_t paths = 30;
    std::pair<double, double> init_box{0.01, 2.0};
    std::optional<std::pair<double, double>> search_box;
    std::size_t max_iter = 200;
    std::size_t stall_window = 20;
    double tol_x = 1e-4;
    double tol_f = 1e-3;
    bool common_random_numbers = false;
    double grid_start = 0.02;
    double grid_stop = 0.3;
    double grid_step = 0.01;
};

struct ManifoldSection {
    double xi_min = -10.0;
    double xi_max = 10.0;
    std::size_t points = 201;
    std::string method = "closed_form";  // or "generic"
    double truncation_tol = 1e-8;
    std::size_t quad_steps = 2000;
    double time = 0.0;
};

struct DiagnosticsSection {
    double displacement = 1.0;
    std::size_t absorbing_paths = 100;
};

struct RunConfig {
    ModelSection model;
    SimulationSection simulation;
    ObservationSection observation;
    EstimationSection estimation;
    ManifoldSection manifold;
    DiagnosticsSection diagnostics;
    std::uint64_t seed = 0;
    std::string out_dir;  // empty: SLOWFAST_OUT_DIR, then "out"
    bool emit_manifold = false;
    std::size_t threads = 1;

    ExampleModel example() const
    {
        return ExampleModel{model.a_true, model.epsilon, model.sigma, model.slow_rate, model.coupling};
    }

    std::vector<double> observation_times() const
    {
        if (!observation.times.empty()) return observation.times;
        std::vector<double> t;
        for (std::size_t i = 1; i <= observation.count; ++i) {
            t.push_back(simulation.horizon * static_cast<double>(i) / static_cast<double>(observation.count));
        }
        return t;
    }

    EstimateConfig estimate_config() const
    {
        EstimateConfig c;
        c.paths = estimation.paths;
        c.init_box = estimation.init_box;
        c.search_box = estimation.search_box;
        c.snm.nm.max_iter = estimation.max_iter;
        c.snm.nm.tol_x = estimation.tol_x;
        c.snm.stall_window = estimation.stall_window;
        c.snm.tol_f = estimation.tol_f;
        c.snm.record_history = false;
        c.seed = seed;
        c.dt_full = simulation.dt;
        c.dt_slow = simulation.dt_slow;
        c.common_random_numbers = estimation.common_random_numbers;
        c.time_varying_eta = simulation.time_varying_eta;
        c.threads = threads;
        return c;
    }

    /// Checks every numeric constraint; throws ConfigError naming the field.
    void validate() const
    {
        auto fail = [](const std::string& field, const std::string& what) {
            throw ConfigError(field + ": " + what);
        };
        auto positive = [&](const char* field, double v) {
            if (!(v > 0.0) || !std::isfinite(v)) fail(field, "must be positive and finite");
        };
        positive("model.a_true", model.a_true);
        positive("model.epsilon", model.epsilon);
        if (!(model.sigma >= 0.0) || !std::isfinite(model.sigma)) fail("model.sigma", "must be non-negative");
        if (!std::isfinite(model.slow_rate)) fail("model.slow_rate", "must be finite");
        if (!std::isfinite(model.coupling)) fail("model.coupling", "must be finite");
        positive("simulation.dt", simulation.dt);
        if (simulation.dt * kStiffnessRatio > model.epsilon * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "dt = " << simulation.dt << " violates the stiffness guard dt <= epsilon/" << kStiffnessRatio
                << " = " << model.epsilon / kStiffnessRatio;
            fail("simulation.dt", msg.str());
        }
        positive("simulation.dt_slow", simulation.dt_slow);
        positive("simulation.horizon", simulation.horizon);
        if (!std::isfinite(simulation.x0)) fail("simulation.x0", "must be finite");
        if (!std::isfinite(simulation.y0)) fail("simulation.y0", "must be finite");
        if (simulation.system != "full" && simulation.system != "slow") {
            fail("simulation.system", "must be \"full\" or \"slow\"");
        }
        if (observation.times.empty() && observation.count == 0) fail("observation.count", "must be at least 1");
        if (observation.samples == 0) fail("observation.samples", "must be at least 1");
        for (std::size_t i = 0; i < observation.times.size(); ++i) {
            if (!(observation.times[i] > 0.0) || (i > 0 && !(observation.times[i] > observation.times[i - 1]))) {
                fail("observation.times[" + std::to_string(i) + "]", "times must be positive and strictly increasing");
            }
        }
        if (estimation.system != "full" && estimation.system != "slow") {
            fail("estimation.system", "must be \"full\" or \"slow\"");
        }
        if (estimation.paths == 0) fail("estimation.paths", "must be at least 1");
        if (!(estimation.init_box.first < estimation.init_box.second)) fail("estimation.init_box", "needs lower < upper");
        if (estimation.search_box && !(estimation.search_box->first < estimation.search_box->second)) {
            fail("estimation.search_box", "needs lower < upper");
        }
        if (estimation.max_iter == 0) fail("estimation.max_iter", "must be at least 1");
        if (estimation.stall_window == 0) fail("estimation.stall_window", "must be at least 1");
        positive("estimation.tol_x", estimation.tol_x);
        positive("estimation.tol_f", estimation.tol_f);
        positive("estimation.grid_step", estimation.grid_step);
        if (!(estimation.grid_start <= estimation.grid_stop)) fail("estimation.grid_start", "must not exceed grid_stop");
        if (!(manifold.xi_min <= manifold.xi_max)) fail("manifold.xi_min", "must not exceed xi_max");
        if (manifold.points < 2) fail("manifold.points", "must be at least 2");
        if (manifold.method != "closed_form" && manifold.method != "generic") {
            fail("manifold.method", "must be \"closed_form\" or \"generic\"");
        }
        if (!(manifold.truncation_tol > 0.0 && manifold.truncation_tol < 1.0)) {
            fail("manifold.truncation_tol", "must lie in (0, 1)");
        }
        if (manifold.quad_steps < 2) fail("manifold.quad_steps", "must be at least 2");
        if (!(manifold.time >= 0.0)) fail("manifold.time", "must be non-negative");
        if (!std::isfinite(diagnostics.displacement)) fail("diagnostics.displacement", "must be finite");
        if (diagnostics.absorbing_paths == 0) fail("diagnostics.absorbing_paths", "must be at least 1");
        if (threads == 0) fail("threads", "must be at least 1");
    }
};

namespace detail {

inline std::size_t line_of(const std::string& text, std::size_t byte)
{
    std::size_t line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') ++line;
    }
    return line;
}

/// Walks one JSON object, dispatching known keys and rejecting the rest.
class Reader {
public:
    Reader(const nlohmann::json& obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object()) throw ConfigError(label() + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        const std::string field = child(key);
        read(*it, field, out);
    }

    void section(const char* key, const std::function<void(Reader&)>& fn)
    {
        seen_.insert(key);
        const auto it = obj_.find(key);
        if (it == obj_.end()) return;
        Reader sub(*it, child(key));
        fn(sub);
        sub.finish();
    }

    void finish() const
    {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError(child(it.key()) + ": unknown key");
        }
    }

private:
    std::string label() const { return path_.empty() ? "<root>" : path_; }
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    static void read(const nlohmann::json& v, const std::string& field, double& out)
    {
        if (!v.is_number()) throw ConfigError(field + ": expected a number");
        out = v.get<double>();
    }
    static void read(const nlohmann::json& v, const std::string& field, std::size_t& out)
    {
        if (!v.is_number_unsigned()) throw ConfigError(field + ": expected a non-negative integer");
        out = v.get<std::size_t>();
    }
    static void read(const nlohmann::json& v, const std::string& field, bool& out)
    {
        if (!v.is_boolean()) throw ConfigError(field + ": expected true or false");
        out = v.get<bool>();
    }
    static void read(const nlohmann::json& v, const std::string& field, std::string& out)
    {
        if (!v.is_string()) throw ConfigError(field + ": expected a string");
        out = v.get<std::string>();
    }
    static void read(const nlohmann::json& v, const std::string& field, std::vector<double>& out)
    {
        if (!v.is_array()) throw ConfigError(field + ": expected an array of numbers");
        out.clear();
        for (std::size_t i = 0; i < v.size(); ++i) {
            double x = 0.0;
            read(v[i], field + "[" + std::to_string(i) + "]", x);
            out.push_back(x);
        }
    }
    static void read(const nlohmann::json& v, const std::string& field, std::pair<double, double>& out)
    {
        std::vector<double> xs;
        read(v, field, xs);
        if (xs.size() != 2) throw ConfigError(field + ": expected [lower, upper]");
        out = {xs[0], xs[1]};
    }
    static void read(const nlohmann::json& v, const std::string& field, std::optional<std::pair<double, double>>& out)
    {
        if (v.is_null()) {
            out.reset();
            return;
        }
        std::pair<double, double> p;
        read(v, field, p);
        out = p;
    }

    const nlohmann::json& obj_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace detail

/// Parses config text; `source` names the origin in error messages.
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>")
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::ostringstream msg;
        msg << source << ":" << detail::line_of(text, e.byte == 0 ? 0 : e.byte - 1) << ": malformed JSON ("
            << e.what() << ")";
        throw ConfigError(msg.str());
    }
    RunConfig c;
    try {
        detail::Reader root(doc, "");
        root.section("model", [&](detail::Reader& r) {
            r.get("a_true", c.model.a_true);
            r.get("epsilon", c.model.epsilon);
            r.get("sigma", c.model.sigma);
            r.get("slow_rate", c.model.slow_rate);
            r.get("coupling", c.model.coupling);
        });
        root.section("simulation", [&](detail::Reader& r) {
            r.get("dt", c.simulation.dt);
            r.get("dt_slow", c.simulation.dt_slow);
            r.get("horizon", c.simulation.horizon);
            r.get("x0", c.simulation.x0);
            r.get("y0", c.simulation.y0);
            r.get("system", c.simulation.system);
            r.get("time_varying_eta", c.simulation.time_varying_eta);
        });
        root.section("observation", [&](detail::Reader& r) {
            r.get("count", c.observation.count);
            r.get("samples", c.observation.samples);
            r.get("times", c.observation.times);
            r.get("directory", c.observation.directory);
        });
        root.section("estimation", [&](detail::Reader& r) {
            r.get("system", c.estimation.system);
            r.get("paths", c.estimation.paths);
            r.get("init_box", c.estimation.init_box);
            r.get("search_box", c.estimation.search_box);
            r.get("max_iter", c.estimation.max_iter);
            r.get("stall_window", c.estimation.stall_window);
            r.get("tol_x", c.estimation.tol_x);
            r.get("tol_f", c.estimation.tol_f);
            r.get("common_random_numbers", c.estimation.common_random_numbers);
            r.get("grid_start", c.estimation.grid_start);
            r.get("grid_stop", c.estimation.grid_stop);
            r.get("grid_step", c.estimation.grid_step);
        });
        root.section("manifold", [&](detail::Reader& r) {
            r.get("xi_min", c.manifold.xi_min);
            r.get("xi_max", c.manifold.xi_max);
            r.get("points", c.manifold.points);
            r.get("method", c.manifold.method);
            r.get("truncation_tol", c.manifold.truncation_tol);
            r.get("quad_steps", c.manifold.quad_steps);
            r.get("time", c.manifold.time);
        });
        root.section("diagnostics", [&](detail::Reader& r) {
            r.get("displacement", c.diagnostics.displacement);
            r.get("absorbing_paths", c.diagnostics.absorbing_paths);
        });
        root.section("seeds", [&](detail::Reader& r) {
            std::size_t master = 0;
            r.get("master", master);
            c.seed = master;
        });
        root.section("output", [&](detail::Reader& r) {
            r.get("directory", c.out_dir);
            r.get("emit_manifold", c.emit_manifold);
        });
        root.get("threads", c.threads);
        root.finish();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
    }
    return c;
}

inline RunConfig parse_config(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path)) throw ConfigError(path.string() + ": config file not found");
    return parse_config_text(read_text(path), path.string());
}

/// Echo of the effective configuration, as written into result files.
inline Json to_json(const RunConfig& c)
{
    Json j;
    j["model"] = {{"a_true", c.model.a_true},
                  {"epsilon", c.model.epsilon},
                  {"sigma", c.model.sigma},
                  {"slow_rate", c.model.slow_rate},
                  {"coupling", c.model.coupling}};
    j["simulation"] = {{"dt", c.simulation.dt},
                       {"dt_slow", c.simulation.dt_slow},
                       {"horizon", c.simulation.horizon},
                       {"x0", c.simulation.x0},
                       {"y0", c.simulation.y0},
                       {"system", c.simulation.system},
                       {"time_varying_eta", c.simulation.time_varying_eta}};
    j["observation"] = {{"count", c.observation.count},
                        {"samples", c.observation.samples},
                        {"times", c.observation.times},
                        {"directory", c.observation.directory}};
    Json est = {{"system", c.estimation.system},
                {"paths", c.estimation.paths},
                {"init_box", {c.estimation.init_box.first, c.estimation.init_box.second}}};
    est["search_box"] = c.estimation.search_box
                            ? Json{c.estimation.search_box->first, c.estimation.search_box->second}
                            : Json(nullptr);
    est["max_iter"] = c.estimation.max_iter;
    est["stall_window"] = c.estimation.stall_window;
    est["tol_x"] = c.estimation.tol_x;
    est["tol_f"] = c.estimation.tol_f;
    est["common_random_numbers"] = c.estimation.common_random_numbers;
    est["grid_start"] = c.estimation.grid_start;
    est["grid_stop"] = c.estimation.grid_stop;
    est["grid_step"] = c.estimation.grid_step;
    j["estimation"] = std::move(est);
    j["manifold"] = {{"xi_min", c.manifold.xi_min},
                     {"xi_max", c.manifold.xi_max},
                     {"points", c.manifold.points},
                     {"method", c.manifold.method},
                     {"truncation_tol", c.manifold.truncation_tol},
                     {"quad_steps", c.manifold.quad_steps},
                     {"time", c.manifold.time}};
    j["diagnostics"] = {{"displacement", c.diagnostics.displacement},
                        {"absorbing_paths", c.diagnostics.absorbing_paths}};
    j["seeds"] = {{"master", c.seed}};
    j["output"] = {{"emit_manifold", c.emit_manifold}};
    return j;
}

}  // namespace slowfast
