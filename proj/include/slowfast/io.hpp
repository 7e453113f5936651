#pragma once

// CSV and JSON serialization. Floats are written with 17 significant digits so
// every value reads back to the same double.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slowfast/errors.hpp"
#include "slowfast/estimate.hpp"
#include "slowfast/model.hpp"
#include "slowfast/nelder_mead.hpp"
#include "slowfast/reduced.hpp"

namespace slowfast {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& where)
{
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError(where + ": cannot parse number '" + s + "'");
    return v;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw ConfigError("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

/// `t,x_1..x_n,y_1..y_m`; pass fast columns explicitly to override y.
inline std::string trajectory_csv(const TimeGrid& grid, const std::vector<Vector>& slow,
                                  const std::vector<Vector>* fast)
{
    std::ostringstream out;
    out << 't';
    const auto n = slow.empty() ? 0 : slow.front().size();
    const auto m = (fast && !fast->empty()) ? fast->front().size() : 0;
    for (Eigen::Index i = 0; i < n; ++i) out << ",x_" << i + 1;
    for (Eigen::Index i = 0; i < m; ++i) out << ",y_" << i + 1;
    out << '\n';
    for (std::size_t k = 0; k < slow.size(); ++k) {
        out << format_double(grid.node(k));
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_double(slow[k](i));
        for (Eigen::Index i = 0; i < m; ++i) out << ',' << format_double((*fast)[k](i));
        out << '\n';
    }
    return out.str();
}

inline std::string trajectory_csv(const Trajectory& traj) { return trajectory_csv(traj.grid, traj.slow, &traj.fast); }

inline Json to_json(const ObservationMetadata& m)
{
    Json j;
    j["a_true"] = m.a_true ? Json(*m.a_true) : Json(nullptr);
    j["epsilon"] = m.eps;
    j["sigma"] = m.sigma;
    j["slow_rate"] = m.slow_rate;
    j["coupling"] = m.coupling;
    j["dt"] = m.dt;
    j["seed"] = m.seed;
    j["x0"] = m.x0;
    j["y0"] = m.y0;
    return j;
}

/// Writes `<stem>.json` (metadata) and `<stem>.csv` (`t,sample,x[,y]`).
inline void write_observations(const ObservationSet& obs, const std::filesystem::path& dir,
                               const std::string& stem = "obs")
{
    obs.validate();
    Json meta;
    meta["format"] = "slowfast-observations";
    meta["times"] = obs.times.size();
    meta["samples"] = obs.samples;
    meta["has_fast"] = obs.has_fast;
    meta["data"] = stem + ".csv";
    meta["metadata"] = to_json(obs.meta);
    write_text(dir / (stem + ".json"), meta.dump(2) + "\n");

    std::ostringstream csv;
    csv << (obs.has_fast ? "t,sample,x,y\n" : "t,sample,x\n");
    for (std::size_t i = 0; i < obs.size(); ++i) {
        for (std::size_t j = 0; j < obs.samples; ++j) {
            csv << format_double(obs.times[i]) << ',' << j << ',' << format_double(obs.x_at(i, j));
            if (obs.has_fast) csv << ',' << format_double(obs.y_at(i, j));
            csv << '\n';
        }
    }
    write_text(dir / (stem + ".csv"), csv.str());
}

inline ObservationSet read_observations(const std::filesystem::path& dir, const std::string& stem = "obs")
{
    const auto meta_path = dir / (stem + ".json");
    Json meta;
    try {
        meta = Json::parse(read_text(meta_path));
    } catch (const Json::exception& e) {
        throw ConfigError(meta_path.string() + ": " + e.what());
    }
    ObservationSet obs;
    std::size_t I = 0;
    std::string data;
    try {
        I = meta.at("times").get<std::size_t>();
        obs.samples = meta.at("samples").get<std::size_t>();
        obs.has_fast = meta.at("has_fast").get<bool>();
        data = meta.at("data").get<std::string>();
        const Json& m = meta.at("metadata");
        if (!m.at("a_true").is_null()) obs.meta.a_true = m.at("a_true").get<double>();
        obs.meta.eps = m.at("epsilon").get<double>();
        obs.meta.sigma = m.at("sigma").get<double>();
        obs.meta.slow_rate = m.at("slow_rate").get<double>();
        obs.meta.coupling = m.at("coupling").get<double>();
        obs.meta.dt = m.at("dt").get<double>();
        obs.meta.seed = m.at("seed").get<std::uint64_t>();
        obs.meta.x0 = m.at("x0").get<double>();
        obs.meta.y0 = m.at("y0").get<double>();
    } catch (const Json::exception& e) {
        throw ConfigError(meta_path.string() + ": " + e.what());
    }

    const auto csv_path = dir / data;
    std::istringstream in(read_text(csv_path));
    std::string line;
    std::getline(in, line);
    const std::string expected = obs.has_fast ? "t,sample,x,y" : "t,sample,x";
    if (line != expected) throw ConfigError(csv_path.string() + ": expected header '" + expected + "'");
    obs.times.assign(I, 0.0);
    obs.x.assign(I * obs.samples, 0.0);
    if (obs.has_fast) obs.y.assign(I * obs.samples, 0.0);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::string where = csv_path.string() + " line " + std::to_string(row + 2);
        const auto cells = split_csv_line(line);
        if (cells.size() != (obs.has_fast ? 4u : 3u)) throw ConfigError(where + ": wrong number of columns");
        if (row >= I * obs.samples) throw ConfigError(where + ": more rows than declared");
        const std::size_t i = row / obs.samples;
        const std::size_t j = row % obs.samples;
        if (cells[1] != std::to_string(j)) throw ConfigError(where + ": sample index out of order");
        const double t = parse_double(cells[0], where);
        if (j == 0) {
            obs.times[i] = t;
        } else if (t != obs.times[i]) {
            throw ConfigError(where + ": time differs within one instant");
        }
        obs.x[row] = parse_double(cells[2], where);
        if (obs.has_fast) obs.y[row] = parse_double(cells[3], where);
        ++row;
    }
    if (row != I * obs.samples) throw ConfigError(csv_path.string() + ": fewer rows than declared");
    obs.validate();
    return obs;
}

inline std::string trace_csv(const EstimationResult& r)
{
    std::ostringstream out;
    out << "iter,best_a,best_objective\n";
    for (const auto& e : r.trace) {
        out << e.iteration << ',' << format_double(e.best(0)) << ',' << format_double(e.best_value) << '\n';
    }
    return out.str();
}

/// Non-finite doubles become null.
inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const EstimationResult& r)
{
    Json j;
    j["estimator"] = r.estimator();
    j["best_objective"] = json_number(r.best_value);
    j["termination"] = to_string(r.termination);
    j["iterations"] = r.iterations;
    j["evaluations"] = r.evaluations;
    j["restarts"] = r.restarts;
    Json trace = Json::array();
    for (const auto& e : r.trace) {
        trace.push_back({{"iter", e.iteration}, {"best_a", e.best(0)}, {"best_objective", json_number(e.best_value)}});
    }
    j["trace"] = std::move(trace);
    return j;
}

}  // namespace slowfast
