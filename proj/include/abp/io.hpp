#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "abp/errors.hpp"
#include "abp/evolve.hpp"
#include "abp/free_energy.hpp"
#include "abp/grid.hpp"
#include "abp/particles.hpp"
#include "abp/schedule.hpp"

namespace abp::io {

using Json = nlohmann::ordered_json;

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s == "nan") return std::nan("");
    if (s == "inf") return HUGE_VAL;
    if (s == "-inf") return -HUGE_VAL;
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("not a number: '" + std::string(s) + "'");
    return v;
}

/// JSON number, or null when not finite.
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline std::ofstream open_out(const std::filesystem::path& path, bool binary = false)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw ConfigError("cannot write " + path.string());
    return out;
}

class CsvWriter {
public:
    CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out), width_(header.size())
    {
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }

    void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

    void row(const std::vector<double>& values)
    {
        if (values.size() != width_) throw ParameterError("CsvWriter: row width does not match the header");
        for (std::size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << format_double(values[i]);
        out_ << '\n';
    }

private:
    std::ostream& out_;
    std::size_t width_;
};

// Grid tables: a "# sizes n0 n1" line, a header, then one row per node in
// row-major order with the node coordinates and the value.

inline void write_grid_csv(std::ostream& out, const GridFunction& f)
{
    const PeriodicGrid& g = f.grid;
    out << "# sizes " << g.points(0) << ' ' << (g.dim() == 2 ? g.points(1) : 1) << '\n';
    CsvWriter w(out, g.dim() == 2 ? std::vector<std::string>{"x1", "x2", "value"} : std::vector<std::string>{"x1", "value"});
    for (int i0 = 0; i0 < g.points(0); ++i0)
        for (int i1 = 0; i1 < g.points(1); ++i1) {
            const double v = f.values[g.index(i0, i1)];
            if (g.dim() == 2) w.row({g.coord(0, i0), g.coord(1, i1), v});
            else w.row({g.coord(0, i0), v});
        }
}

inline void write_grid_csv(const std::filesystem::path& path, const GridFunction& f)
{
    auto out = open_out(path);
    write_grid_csv(out, f);
}

inline GridFunction read_grid_csv(std::istream& in, const std::string& what = "grid table")
{
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(what + ": empty file");
    std::istringstream head(line);
    std::string hash, word;
    int n0 = 0, n1 = 0;
    if (!(head >> hash >> word >> n0 >> n1) || hash != "#" || word != "sizes" || n0 < 1 || n1 < 1)
        throw ConfigError(what + ": first line must be '# sizes n0 n1'");
    const PeriodicGrid g = n1 == 1 ? PeriodicGrid::line(n0) : PeriodicGrid::plane(n0, n1);
    if (!std::getline(in, line)) throw ConfigError(what + ": missing header row");
    GridFunction f(g);
    std::size_t count = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        if (count == f.values.size()) throw ConfigError(what + ": more rows than the sizes line declares");
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) throw ConfigError(what + ": malformed row " + std::to_string(count + 1));
        f.values[count++] = parse_double(std::string_view(line).substr(comma + 1));
    }
    if (count != f.values.size())
        throw ConfigError(what + ": expected " + std::to_string(f.values.size()) + " rows, found " + std::to_string(count));
    return f;
}

inline GridFunction read_grid_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    return read_grid_csv(in, path.string());
}

inline constexpr char grid_magic[8] = {'A', 'B', 'P', 'G', 'R', 'I', 'D', '1'};

/// Binary layout: magic, int32 n0, int32 n1, then n0*n1 native doubles.
inline void write_grid_binary(const std::filesystem::path& path, const GridFunction& f)
{
    auto out = open_out(path, true);
    const std::int32_t sizes[2] = {f.grid.points(0), f.grid.dim() == 2 ? f.grid.points(1) : 1};
    out.write(grid_magic, sizeof grid_magic);
    out.write(reinterpret_cast<const char*>(sizes), sizeof sizes);
    out.write(reinterpret_cast<const char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double)));
}

inline GridFunction read_grid_binary(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    char magic[8];
    std::int32_t sizes[2];
    in.read(magic, sizeof magic);
    in.read(reinterpret_cast<char*>(sizes), sizeof sizes);
    if (!in || std::memcmp(magic, grid_magic, sizeof magic) != 0 || sizes[0] < 1 || sizes[1] < 1)
        throw ConfigError(path.string() + ": not a grid file");
    const PeriodicGrid g = sizes[1] == 1 ? PeriodicGrid::line(sizes[0]) : PeriodicGrid::plane(sizes[0], sizes[1]);
    GridFunction f(g);
    in.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(double)));
    if (!in) throw ConfigError(path.string() + ": truncated");
    return f;
}

inline void write_ensemble_csv(std::ostream& out, const ParticleEnsemble& e)
{
    std::vector<std::string> header{"index", "x1"};
    if (e.dim() == 2) header.push_back("x2");
    if (e.has_velocities()) {
        header.push_back("v1");
        if (e.dim() == 2) header.push_back("v2");
    }
    CsvWriter w(out, header);
    const auto d = static_cast<std::size_t>(e.dim());
    std::vector<double> row;
    for (std::size_t i = 0; i < e.size(); ++i) {
        row.assign(1, static_cast<double>(i));
        for (std::size_t a = 0; a < d; ++a) row.push_back(e.positions()[i * d + a]);
        if (e.has_velocities())
            for (std::size_t a = 0; a < d; ++a) row.push_back(e.velocities()[i * d + a]);
        w.row(row);
    }
}

inline void write_trace_csv(std::ostream& out, const DiagnosticsTrace& trace)
{
    const bool env = !trace.rows.empty() && trace.rows.front().envelope.has_value();
    const bool ext = !trace.rows.empty() && trace.rows.front().extended_free_energy.has_value();
    std::vector<std::string> header{"t", "alpha", "free_energy", "free_energy_star", "lower", "excess", "upper", "fisher", "tv"};
    if (env) header.push_back("envelope");
    if (ext) header.push_back("extended_free_energy");
    CsvWriter w(out, header);
    for (const auto& r : trace.rows) {
        std::vector<double> row{r.t, r.alpha, r.free_energy, r.free_energy_star, r.sandwich.lower, r.sandwich.middle, r.sandwich.upper,
                                r.fisher, r.tv};
        if (env) row.push_back(r.envelope.value_or(std::nan("")));
        if (ext) row.push_back(r.extended_free_energy.value_or(std::nan("")));
        w.row(row);
    }
}

inline void write_particle_trace_csv(std::ostream& out, const std::vector<ParticleRow>& rows, bool envelope)
{
    std::vector<std::string> header{"t", "alpha", "tv_kde", "tv_kde_smoothed", "free_energy_est", "ess_x1"};
    if (envelope) header.push_back("envelope");
    CsvWriter w(out, header);
    for (const auto& r : rows) {
        std::vector<double> row{r.t, r.alpha, r.diag.tv_kde, r.diag.tv_kde_smoothed, r.diag.free_energy_est, r.diag.ess_x1};
        if (envelope) row.push_back(envelope_statistic(r.t, r.diag.tv_kde_smoothed));
        w.row(row);
    }
}

inline Json to_json(const FixedPointReport& r)
{
    Json j;
    j["iterations"] = r.iterations;
    j["final_residual_sup"] = number(r.final_residual_sup);
    j["tolerance"] = r.tolerance;
    j["damping"] = r.damping_used;
    j["converged"] = r.converged;
    Json trace = Json::array();
    for (double v : r.residual_trace) trace.push_back(number(v));
    j["residual_trace"] = std::move(trace);
    return j;
}

inline Json to_json(const RateFit& f)
{
    Json j;
    j["slope"] = number(f.slope);
    j["intercept"] = number(f.intercept);
    j["r_squared"] = number(f.r_squared);
    j["window"] = Json::array({f.window.first, f.window.second});
    j["points"] = f.points;
    return j;
}

inline void write_json(const std::filesystem::path& path, const Json& j)
{
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

inline Json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace abp::io
