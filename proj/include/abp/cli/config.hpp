#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "abp/errors.hpp"
#include "abp/free_energy.hpp"
#include "abp/io.hpp"
#include "abp/schedule.hpp"

namespace abp::cli {

struct ProblemConfig {
    std::string potential = "cosine-1d";  // cosine-1d, double-well-1d, coupled-2d, preimage-2d, file
    std::vector<double> coefficients;
    int points = 256;  // per axis
    std::string file;

    bool operator==(const ProblemConfig&) const = default;
};

struct SolverConfig {
    double tol = 1e-10;
    int max_iter = 10000;
    std::optional<double> damping;

    bool operator==(const SolverConfig&) const = default;
};

struct DynamicsConfig {
    std::string integrator = "grid-overdamped";  // grid-overdamped, grid-kinetic, particles-overdamped, particles-kinetic
    std::optional<double> dt;
    double t_end = 1.0;
    int record_every = 1;
    std::string initial = "uniform";  // uniform, kernel, fixed-point
    double initial_width = 0.05;      // variance of the kernel start
    int modes = 32;
    std::optional<double> v_max;
    double sandwich_tol = 1e-9;

    bool is_particles() const { return integrator.starts_with("particles-"); }
    bool operator==(const DynamicsConfig&) const = default;
};

struct ScheduleConfig {
    std::string kind = "constant";  // constant, logarithmic
    double a_coef = 0.0;
    std::optional<double> b_offset;  // default: params.alpha

    bool operator==(const ScheduleConfig&) const = default;
};

struct ParticlesConfig {
    std::uint64_t n = 10000;
    std::optional<std::uint64_t> seed;
    int bias_points = 256;

    bool operator==(const ParticlesConfig&) const = default;
};

struct SweepConfig {
    std::string axis = "epsilon";  // epsilon, alpha
    std::vector<double> values;
    std::optional<double> slope_min;
    std::optional<double> slope_max;

    bool operator==(const SweepConfig&) const = default;
};

struct ToyConfig {
    double sigma0_sq = 1.0;
    double alpha = 1.0;
    double epsilon = 1e-2;
    std::vector<double> epsilon_values{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6};
    std::vector<double> alpha_values{1.0, 10.0, 100.0, 1000.0};
    std::vector<double> starts{0.05, 0.5, 1.0};
    double limit_tol = 1e-4;
    double agreement_tol = 1e-12;

    bool operator==(const ToyConfig&) const = default;
};

struct OutputConfig {
    std::string directory = "runs/out";
    std::vector<std::string> formats{"csv"};

    bool operator==(const OutputConfig&) const = default;
};

struct ExperimentConfig {
    ProblemConfig problem;
    AbpParams params{0.5, 1.0, 1e-2, 1};
    SolverConfig solver;
    DynamicsConfig dynamics;
    ScheduleConfig schedule;
    ParticlesConfig particles;
    SweepConfig sweep;
    ToyConfig toy;
    OutputConfig output;

    bool operator==(const ExperimentConfig& o) const
    {
        return problem == o.problem && params.alpha == o.params.alpha && params.beta == o.params.beta &&
               params.epsilon == o.params.epsilon && params.m == o.params.m && solver == o.solver && dynamics == o.dynamics &&
               schedule == o.schedule && particles == o.particles && sweep == o.sweep && toy == o.toy && output == o.output;
    }

    AlphaSchedule alpha_schedule() const
    {
        if (schedule.kind == "constant") return AlphaSchedule::constant(params.alpha);
        return AlphaSchedule::logarithmic(schedule.a_coef, schedule.b_offset.value_or(params.alpha));
    }

    FixedPointOptions fixed_point_options() const
    {
        FixedPointOptions o;
        o.tol = solver.tol;
        o.max_iter = solver.max_iter;
        o.damping = solver.damping;
        return o;
    }
};

namespace detail {

using Tree = boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& schema()
{
    static const std::map<std::string, std::set<std::string>> s{
        {"problem", {"potential", "coefficients", "points", "file"}},
        {"params", {"alpha", "beta", "epsilon", "m"}},
        {"solver", {"tol", "max_iter", "damping"}},
        {"dynamics", {"integrator", "dt", "t_end", "record_every", "initial", "initial_width", "modes", "v_max", "sandwich_tol"}},
        {"schedule", {"kind", "a_coef", "b_offset"}},
        {"particles", {"n", "seed", "bias_points"}},
        {"sweep", {"axis", "values", "slope_min", "slope_max"}},
        {"toy", {"sigma0_sq", "alpha", "epsilon", "epsilon_values", "alpha_values", "starts", "limit_tol", "agreement_tol"}},
        {"output", {"directory", "formats"}},
    };
    return s;
}

class Reader {
public:
    explicit Reader(const Tree& t) : t_(t) {}

    std::optional<std::string> raw(const std::string& sec, const std::string& key) const
    {
        const auto s = t_.get_child_optional(sec);
        if (!s) return std::nullopt;
        const auto v = s->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return trim(*v);
    }

    void number(const std::string& sec, const std::string& key, double& out) const
    {
        if (auto v = raw(sec, key)) out = parse(sec, key, *v);
    }
    void number(const std::string& sec, const std::string& key, std::optional<double>& out) const
    {
        if (auto v = raw(sec, key)) out = parse(sec, key, *v);
    }
    template <class Int>
    void integer(const std::string& sec, const std::string& key, Int& out) const
    {
        if (auto v = raw(sec, key)) out = parse_int<Int>(sec, key, *v);
    }
    template <class Int>
    void integer(const std::string& sec, const std::string& key, std::optional<Int>& out) const
    {
        if (auto v = raw(sec, key)) out = parse_int<Int>(sec, key, *v);
    }
    void text(const std::string& sec, const std::string& key, std::string& out) const
    {
        if (auto v = raw(sec, key)) out = *v;
    }
    void list(const std::string& sec, const std::string& key, std::vector<double>& out) const
    {
        if (auto v = raw(sec, key)) {
            out.clear();
            for (const auto& item : split(*v)) out.push_back(parse(sec, key, item));
        }
    }
    void words(const std::string& sec, const std::string& key, std::vector<std::string>& out) const
    {
        if (auto v = raw(sec, key)) out = split(*v);
    }

    static std::string trim(const std::string& s)
    {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return {};
        return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
    }

    static std::vector<std::string> split(const std::string& s)
    {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (!item.empty()) out.push_back(item);
        }
        return out;
    }

private:
    static double parse(const std::string& sec, const std::string& key, const std::string& v)
    {
        try {
            return io::parse_double(v);
        } catch (const ConfigError&) {
            throw ConfigError(sec + "." + key + ": expected a number, got '" + v + "'");
        }
    }

    template <class Int>
    static Int parse_int(const std::string& sec, const std::string& key, const std::string& v)
    {
        Int out{};
        const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
        if (r.ec != std::errc() || r.ptr != v.data() + v.size())
            throw ConfigError(sec + "." + key + ": expected an integer, got '" + v + "'");
        return out;
    }

    const Tree& t_;
};

inline void require(bool ok, const std::string& key, const std::string& what)
{
    if (!ok) throw ConfigError(key + ": " + what);
}

inline std::string join(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + io::format_double(v[i]);
    return s;
}

inline std::string join(const std::vector<std::string>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
}

template <class T>
bool one_of(const T& v, std::initializer_list<T> options)
{
    return std::find(options.begin(), options.end(), v) != options.end();
}

}  // namespace detail

/// Rejects anything outside the schema and every out-of-range value.
inline void validate(const ExperimentConfig& c)
{
    using detail::require;
    using std::string;
    const auto& p = c.problem;
    require(detail::one_of<string>(p.potential, {"cosine-1d", "double-well-1d", "coupled-2d", "preimage-2d", "file"}), "problem.potential",
            "unknown potential '" + p.potential + "'");
    require(p.points >= 4 && p.points % 2 == 0, "problem.points", "must be an even number >= 4");
    require(p.potential != "file" || !p.file.empty(), "problem.file", "required when potential = file");
    require(p.potential == "file" || p.file.empty(), "problem.file", "only valid when potential = file");
    const std::size_t max_coefs = p.potential == "coupled-2d" || p.potential == "preimage-2d" ? 3 : 1;
    require(p.coefficients.size() <= max_coefs, "problem.coefficients", "at most " + std::to_string(max_coefs) + " values");
    for (double v : p.coefficients) require(std::isfinite(v), "problem.coefficients", "must be finite");
    require(p.potential != "preimage-2d" || c.params.epsilon > 0.0, "problem.potential", "preimage-2d needs epsilon > 0");

    const auto& a = c.params;
    require(a.alpha >= 0.0, "params.alpha", "must be >= 0");
    require(a.beta > 0.0 && std::isfinite(a.beta), "params.beta", "must be positive");
    require(a.epsilon >= 0.0 && std::isfinite(a.epsilon), "params.epsilon", "must be >= 0");
    require(a.m == 1, "params.m", "only m = 1 is supported");

    require(c.solver.tol > 0.0, "solver.tol", "must be positive");
    require(c.solver.max_iter >= 0, "solver.max_iter", "must be >= 0");
    require(!c.solver.damping || (*c.solver.damping > 0.0 && *c.solver.damping <= 1.0), "solver.damping", "must lie in (0, 1]");

    const auto& d = c.dynamics;
    require(detail::one_of<string>(d.integrator, {"grid-overdamped", "grid-kinetic", "particles-overdamped", "particles-kinetic"}),
            "dynamics.integrator", "unknown integrator '" + d.integrator + "'");
    require(!d.dt || (*d.dt > 0.0 && std::isfinite(*d.dt)), "dynamics.dt", "must be positive");
    require(d.t_end >= 0.0 && std::isfinite(d.t_end), "dynamics.t_end", "must be >= 0");
    require(d.record_every >= 1, "dynamics.record_every", "must be >= 1");
    require(detail::one_of<string>(d.initial, {"uniform", "kernel", "fixed-point"}), "dynamics.initial", "unknown initial state '" + d.initial + "'");
    require(d.initial_width > 0.0, "dynamics.initial_width", "must be positive");
    require(d.modes >= 2, "dynamics.modes", "must be >= 2");
    require(!d.v_max || *d.v_max > 0.0, "dynamics.v_max", "must be positive");
    require(d.sandwich_tol >= 0.0, "dynamics.sandwich_tol", "must be >= 0");
    require(d.integrator != "grid-kinetic" || (p.potential != "coupled-2d" && p.potential != "preimage-2d"), "dynamics.integrator",
            "grid-kinetic is one-dimensional");

    require(detail::one_of<string>(c.schedule.kind, {"constant", "logarithmic"}), "schedule.kind", "unknown schedule '" + c.schedule.kind + "'");
    require(std::isfinite(c.schedule.a_coef), "schedule.a_coef", "must be finite");
    require(c.schedule.kind == "logarithmic" || (c.schedule.a_coef == 0.0 && !c.schedule.b_offset), "schedule.a_coef",
            "only valid for a logarithmic schedule");

    require(c.particles.n >= 1, "particles.n", "must be >= 1");
    require(c.particles.bias_points >= 4 && c.particles.bias_points % 2 == 0, "particles.bias_points", "must be an even number >= 4");
    require(!d.is_particles() || c.particles.seed.has_value(), "particles.seed", "required for particle integrators");

    const auto& s = c.sweep;
    require(detail::one_of<string>(s.axis, {"epsilon", "alpha"}), "sweep.axis", "must be epsilon or alpha");
    for (double v : s.values) require(v > 0.0 && std::isfinite(v), "sweep.values", "must be positive");
    require(std::is_sorted(s.values.begin(), s.values.end()), "sweep.values", "must be sorted ascending");

    const auto& t = c.toy;
    require(t.sigma0_sq > 0.0, "toy.sigma0_sq", "must be positive");
    require(t.alpha >= 0.0 && std::isfinite(t.alpha), "toy.alpha", "must be >= 0");
    require(t.epsilon >= 0.0, "toy.epsilon", "must be >= 0");
    for (double v : t.epsilon_values) require(v >= 0.0, "toy.epsilon_values", "must be >= 0");
    for (double v : t.alpha_values) require(v >= 0.0, "toy.alpha_values", "must be >= 0");
    require(!t.starts.empty(), "toy.starts", "need at least one start");
    for (double v : t.starts) require(v > 0.0, "toy.starts", "must be positive");

    require(!c.output.directory.empty(), "output.directory", "must not be empty");
    require(!c.output.formats.empty(), "output.formats", "need at least one format");
    for (const auto& f : c.output.formats) require(f == "csv" || f == "binary", "output.formats", "unknown format '" + f + "'");
}

inline ExperimentConfig parse_config(std::istream& in, const std::string& name = "config")
{
    detail::Tree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(name + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    const auto& schema = detail::schema();
    for (const auto& [sec, body] : tree) {
        const auto it = schema.find(sec);
        if (it == schema.end()) {
            if (!body.data().empty()) throw ConfigError(sec + ": keys must live inside a section");
            throw ConfigError(sec + ": unknown section");
        }
        for (const auto& [key, value] : body)
            if (!it->second.contains(key)) throw ConfigError(sec + "." + key + ": unknown key");
    }

    ExperimentConfig c;
    const detail::Reader r(tree);
    r.text("problem", "potential", c.problem.potential);
    r.list("problem", "coefficients", c.problem.coefficients);
    r.integer("problem", "points", c.problem.points);
    r.text("problem", "file", c.problem.file);
    r.number("params", "alpha", c.params.alpha);
    r.number("params", "beta", c.params.beta);
    r.number("params", "epsilon", c.params.epsilon);
    r.integer("params", "m", c.params.m);
    r.number("solver", "tol", c.solver.tol);
    r.integer("solver", "max_iter", c.solver.max_iter);
    r.number("solver", "damping", c.solver.damping);
    r.text("dynamics", "integrator", c.dynamics.integrator);
    r.number("dynamics", "dt", c.dynamics.dt);
    r.number("dynamics", "t_end", c.dynamics.t_end);
    r.integer("dynamics", "record_every", c.dynamics.record_every);
    r.text("dynamics", "initial", c.dynamics.initial);
    r.number("dynamics", "initial_width", c.dynamics.initial_width);
    r.integer("dynamics", "modes", c.dynamics.modes);
    r.number("dynamics", "v_max", c.dynamics.v_max);
    r.number("dynamics", "sandwich_tol", c.dynamics.sandwich_tol);
    r.text("schedule", "kind", c.schedule.kind);
    r.number("schedule", "a_coef", c.schedule.a_coef);
    r.number("schedule", "b_offset", c.schedule.b_offset);
    r.integer("particles", "n", c.particles.n);
    r.integer("particles", "seed", c.particles.seed);
    r.integer("particles", "bias_points", c.particles.bias_points);
    r.text("sweep", "axis", c.sweep.axis);
    r.list("sweep", "values", c.sweep.values);
    r.number("sweep", "slope_min", c.sweep.slope_min);
    r.number("sweep", "slope_max", c.sweep.slope_max);
    r.number("toy", "sigma0_sq", c.toy.sigma0_sq);
    r.number("toy", "alpha", c.toy.alpha);
    r.number("toy", "epsilon", c.toy.epsilon);
    r.list("toy", "epsilon_values", c.toy.epsilon_values);
    r.list("toy", "alpha_values", c.toy.alpha_values);
    r.list("toy", "starts", c.toy.starts);
    r.number("toy", "limit_tol", c.toy.limit_tol);
    r.number("toy", "agreement_tol", c.toy.agreement_tol);
    r.text("output", "directory", c.output.directory);
    r.words("output", "formats", c.output.formats);
    return c;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    return parse_config(in, path.string());
}

/// Canonical INI form with every field spelled out; parsing it gives back an
/// equal config.
inline std::string echo(const ExperimentConfig& c)
{
    std::ostringstream o;
    auto num = [](double v) { return io::format_double(v); };
    o << "[problem]\npotential = " << c.problem.potential << '\n';
    if (!c.problem.coefficients.empty()) o << "coefficients = " << detail::join(c.problem.coefficients) << '\n';
    o << "points = " << c.problem.points << '\n';
    if (!c.problem.file.empty()) o << "file = " << c.problem.file << '\n';
    o << "\n[params]\nalpha = " << num(c.params.alpha) << "\nbeta = " << num(c.params.beta) << "\nepsilon = " << num(c.params.epsilon)
      << "\nm = " << c.params.m << '\n';
    o << "\n[solver]\ntol = " << num(c.solver.tol) << "\nmax_iter = " << c.solver.max_iter << '\n';
    if (c.solver.damping) o << "damping = " << num(*c.solver.damping) << '\n';
    const auto& d = c.dynamics;
    o << "\n[dynamics]\nintegrator = " << d.integrator << '\n';
    if (d.dt) o << "dt = " << num(*d.dt) << '\n';
    o << "t_end = " << num(d.t_end) << "\nrecord_every = " << d.record_every << "\ninitial = " << d.initial
      << "\ninitial_width = " << num(d.initial_width) << "\nmodes = " << d.modes << '\n';
    if (d.v_max) o << "v_max = " << num(*d.v_max) << '\n';
    o << "sandwich_tol = " << num(d.sandwich_tol) << '\n';
    o << "\n[schedule]\nkind = " << c.schedule.kind << "\na_coef = " << num(c.schedule.a_coef) << '\n';
    if (c.schedule.b_offset) o << "b_offset = " << num(*c.schedule.b_offset) << '\n';
    o << "\n[particles]\nn = " << c.particles.n << '\n';
    if (c.particles.seed) o << "seed = " << *c.particles.seed << '\n';
    o << "bias_points = " << c.particles.bias_points << '\n';
    o << "\n[sweep]\naxis = " << c.sweep.axis << '\n';
    if (!c.sweep.values.empty()) o << "values = " << detail::join(c.sweep.values) << '\n';
    if (c.sweep.slope_min) o << "slope_min = " << num(*c.sweep.slope_min) << '\n';
    if (c.sweep.slope_max) o << "slope_max = " << num(*c.sweep.slope_max) << '\n';
    const auto& t = c.toy;
    o << "\n[toy]\nsigma0_sq = " << num(t.sigma0_sq) << "\nalpha = " << num(t.alpha) << "\nepsilon = " << num(t.epsilon)
      << "\nepsilon_values = " << detail::join(t.epsilon_values) << "\nalpha_values = " << detail::join(t.alpha_values)
      << "\nstarts = " << detail::join(t.starts) << "\nlimit_tol = " << num(t.limit_tol) << "\nagreement_tol = " << num(t.agreement_tol)
      << '\n';
    o << "\n[output]\ndirectory = " << c.output.directory << "\nformats = " << detail::join(c.output.formats) << '\n';
    return o.str();
}

}  // namespace abp::cli
